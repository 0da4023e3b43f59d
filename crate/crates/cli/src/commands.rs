//! Subcommand implementations and report writers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use usfft::detect::{usfft, BlackBox, SampleCounts};
use usfft::pde::{Mesh, PdeBlackBox, PdeSolver};
use usfft::post::{
    baseline_index_set, error_report, expectation, fixed_set_approximation, gsi_by_order, mc_expectation,
    BaselineKind, ErrorReport, ParameterDistribution,
};
use usfft::{Approximant, Frequency};

use crate::config::{ExperimentConfig, Resolved};
use crate::{CliError, Command, PostCommand};

/// Offsets added to the run seed for the test draws and the Monte-Carlo draws.
pub const ERROR_SEED_OFFSET: u64 = 1;
pub const MC_SEED_OFFSET: u64 = 2;

pub const ARCHIVE_FILE: &str = "approximant.txt";

pub fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run { config, seed, out } => {
            let r = load(&config, seed)?;
            let dir = output_dir(&r, out)?;
            run(&r, &dir).map(|_| ())
        }
        Command::Baseline {
            config,
            set,
            bound,
            q,
            seed,
            out,
        } => {
            let kind = BaselineKind::parse(&set, q).map_err(|e| CliError::Validation(e.to_string()))?;
            let r = load(&config, seed)?;
            let dir = output_dir(&r, out)?;
            baseline(&r, kind, bound, &dir).map(|_| ())
        }
        Command::Post { what } => post(what),
        Command::Selftest {
            seed,
            trials,
            inject_below_threshold,
        } => crate::selftest::run(seed, trials, inject_below_threshold),
    }
}

fn load(path: &Path, seed: Option<u64>) -> Result<Resolved, CliError> {
    let (cfg, sha) = ExperimentConfig::load(path)?;
    let mut r = cfg.resolve(sha)?;
    if let Some(s) = seed {
        r.detection.seed = s;
    }
    Ok(r)
}

fn output_dir(r: &Resolved, out: Option<PathBuf>) -> Result<PathBuf, CliError> {
    let dir = out
        .or_else(|| r.output.clone())
        .ok_or_else(|| CliError::Validation("output: no output directory (set `output` or pass --out)".into()))?;
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

#[derive(Clone, Debug, Serialize)]
pub struct SampleSummary {
    pub step1: usize,
    pub step2: usize,
    pub step3: usize,
    pub total: usize,
    /// Distinct PDE solves counted by the black-box cache.
    pub distinct_solves: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ErrorSummary {
    pub n_test: usize,
    pub max_err1: f64,
    pub max_err2: f64,
    pub max_err_inf: f64,
    pub max_ratio_inf_2: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GsiSummary {
    pub size: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub model: String,
    pub d_y: usize,
    pub mesh_n: usize,
    pub outputs: usize,
    pub frequencies: usize,
    /// `|Ĩ| / s`; absent for baseline runs.
    pub q: Option<f64>,
    pub samples: SampleSummary,
    pub errors: ErrorSummary,
    pub gsi: BTreeMap<usize, GsiSummary>,
    pub one_dimensional_sizes: Vec<usize>,
    pub candidate_sizes: Vec<usize>,
    pub coupled_sizes: Vec<usize>,
    pub cover_lattices: usize,
    pub cover_nodes: u64,
}

/// Everything a run produced, for callers that want it in memory.
pub struct RunOutcome {
    pub approximant: Approximant,
    pub errors: ErrorReport,
    pub summary: Summary,
}

fn csv_header(r: &Resolved) -> String {
    format!("# config_sha256={} seed={}\n", r.sha256, r.detection.seed)
}

fn solver_for(r: &Resolved) -> Arc<PdeSolver> {
    Arc::new(PdeSolver::new(r.model.clone(), r.mesh, r.solver))
}

/// Detection run: archive plus the report bundle in `dir`.
pub fn run(r: &Resolved, dir: &Path) -> Result<RunOutcome, CliError> {
    let solver = solver_for(r);
    let bb = PdeBlackBox::new(solver.clone(), r.periodization)?;
    let start = Instant::now();
    let det = usfft(&bb, &r.detection, r.periodization)?;
    log::info!(
        "detection: {} frequencies, {} distinct solves in {:.1?}",
        det.approximant.frequencies().len(),
        bb.distinct_solves(),
        start.elapsed()
    );
    let rep = &det.report;
    let (mut summary, errors) = bundle(r, dir, &det.approximant, &solver, rep.samples, bb.distinct_solves(), "run")?;
    summary.q = Some(rep.q);
    summary.one_dimensional_sizes = rep.one_dimensional_sizes.clone();
    summary.candidate_sizes = rep.candidate_sizes.clone();
    summary.coupled_sizes = rep.coupled_sizes.clone();
    summary.cover_lattices = rep.cover_lattices;
    summary.cover_nodes = rep.cover_nodes;
    write_summary(dir, &summary)?;
    Ok(RunOutcome {
        approximant: det.approximant,
        errors,
        summary,
    })
}

/// Fixed-set run on a standard index set. The zero frequency is always added,
/// so the mean is represented even for the axis cross.
pub fn baseline(r: &Resolved, kind: BaselineKind, bound: u32, dir: &Path) -> Result<RunOutcome, CliError> {
    let d = r.model.d_y();
    let mut set = baseline_index_set(kind, bound, d)?;
    set.insert(Frequency::zero(d))?;
    let solver = solver_for(r);
    let bb = PdeBlackBox::new(solver.clone(), r.periodization)?;
    let (app, counts) = fixed_set_approximation(&bb, &set, r.periodization, r.detection.seed)?;
    let (summary, errors) = bundle(r, dir, &app, &solver, counts, bb.distinct_solves(), "baseline")?;
    write_summary(dir, &summary)?;
    Ok(RunOutcome {
        approximant: app,
        errors,
        summary,
    })
}

fn error_seed(r: &Resolved) -> u64 {
    r.detection.seed.wrapping_add(ERROR_SEED_OFFSET)
}

fn bundle(
    r: &Resolved,
    dir: &Path,
    app: &Approximant,
    solver: &Arc<PdeSolver>,
    samples: SampleCounts,
    distinct: usize,
    command: &str,
) -> Result<(Summary, ErrorReport), CliError> {
    // Reports use archive order so `post` reproduces them exactly.
    let app = &app.canonical();
    app.write_archive(&dir.join(ARCHIVE_FILE))?;
    let header = csv_header(r);
    let mesh = r.mesh;

    let reference = PdeBlackBox::reference(solver.clone());
    let errors = error_report(app, &reference, r.n_test, error_seed(r))?;
    std::fs::write(dir.join("errors.csv"), header.clone() + &errors_csv(&mesh, &errors))?;

    std::fs::write(dir.join("expectation.csv"), header.clone() + &expectation_csv(app))?;
    std::fs::write(dir.join("gsi.csv"), header.clone() + &gsi_csv(app)?)?;

    if r.n_mc > 0 {
        let dist = ParameterDistribution::for_periodization(&r.periodization);
        let mc = mc_expectation(&reference, dist, r.n_mc, r.detection.seed.wrapping_add(MC_SEED_OFFSET))?;
        let e = expectation(app);
        let mut s = String::from("g,x1,x2,expectation,mc_mean,mc_stderr\n");
        for g in 0..app.outputs() {
            let [x1, x2] = mesh.node_coords(g);
            writeln!(s, "{g},{x1},{x2},{:e},{:e},{:e}", e.values[g], mc.mean[g], mc.std_error[g]).unwrap();
        }
        std::fs::write(dir.join("mc.csv"), header.clone() + &s)?;
    }

    let gsi = gsi_by_order(app)?
        .into_iter()
        .map(|(l, (size, rho))| {
            let n = rho.len().max(1) as f64;
            (
                l,
                GsiSummary {
                    size,
                    min: rho.iter().copied().fold(f64::INFINITY, f64::min),
                    max: rho.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    mean: rho.iter().sum::<f64>() / n,
                },
            )
        })
        .collect();
    let max_ratio = errors
        .err2
        .iter()
        .zip(&errors.err_inf)
        .filter(|(e2, _)| **e2 > 0.0)
        .map(|(e2, ei)| ei / e2)
        .fold(0.0, f64::max);
    let summary = Summary {
        command: command.into(),
        config_sha256: r.sha256.clone(),
        seed: r.detection.seed,
        model: r.model.kind().name().into(),
        d_y: r.model.d_y(),
        mesh_n: mesh.cells_per_side(),
        outputs: app.outputs(),
        frequencies: app.frequencies().len(),
        q: None,
        samples: SampleSummary {
            step1: samples.step1,
            step2: samples.step2,
            step3: samples.step3,
            total: samples.total(),
            distinct_solves: distinct,
        },
        errors: ErrorSummary {
            n_test: errors.n_test,
            max_err1: errors.max_err1(),
            max_err2: errors.max_err2(),
            max_err_inf: errors.max_err_inf(),
            max_ratio_inf_2: max_ratio,
        },
        gsi,
        one_dimensional_sizes: Vec::new(),
        candidate_sizes: Vec::new(),
        coupled_sizes: Vec::new(),
        cover_lattices: 0,
        cover_nodes: 0,
    };
    Ok((summary, errors))
}

fn write_summary(dir: &Path, s: &Summary) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(s).expect("summary serializes");
    std::fs::write(dir.join("summary.json"), text + "\n")?;
    Ok(())
}

pub fn errors_csv(mesh: &Mesh, e: &ErrorReport) -> String {
    let mut s = String::from("g,x1,x2,err1,err2,errinf\n");
    for g in 0..e.err1.len() {
        let [x1, x2] = mesh.node_coords(g);
        writeln!(s, "{g},{x1},{x2},{:e},{:e},{:e}", e.err1[g], e.err2[g], e.err_inf[g]).unwrap();
    }
    s
}

/// `g,expectation,imaginary`; depends on the approximant only.
pub fn expectation_csv(app: &Approximant) -> String {
    let e = expectation(app);
    let mut s = String::from("g,expectation,imaginary\n");
    for g in 0..app.outputs() {
        writeln!(s, "{g},{:e},{:e}", e.values[g], e.imaginary[g]).unwrap();
    }
    s
}

/// One column `J<l>` per nonempty class plus their sum; depends on the
/// approximant only.
pub fn gsi_csv(app: &Approximant) -> Result<String, CliError> {
    let by = gsi_by_order(app)?;
    let mut s = String::from("g");
    for (l, (size, _)) in &by {
        write!(s, ",J{l}[{size}]").unwrap();
    }
    s.push_str(",sum\n");
    for g in 0..app.outputs() {
        write!(s, "{g}").unwrap();
        let mut total = 0.0;
        for (_, rho) in by.values() {
            write!(s, ",{:e}", rho[g]).unwrap();
            total += rho[g];
        }
        writeln!(s, ",{total:e}").unwrap();
    }
    Ok(s)
}

fn archive_header(path: &Path) -> Result<(Approximant, String), CliError> {
    let bytes = std::fs::read(path)?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::Validation(format!("archive {} is not UTF-8", path.display())))?;
    let app = Approximant::from_archive(&text)?;
    Ok((app, format!("# archive_sha256={}\n", hex::encode(Sha256::digest(&bytes)))))
}

fn emit(out: Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn post(what: PostCommand) -> Result<(), CliError> {
    match what {
        PostCommand::Expectation { archive, out } => {
            let (app, header) = archive_header(&archive)?;
            emit(out, &(header + &expectation_csv(&app)))
        }
        PostCommand::Gsi { archive, out } => {
            let (app, header) = archive_header(&archive)?;
            emit(out, &(header + &gsi_csv(&app)?))
        }
        PostCommand::Evaluate { archive, points, out } => {
            let (app, header) = archive_header(&archive)?;
            let text = std::fs::read_to_string(&points)?;
            let d = app.dim();
            let mut ys = Vec::new();
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let row: Vec<f64> = line
                    .split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| CliError::Validation(format!("{} line {}: {e}", points.display(), i + 1)))?;
                if row.len() != d {
                    return Err(CliError::Validation(format!(
                        "{} line {}: expected {d} values, got {}",
                        points.display(),
                        i + 1,
                        row.len()
                    )));
                }
                ys.extend(row);
            }
            let vals = app.evaluate(&ys)?;
            let mut s = header + "point,g,re,im\n";
            for j in 0..vals.cols() {
                for g in 0..vals.rows() {
                    let v = vals.get(g, j);
                    writeln!(s, "{j},{g},{:e},{:e}", v.re, v.im).unwrap();
                }
            }
            emit(out, &s)
        }
    }
}

/// Values of the reference solver at `ys`, for spot checks.
pub fn reference_values(r: &Resolved, ys: &[f64]) -> Result<usfft::CMatrix, CliError> {
    Ok(PdeBlackBox::reference(solver_for(r)).evaluate(ys)?)
}

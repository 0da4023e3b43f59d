//! Acceptance suite. Every criterion runs even when an earlier one fails; one
//! PASS/FAIL line is printed to stderr per criterion and the test fails if any did.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use tempfile::TempDir;

use usfft::lattice::delta_opt;
use usfft::pde::{diag_index, zeta, Fem, LinearSolver, Mesh, PdeBlackBox, PdeModel, PdeSolver};
use usfft::periodize::{lognormal_inverse, tent_inverse};
use usfft::post::{baseline_index_set, d_factor, d_factor_shifted, expectation, mc_expectation, BaselineKind, ParameterDistribution};
use usfft::special::gauss_legendre;
use usfft::Complex64;
use usfft_cli::commands::{self, RunOutcome};
use usfft_cli::config::{ExperimentConfig, Resolved};
use usfft_cli::selftest::{lattice_suite, recovery_trial};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn resolve(json: &str) -> Resolved {
    ExperimentConfig::from_json(json).unwrap().resolve("acceptance".into()).unwrap()
}

fn periodic_config(s: usize) -> String {
    format!(
        r#"{{
            "model": {{"kind": "periodic", "d_y": 5, "mu": 1.2, "c": 0.4}},
            "mesh": {{"n": 16}},
            "detection": {{"N": 32, "s": {s}, "seed": 1}},
            "post": {{"n_test": 1000}}
        }}"#
    )
}

/// The periodic desk runs shared by several criteria.
struct PeriodicRuns {
    s: Vec<usize>,
    runs: Vec<RunOutcome>,
    seconds: f64,
    _dir: TempDir,
}

fn periodic_runs() -> PeriodicRuns {
    let dir = TempDir::new().unwrap();
    let s = vec![25, 50, 100, 200];
    let start = Instant::now();
    let runs = s
        .iter()
        .map(|&s| {
            let out = dir.path().join(format!("s{s}"));
            std::fs::create_dir_all(&out).unwrap();
            commands::run(&resolve(&periodic_config(s)), &out).unwrap()
        })
        .collect();
    PeriodicRuns {
        s,
        runs,
        seconds: start.elapsed().as_secs_f64(),
        _dir: dir,
    }
}

fn c1_exact_recovery() -> Outcome {
    let start = Instant::now();
    let mut exact = 0;
    for seed in 0..20 {
        exact += recovery_trial(seed, None).unwrap().0.exact() as usize;
    }
    let t = start.elapsed().as_secs_f64();
    check(exact >= 18 && t < 60.0, format!("exact recovery in {exact}/20 trials, {t:.1} s"))
}

fn c2_lattices() -> Outcome {
    let passed = lattice_suite(2024, 100).unwrap();
    check(passed == 100, format!("{passed}/100 fixtures injective and inverted to 1e-10"))
}

/// Smallest cyclic distance from the nodes `{n/M}` to the poles `Δ` and `Δ + 1/2`.
fn pole_distance(m: u64, delta: f64) -> f64 {
    let cyc = |a: f64, b: f64| {
        let d = (a - b).rem_euclid(1.0);
        d.min(1.0 - d)
    };
    (0..m)
        .map(|n| {
            let x = n as f64 / m as f64;
            cyc(x, delta).min(cyc(x, delta + 0.5))
        })
        .fold(f64::INFINITY, f64::min)
}

fn c3_delta_opt() -> Outcome {
    let primes: Vec<u64> = (3..=97u64).filter(|&p| (2..p).all(|q| p % q != 0)).collect();
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    for &m in &primes {
        let step = 1.0 / (64.0 * m as f64);
        let (mut best_delta, mut best) = (0.0, f64::NEG_INFINITY);
        let mut j = 1;
        while (j as f64) * step < 1.0 / (2.0 * m as f64) {
            let delta = j as f64 * step;
            let v = pole_distance(m, delta);
            if v > best {
                (best_delta, best) = (delta, v);
            }
            j += 1;
        }
        let opt = delta_opt(m).unwrap();
        let value_err = (best - 1.0 / (4.0 * m as f64)).abs();
        worst = worst.max(value_err);
        if (best_delta - opt).abs() > step * (1.0 + 1e-9) || value_err > 1e-12 {
            bad.push(m);
        }
    }
    check(
        bad.is_empty(),
        format!("{} primes, argmax within one step of 1/(4M), value error {worst:.1e}, failures {bad:?}", primes.len()),
    )
}

/// `∫ f` over `[a, b]` with `panels` ten-point Gauss-Legendre panels.
fn quadrature(f: impl Fn(f64) -> Complex64, a: f64, b: f64, panels: usize) -> Complex64 {
    let (x, w) = gauss_legendre(10);
    let h = (b - a) / panels as f64;
    let mut sum = Complex64::new(0.0, 0.0);
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for (xi, wi) in x.iter().zip(&w) {
            sum += f(mid + 0.5 * h * xi) * (0.5 * h * wi);
        }
    }
    sum
}

fn c4_expectation_factors() -> Outcome {
    let mut worst = 0.0f64;
    let normal = |y: f64| (-0.5 * y * y).exp() / (2.0 * PI).sqrt();
    for k in -64..=64 {
        let tent = quadrature(
            |y| Complex64::from_polar(0.5, 2.0 * PI * k as f64 * tent_inverse(y, -1.0, 1.0).unwrap()),
            -1.0,
            1.0,
            480,
        );
        worst = worst.max((tent - d_factor(k)).norm());
        for delta in [1.0 / 16.0, 1.0 / (4.0 * 4099.0)] {
            let ln = quadrature(
                |y| Complex64::from_polar(normal(y), 2.0 * PI * k as f64 * lognormal_inverse(y, delta)),
                -12.0,
                12.0,
                480,
            );
            worst = worst.max((ln - d_factor_shifted(k, delta)).norm());
        }
    }
    check(worst <= 1e-10, format!("|k| <= 64, max deviation from quadrature {worst:.1e}"))
}

fn c5_table() -> Outcome {
    let m1 = [0, 1, 0, 1, 2, 0, 1, 2, 3, 0, 1, 2, 3, 4];
    let m2 = [1, 0, 2, 1, 0, 3, 2, 1, 0, 4, 3, 2, 1, 0];
    let k = [1, 1, 2, 2, 2, 3, 3, 3, 3, 4, 4, 4, 4, 4];
    let matched = (1..=14)
        .filter(|&j| diag_index(j).unwrap() == (m1[j - 1], m2[j - 1], k[j - 1]))
        .count();
    check(matched == 14, format!("{matched}/14 index triples"))
}

fn c6_ellipticity() -> Outcome {
    let (lo1, hi1) = PdeModel::periodic(1.2, 0.4, 10).unwrap().ellipticity_bounds().unwrap();
    let (lo2, hi2) = PdeModel::periodic(3.6, 1.5, 10).unwrap().ellipticity_bounds().unwrap();
    let err = [lo1 - 0.08690, hi1 - 1.91310, lo2 - 0.31660, hi2 - 1.68340]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    check(
        err <= 5e-6,
        format!("({lo1:.5}, {hi1:.5}) and ({lo2:.5}, {hi2:.5}), max deviation {err:.1e}"),
    )
}

fn c7_fem() -> Outcome {
    let start = Instant::now();
    let errors: Vec<f64> = [8, 16, 32]
        .iter()
        .map(|&n| {
            let mesh = Mesh::new(n).unwrap();
            let fem = Fem::new(mesh, |[x, y]| 2.0 * PI * PI * (PI * x).sin() * (PI * y).sin(), LinearSolver::Cholesky);
            let u = fem.solve(&vec![1.0; fem.centroids().len()]).unwrap();
            u.iter()
                .enumerate()
                .map(|(g, v)| {
                    let [x, y] = mesh.node_coords(g);
                    (v - (PI * x).sin() * (PI * y).sin()).abs()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let t = start.elapsed().as_secs_f64();
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    check(
        orders.iter().all(|&o| o >= 1.9) && t < 5.0,
        format!("orders {:.2} and {:.2}, {t:.2} s", orders[0], orders[1]),
    )
}

fn c8_decay(p: &PeriodicRuns) -> Outcome {
    let e: Vec<f64> = p.runs.iter().map(|r| r.errors.max_err2()).collect();
    let factor = e[0] / e[3];
    let monotone = e.windows(2).all(|w| w[1] <= 1.1 * w[0]);
    let list: Vec<String> = p.s.iter().zip(&e).map(|(s, e)| format!("s={s}: {e:.2e}")).collect();
    check(
        factor >= 2.0 && monotone && p.seconds < 1800.0,
        format!("max err2 {}, decrease x{factor:.0}, {:.0} s", list.join(", "), p.seconds),
    )
}

fn c9_gsi(p: &PeriodicRuns) -> Outcome {
    let app = &p.runs[3].approximant;
    let by = usfft::post::gsi_by_order(app).unwrap();
    let j1 = &by.get(&1).expect("J1 present").1;
    let min_j1 = j1.iter().copied().fold(f64::INFINITY, f64::min);
    let sum_err = (0..app.outputs())
        .map(|g| (by.values().map(|(_, r)| r[g]).sum::<f64>() - 1.0).abs())
        .fold(0.0f64, f64::max);
    check(
        min_j1 >= 0.9 && sum_err <= 1e-10,
        format!("min rho(J1) {min_j1:.4}, max |sum - 1| {sum_err:.1e}"),
    )
}

fn c10_expectation_vs_mc() -> Outcome {
    let json = format!(
        r#"{{
            "model": {{"kind": "affine", "d_y": 5, "mu": 2.0, "c": {}}},
            "mesh": {{"n": 16}},
            "detection": {{"N": 32, "s": 100, "seed": 1}},
            "post": {{"n_test": 1000}}
        }}"#,
        0.9 / zeta(2.0)
    );
    let r = resolve(&json);
    let dir = TempDir::new().unwrap();
    let out = commands::run(&r, dir.path()).unwrap();
    let e = expectation(&out.approximant);
    let solver = Arc::new(PdeSolver::new(r.model.clone(), r.mesh, r.solver));
    let reference = PdeBlackBox::reference(solver);
    let mc = mc_expectation(&reference, ParameterDistribution::for_periodization(&r.periodization), 10_000, 7).unwrap();
    let within = (0..e.values.len())
        .filter(|&g| (e.values[g] - mc.mean[g]).abs() <= 3.0 * mc.std_error[g])
        .count();
    let frac = within as f64 / e.values.len() as f64;
    check(frac >= 0.95, format!("{within}/{} nodes within 3 standard errors", e.values.len()))
}

fn c11_ratio(p: &PeriodicRuns) -> Outcome {
    let worst = p
        .runs
        .iter()
        .flat_map(|r| r.errors.err_inf.iter().zip(&r.errors.err2).map(|(i, t)| i / t))
        .fold(0.0f64, f64::max);
    check(worst <= 50.0, format!("max err_inf/err2 {worst:.1}"))
}

fn c12_baseline(p: &PeriodicRuns) -> Outcome {
    let detected = &p.runs[3];
    let budget = detected.approximant.frequencies().len();
    let d = 5;
    // Axis cross with the zero frequency: 1 + 2·d·bound coefficients.
    let bound = ((budget - 1) / (2 * d)) as u32;
    let size = baseline_index_set(BaselineKind::AxisCross, bound, d).unwrap().len() + 1;
    let dir = TempDir::new().unwrap();
    let base = commands::baseline(&resolve(&periodic_config(200)), BaselineKind::AxisCross, bound, dir.path()).unwrap();
    let (eb, ed) = (base.errors.max_err2(), detected.errors.max_err2());
    check(
        eb >= 2.0 * ed,
        format!("axis cross ({size} coefficients) {eb:.2e} vs detected ({budget}) {ed:.2e}, ratio {:.0}", eb / ed),
    )
}

fn c13_determinism() -> Outcome {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, periodic_config(50)).unwrap();
    let archive = |workers: &str, name: &str| {
        let out = dir.path().join(name);
        let o = Command::new(env!("CARGO_BIN_EXE_usfft"))
            .args(["--workers", workers, "run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(Path::new(&out).join(commands::ARCHIVE_FILE)).unwrap()
    };
    let a = archive("1", "w1");
    let b = archive("2", "w2");
    let c = archive("1", "w1again");
    check(a == b && a == c, format!("archives of {} bytes identical across workers 1, 2 and a rerun", a.len()))
}

/// Writes to the process stderr directly, bypassing the test harness capture,
/// so the lines also appear in a plain `cargo test` log.
fn report(line: String) {
    use std::io::Write;
    let _ = writeln!(std::io::stderr(), "{line}");
}

#[test]
fn acceptance() {
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut guarded = |n: usize, f: &mut dyn FnMut() -> Outcome| {
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let (tag, detail) = match &r {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        report(format!("criterion {n:>2}: {tag}  {detail}"));
        results.push((n, r));
    };

    guarded(1, &mut c1_exact_recovery);
    guarded(2, &mut c2_lattices);
    guarded(3, &mut c3_delta_opt);
    guarded(4, &mut c4_expectation_factors);
    guarded(5, &mut c5_table);
    guarded(6, &mut c6_ellipticity);
    guarded(7, &mut c7_fem);
    let runs = catch_unwind(periodic_runs).ok();
    let shared = |f: fn(&PeriodicRuns) -> Outcome| {
        let runs = runs.as_ref();
        move || runs.map_or_else(|| Err("periodic desk runs failed".into()), f)
    };
    guarded(8, &mut shared(c8_decay));
    guarded(9, &mut shared(c9_gsi));
    guarded(10, &mut c10_expectation_vs_mc);
    guarded(11, &mut shared(c11_ratio));
    guarded(12, &mut shared(c12_baseline));
    guarded(13, &mut c13_determinism);

    let failed: Vec<usize> = results.iter().filter(|(_, r)| r.is_err()).map(|(n, _)| *n).collect();
    report(format!("acceptance: {}/{} criteria passed", results.len() - failed.len(), results.len()));
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

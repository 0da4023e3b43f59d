//! Uniform dimension-incremental sparse FFT over `G` functionals that are
//! sampled together through one [`BlackBox`].

use std::collections::HashSet;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::approximant::Approximant;
use crate::error::{invalid, Error, Result};
use crate::freq::{CandidateGrid, Frequency, FrequencySet};
use crate::lattice::{
    cover_coefficients, forward_fft, lattice_coefficients_rows, CoverOptions, LatticeSearch,
    PoleGuard, Rank1Lattice, DEFAULT_MAX_LATTICE_SIZE,
};
use crate::matrix::CMatrix;
use crate::periodize::Periodization;

/// Failure probabilities of Algorithm A in the theoretical analysis,
/// `γ_A = δ/(3dsG)` and `γ_B = δ/(3d)`. Documentation only: the lattice
/// realizations here are deterministic given their seed and never fail silently.
pub mod theory {
    pub fn gamma_a(delta: f64, d: usize, s: usize, g: usize) -> f64 {
        delta / (3.0 * (d * s * g) as f64)
    }

    pub fn gamma_b(delta: f64, d: usize) -> f64 {
        delta / (3.0 * d as f64)
    }
}

/// A vector-valued function of `d` torus variables with `G` outputs.
///
/// One evaluation at a point yields all `G` values. Implementations must be
/// deterministic: identical points give identical values.
pub trait BlackBox: Sync {
    fn dimension(&self) -> usize;

    fn outputs(&self) -> usize;

    /// `points` is row-major `n × d` on `[0, 1)^d`; returns `G × n`.
    fn evaluate(&self, points: &[f64]) -> Result<CMatrix>;

    /// Values at the nodes of `lat` (leading `lat.dim()` coordinates) with the
    /// fixed `trailing` coordinates appended, in node order. Returns `G × M`.
    fn evaluate_lattice(
        &self,
        lat: &Rank1Lattice,
        trailing: &[f64],
        batch_limit: usize,
    ) -> Result<CMatrix> {
        let m = lat.size() as usize;
        let batch = batch_limit.max(1);
        let mut out = CMatrix::zeros(self.outputs(), m);
        let mut start = 0;
        while start < m {
            let end = (start + batch).min(m);
            let points = lattice_points(lat, trailing, start..end);
            let block = self.evaluate(&points)?;
            for g in 0..out.rows() {
                out.row_mut(g)[start..end].copy_from_slice(block.row(g));
            }
            start = end;
        }
        Ok(out)
    }
}

/// Nodes `range` of `lat` with `trailing` appended, row-major.
pub fn lattice_points(lat: &Rank1Lattice, trailing: &[f64], range: std::ops::Range<usize>) -> Vec<f64> {
    let t = lat.dim();
    let d = t + trailing.len();
    let mut out = vec![0.0; range.len() * d];
    for (row, i) in out.chunks_mut(d).zip(range) {
        lat.node_into(i as u64, &mut row[..t]);
        row[t..].copy_from_slice(trailing);
    }
    out
}

/// Exact identity of a sample point: a 128-bit digest of the f64 bit patterns.
pub fn point_key(point: &[f64]) -> u128 {
    fn mix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }
    let (mut a, mut b) = (0x243f6a8885a308d3u64, 0x13198a2e03707344u64);
    for &x in point {
        let bits = x.to_bits();
        a = mix(a ^ bits).wrapping_add(0x9e3779b97f4a7c15);
        b = mix(b.wrapping_add(bits).rotate_left(17) ^ 0xa4093822299f31d0);
    }
    ((a as u128) << 64) | b as u128
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlgoA {
    /// One reconstructing lattice for the whole candidate set.
    SingleR1l,
    /// A multiple-lattice cover of the candidate set.
    MultipleR1l,
}

impl AlgoA {
    pub fn name(&self) -> &'static str {
        match self {
            AlgoA::SingleR1l => "single_r1l",
            AlgoA::MultipleR1l => "multiple_r1l",
        }
    }
}

impl std::str::FromStr for AlgoA {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single_r1l" => Ok(AlgoA::SingleR1l),
            "multiple_r1l" => Ok(AlgoA::MultipleR1l),
            other => invalid(format!("unknown Algorithm A variant {other:?}")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DetectionConfig {
    pub grid: CandidateGrid,
    pub s: usize,
    pub s_local: usize,
    pub theta: f64,
    pub r: usize,
    pub seed: u64,
    pub algo_a: AlgoA,
    /// Maximum number of points per black-box call.
    pub sample_batch_limit: usize,
    pub max_lattice_size: u64,
    /// Lattice pole guard; set for the lognormal periodization.
    pub pole_guard: Option<PoleGuard>,
    /// Record every per-(t, i, g) detection in the report.
    pub record_trace: bool,
}

impl DetectionConfig {
    /// Practical defaults: `s_local = s`, `θ = 1e-12`, `r = 5`, single-lattice Algorithm A.
    pub fn new(grid: CandidateGrid, s: usize) -> Self {
        DetectionConfig {
            grid,
            s,
            s_local: s,
            theta: 1e-12,
            r: 5,
            seed: 0,
            algo_a: AlgoA::SingleR1l,
            sample_batch_limit: 1 << 16,
            max_lattice_size: DEFAULT_MAX_LATTICE_SIZE,
            pole_guard: None,
            record_trace: false,
        }
    }

    /// Sets the pole guard matching `p`.
    pub fn with_periodization(mut self, p: &Periodization) -> Self {
        self.pole_guard = match *p {
            Periodization::Lognormal { delta } => Some(PoleGuard { delta }),
            _ => None,
        };
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.s == 0 || self.s_local == 0 {
            return invalid("sparsities s and s_local must be at least 1");
        }
        if !(self.theta > 0.0) {
            return invalid(format!("threshold must be positive, got {}", self.theta));
        }
        if self.r == 0 {
            return invalid("detection iterations r must be at least 1");
        }
        if self.sample_batch_limit == 0 {
            return invalid("sample batch limit must be positive");
        }
        Ok(())
    }

    fn algo_options(&self, t: usize) -> AlgoAOptions {
        let n_gamma = (0..=t).map(|j| self.grid.extent(j) as u64 - 1).max().unwrap_or(0);
        AlgoAOptions {
            algo: self.algo_a,
            n_gamma,
            max_lattice_size: self.max_lattice_size,
            pole_guard: self.pole_guard,
            batch_limit: self.sample_batch_limit,
        }
    }
}

/// Lattice parameters for one Algorithm-A call.
#[derive(Clone, Debug)]
pub struct AlgoAOptions {
    pub algo: AlgoA,
    pub n_gamma: u64,
    pub max_lattice_size: u64,
    pub pole_guard: Option<PoleGuard>,
    pub batch_limit: usize,
}

#[derive(Clone, Debug)]
pub struct AlgoAResult {
    /// Per functional, indices into the candidate set in decreasing magnitude.
    pub detected: Vec<Vec<usize>>,
    /// `G × |candidates|` coefficients of the projected functionals.
    pub coefficients: CMatrix,
    /// Lattices sampled, in sampling order.
    pub lattices: Vec<Rank1Lattice>,
}

/// Indices of the at most `s` largest entries with magnitude `>= theta`;
/// ties keep index order.
pub fn top_indices(values: &[Complex64], s: usize, theta: f64) -> Vec<usize> {
    let mut idx: Vec<(f64, usize)> = values
        .iter()
        .enumerate()
        .map(|(i, v)| (v.norm(), i))
        .filter(|&(m, _)| m >= theta)
        .collect();
    idx.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    idx.truncate(s);
    idx.into_iter().map(|(_, i)| i).collect()
}

/// Algorithm A: coefficients of the candidates for every functional on
/// samples shared by all functionals, thresholded and truncated per functional.
pub fn algoa_detect<B: BlackBox + ?Sized>(
    bb: &B,
    candidates: &FrequencySet,
    trailing: &[f64],
    s_tilde: usize,
    theta: f64,
    opts: &AlgoAOptions,
    seed: u64,
) -> Result<AlgoAResult> {
    if candidates.is_empty() {
        return invalid("Algorithm A needs a nonempty candidate set");
    }
    if candidates.dim() + trailing.len() != bb.dimension() {
        return invalid(format!(
            "candidate dimension {} plus {} trailing components does not match black-box dimension {}",
            candidates.dim(),
            trailing.len(),
            bb.dimension()
        ));
    }
    let (coefficients, lattices) = match opts.algo {
        AlgoA::SingleR1l => {
            let search = LatticeSearch {
                n_gamma: Some(opts.n_gamma),
                max_size: opts.max_lattice_size,
                pole_guard: opts.pole_guard,
                ..LatticeSearch::default()
            };
            let lat = search.find(candidates, seed)?;
            let samples = bb.evaluate_lattice(&lat, trailing, opts.batch_limit)?;
            (lattice_coefficients_rows(&samples, candidates, &lat)?, vec![lat])
        }
        AlgoA::MultipleR1l => {
            let cover = CoverOptions {
                n_gamma: Some(opts.n_gamma),
                pole_guard: opts.pole_guard,
                ..CoverOptions::default()
            }
            .build(candidates, seed)?;
            let samples = cover
                .lattices()
                .iter()
                .map(|lat| bb.evaluate_lattice(lat, trailing, opts.batch_limit))
                .collect::<Result<Vec<_>>>()?;
            let coeffs = cover_coefficients(&samples, &cover, candidates)?;
            (coeffs, cover.lattices().to_vec())
        }
    };
    let detected = (0..coefficients.rows())
        .map(|g| top_indices(coefficients.row(g), s_tilde, theta))
        .collect();
    Ok(AlgoAResult {
        detected,
        coefficients,
        lattices,
    })
}

/// Distinct sample points, counted per algorithm step.
#[derive(Clone, Debug, Default)]
struct SampleLedger {
    seen: HashSet<u128>,
    per_step: [usize; 3],
}

impl SampleLedger {
    fn record(&mut self, step: usize, points: &[f64], d: usize) {
        for p in points.chunks(d) {
            if self.seen.insert(point_key(p)) {
                self.per_step[step] += 1;
            }
        }
    }

    fn record_lattice(&mut self, step: usize, lat: &Rank1Lattice, trailing: &[f64]) {
        let m = lat.size() as usize;
        let chunk = 1 << 16;
        let d = lat.dim() + trailing.len();
        let mut start = 0;
        while start < m {
            let end = (start + chunk).min(m);
            let pts = lattice_points(lat, trailing, start..end);
            self.record(step, &pts, d);
            start = end;
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SampleCounts {
    /// Distinct points first issued in the single-component step.
    pub step1: usize,
    /// Distinct points first issued in the coupling step.
    pub step2: usize,
    /// Distinct points first issued in the coefficient step.
    pub step3: usize,
}

impl SampleCounts {
    pub fn total(&self) -> usize {
        self.step1 + self.step2 + self.step3
    }
}

/// One per-functional detection inside the driver.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceEntry {
    /// 0-based dimension index.
    pub t: usize,
    pub iteration: usize,
    pub g: usize,
    pub detected: Vec<Frequency>,
    /// Trailing components shared by all functionals in this iteration.
    pub trailing: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct DetectionReport {
    /// `|I^{(t)}|` per dimension after the single-component step.
    pub one_dimensional_sizes: Vec<usize>,
    /// `|J_t|` per coupling step `t = 2..d`.
    pub candidate_sizes: Vec<usize>,
    /// `|I^{(1..t)}|` per coupling step `t = 2..d`.
    pub coupled_sizes: Vec<usize>,
    /// Total lattice nodes per coupling step.
    pub coupling_nodes: Vec<u64>,
    pub cover_lattices: usize,
    pub cover_nodes: u64,
    pub samples: SampleCounts,
    /// Output sparsity ratio `|Ĩ| / s`.
    pub q: f64,
    pub trace: Vec<TraceEntry>,
}

#[derive(Clone, Debug)]
pub struct Detection {
    pub approximant: Approximant,
    pub report: DetectionReport,
}

fn step_error(step: usize) -> impl Fn(Error) -> Error {
    move |e| Error::Detection {
        step,
        source: Box::new(e),
    }
}

fn line_points(d: usize, t: usize, k: usize, fixed: &[f64]) -> Vec<f64> {
    let mut pts = vec![0.0; k * d];
    for (l, row) in pts.chunks_mut(d).enumerate() {
        let mut rest = fixed.iter();
        for (j, v) in row.iter_mut().enumerate() {
            *v = if j == t {
                l as f64 / k as f64
            } else {
                *rest.next().expect("d - 1 fixed components")
            };
        }
    }
    pts
}

/// Candidate components of dimension `t` for all `G` functionals on one line.
/// Returns, per functional, the selected components in decreasing magnitude.
fn line_detections<B: BlackBox + ?Sized>(
    bb: &B,
    grid: &CandidateGrid,
    t: usize,
    fixed: &[f64],
    s_local: usize,
    theta: f64,
    batch_limit: usize,
    ledger: Option<&mut SampleLedger>,
) -> Result<Vec<Vec<i32>>> {
    let d = bb.dimension();
    let k = grid.extent(t);
    let pts = line_points(d, t, k, fixed);
    if let Some(ledger) = ledger {
        ledger.record(0, &pts, d);
    }
    let mut values = CMatrix::zeros(bb.outputs(), k);
    for (c, chunk) in pts.chunks(batch_limit * d).enumerate() {
        let block = bb.evaluate(chunk)?;
        let start = c * batch_limit;
        for g in 0..values.rows() {
            values.row_mut(g)[start..start + block.cols()].copy_from_slice(block.row(g));
        }
    }
    let fft = forward_fft(k);
    let (lo, hi) = (grid.lo(t), grid.hi(t));
    Ok((0..values.rows())
        .into_par_iter()
        .map(|g| {
            let mut buf = values.row(g).to_vec();
            fft.process(&mut buf);
            let coeffs: Vec<Complex64> = (lo..=hi)
                .map(|kt| buf[kt.rem_euclid(k as i32) as usize] / k as f64)
                .collect();
            top_indices(&coeffs, s_local, theta)
                .into_iter()
                .map(|i| lo + i as i32)
                .collect()
        })
        .collect())
}

/// Single-component detection in dimension `t` (0-based) with its own RNG
/// stream derived from `cfg.seed`.
pub fn detect_1d_components<B: BlackBox + ?Sized>(
    bb: &B,
    cfg: &DetectionConfig,
    t: usize,
) -> Result<FrequencySet> {
    cfg.validate()?;
    let d = bb.dimension();
    if t >= d || cfg.grid.dim() != d {
        return invalid(format!("dimension index {t} invalid for d = {d}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (t as u64).wrapping_mul(0x9e3779b97f4a7c15));
    let mut out = FrequencySet::new(1);
    for _ in 0..cfg.r {
        let fixed: Vec<f64> = (0..d - 1).map(|_| rng.random()).collect();
        let per_g = line_detections(bb, &cfg.grid, t, &fixed, cfg.s_local, cfg.theta, cfg.sample_batch_limit, None)
            .map_err(step_error(t + 1))?;
        for comps in per_g {
            for kt in comps {
                out.insert(Frequency::new(vec![kt]))?;
            }
        }
    }
    Ok(out)
}

/// The uniform sparse FFT. Requires `d >= 2`.
pub fn usfft<B: BlackBox + ?Sized>(
    bb: &B,
    cfg: &DetectionConfig,
    periodization: Periodization,
) -> Result<Detection> {
    cfg.validate()?;
    let d = bb.dimension();
    let g_count = bb.outputs();
    if d < 2 {
        return invalid("the dimension-incremental detection needs d >= 2");
    }
    if cfg.grid.dim() != d {
        return invalid(format!(
            "candidate grid dimension {} does not match black-box dimension {d}",
            cfg.grid.dim()
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ledger = SampleLedger::default();
    let mut report = DetectionReport::default();

    // Step 1: single frequency components per dimension.
    let mut one_d: Vec<FrequencySet> = Vec::with_capacity(d);
    for t in 0..d {
        let mut set = FrequencySet::new(1);
        for i in 0..cfg.r {
            let fixed: Vec<f64> = (0..d - 1).map(|_| rng.random()).collect();
            let per_g = line_detections(
                bb,
                &cfg.grid,
                t,
                &fixed,
                cfg.s_local,
                cfg.theta,
                cfg.sample_batch_limit,
                Some(&mut ledger),
            )
            .map_err(step_error(t + 1))?;
            for (g, comps) in per_g.into_iter().enumerate() {
                if cfg.record_trace {
                    report.trace.push(TraceEntry {
                        t,
                        iteration: i,
                        g,
                        detected: comps.iter().map(|&k| Frequency::new(vec![k])).collect(),
                        trailing: fixed.clone(),
                    });
                }
                for kt in comps {
                    set.insert(Frequency::new(vec![kt]))?;
                }
            }
        }
        if set.is_empty() {
            set.insert(Frequency::zero(1))?;
        }
        report.one_dimensional_sizes.push(set.len());
        one_d.push(set);
    }

    // Step 2: couple dimensions one at a time.
    let mut coupled = one_d[0].clone();
    for t in 1..d {
        let (r_t, s_t) = if t < d - 1 { (cfg.r, cfg.s_local) } else { (1, cfg.s) };
        let candidates = FrequencySet::cross_intersect(&coupled, &one_d[t], &cfg.grid)
            .map_err(step_error(t + 1))?;
        report.candidate_sizes.push(candidates.len());
        let opts = cfg.algo_options(t);
        let mut next = FrequencySet::new(t + 1);
        let mut nodes = 0;
        for i in 0..r_t {
            let trailing: Vec<f64> = (0..d - 1 - t).map(|_| rng.random()).collect();
            let seed: u64 = rng.random();
            if candidates.is_empty() {
                continue;
            }
            let res = algoa_detect(bb, &candidates, &trailing, s_t, cfg.theta, &opts, seed)
                .map_err(step_error(t + 1))?;
            for lat in &res.lattices {
                nodes += lat.size();
                ledger.record_lattice(1, lat, &trailing);
            }
            for (g, idx) in res.detected.iter().enumerate() {
                let found: Vec<Frequency> = idx
                    .iter()
                    .map(|&j| candidates.get(j).expect("candidate index").clone())
                    .collect();
                for k in &found {
                    next.insert(k.clone())?;
                }
                if cfg.record_trace {
                    report.trace.push(TraceEntry {
                        t,
                        iteration: i,
                        g,
                        detected: found,
                        trailing: trailing.clone(),
                    });
                }
            }
        }
        report.coupling_nodes.push(nodes);
        report.coupled_sizes.push(next.len());
        if next.is_empty() && t < d - 1 {
            next.insert(Frequency::zero(t + 1))?;
        }
        coupled = next;
    }

    // Step 3: coefficients on the detected set.
    let cover_seed: u64 = rng.random();
    let final_set = if coupled.is_empty() {
        FrequencySet::from_frequencies(d, [Frequency::zero(d)])?
    } else {
        coupled
    };
    let (approximant, cover_lattices, cover_nodes) =
        step3(bb, &final_set, cfg, cover_seed, periodization, &mut ledger)?;
    let approximant = if report.coupled_sizes.last() == Some(&0) {
        let c0_ok = (0..g_count).any(|g| approximant.coefficients().get(g, 0).norm() >= cfg.theta);
        if c0_ok {
            approximant
        } else {
            log::warn!("no frequency passed the threshold; returning an empty approximant");
            Approximant::empty(d, g_count, periodization)
        }
    } else {
        approximant
    };
    report.cover_lattices = cover_lattices;
    report.cover_nodes = cover_nodes;
    report.samples = SampleCounts {
        step1: ledger.per_step[0],
        step2: ledger.per_step[1],
        step3: ledger.per_step[2],
    };
    report.q = approximant.frequencies().len() as f64 / cfg.s as f64;
    Ok(Detection {
        approximant,
        report,
    })
}

fn step3<B: BlackBox + ?Sized>(
    bb: &B,
    set: &FrequencySet,
    cfg: &DetectionConfig,
    seed: u64,
    periodization: Periodization,
    ledger: &mut SampleLedger,
) -> Result<(Approximant, usize, u64)> {
    let cover = CoverOptions {
        n_gamma: Some(cfg.grid.n_gamma()),
        pole_guard: cfg.pole_guard,
        ..CoverOptions::default()
    }
    .build(set, seed)?;
    let samples = cover
        .lattices()
        .iter()
        .map(|lat| {
            ledger.record_lattice(2, lat, &[]);
            bb.evaluate_lattice(lat, &[], cfg.sample_batch_limit)
        })
        .collect::<Result<Vec<_>>>()?;
    let coeffs = cover_coefficients(&samples, &cover, set)?;
    Ok((
        Approximant::new(set.clone(), coeffs, periodization)?,
        cover.lattices().len(),
        cover.total_nodes(),
    ))
}

/// Coefficients on a prescribed frequency set, skipping detection.
pub fn fixed_set_coefficients<B: BlackBox + ?Sized>(
    bb: &B,
    set: &FrequencySet,
    periodization: Periodization,
    pole_guard: Option<PoleGuard>,
    batch_limit: usize,
    seed: u64,
) -> Result<(Approximant, SampleCounts)> {
    if set.is_empty() {
        return invalid("fixed frequency set is empty");
    }
    if set.dim() != bb.dimension() {
        return invalid("frequency set dimension does not match the black box");
    }
    let n_gamma = crate::lattice::set_extent(set);
    let mut ledger = SampleLedger::default();
    let cover = CoverOptions {
        n_gamma: Some(n_gamma),
        pole_guard,
        ..CoverOptions::default()
    }
    .build(set, seed)?;
    let samples = cover
        .lattices()
        .iter()
        .map(|lat| {
            ledger.record_lattice(2, lat, &[]);
            bb.evaluate_lattice(lat, &[], batch_limit.max(1))
        })
        .collect::<Result<Vec<_>>>()?;
    let coeffs = cover_coefficients(&samples, &cover, set)?;
    Ok((
        Approximant::new(set.clone(), coeffs, periodization)?,
        SampleCounts {
            step3: ledger.per_step[2],
            ..SampleCounts::default()
        },
    ))
}

//! Quantities derived from an approximant: expectation, variance-based
//! sensitivity indices, error metrics against a reference solver, Monte-Carlo
//! comparison, and fixed index sets for baseline runs.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::approximant::Approximant;
use crate::detect::{fixed_set_coefficients, BlackBox, SampleCounts};
use crate::error::{invalid, Result};
use crate::freq::{Frequency, FrequencySet};
use crate::lattice::PoleGuard;
use crate::periodize::Periodization;

/// Imaginary expectation residue above which a warning is logged.
pub const IMAGINARY_WARN: f64 = 1e-8;

/// Points drawn per reference call in error and Monte-Carlo estimates.
const DRAW_BATCH: usize = 1024;

/// Law of the random parameters, one i.i.d. component per dimension.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ParameterDistribution {
    Uniform { lo: f64, hi: f64 },
    StandardNormal,
}

impl ParameterDistribution {
    /// `U[−1/2, 1/2]`, `U[α, β]` or `N(0, 1)` for the matching periodization.
    pub fn for_periodization(p: &Periodization) -> Self {
        match *p {
            Periodization::None => ParameterDistribution::Uniform { lo: -0.5, hi: 0.5 },
            Periodization::Tent { alpha, beta } => ParameterDistribution::Uniform { lo: alpha, hi: beta },
            Periodization::Lognormal { .. } => ParameterDistribution::StandardNormal,
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            ParameterDistribution::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            ParameterDistribution::StandardNormal => rng.sample(StandardNormal),
        }
    }

    /// `n` points of dimension `d`, row-major.
    pub fn sample_points<R: Rng>(&self, rng: &mut R, n: usize, d: usize) -> Vec<f64> {
        (0..n * d).map(|_| self.sample(rng)).collect()
    }
}

/// `E[e^{2πik φ⁻¹(y)}]` for the tent map: `1` at `k = 0`, `2i/(πk)` for odd
/// `k`, `0` for even nonzero `k`. Independent of `α` and `β`.
pub fn d_factor(k: i32) -> Complex64 {
    if k == 0 {
        Complex64::new(1.0, 0.0)
    } else if k % 2 == 0 {
        Complex64::new(0.0, 0.0)
    } else {
        Complex64::new(0.0, 2.0 / (PI * k as f64))
    }
}

/// Lognormal analogue of [`d_factor`]: the torus image is uniform on
/// `(Δ, Δ + 1/2)`, which adds the factor `e^{2πikΔ}`.
pub fn d_factor_shifted(k: i32, delta: f64) -> Complex64 {
    d_factor(k) * Complex64::from_polar(1.0, 2.0 * PI * k as f64 * delta)
}

/// `E[e^{2πik·φ⁻¹(y)}]` under the parameter law of `p`.
pub fn basis_expectation(k: &Frequency, p: &Periodization) -> Complex64 {
    match *p {
        Periodization::None => {
            if k.is_zero() {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }
        Periodization::Tent { .. } => k.iter().map(|&kj| d_factor(kj)).product(),
        Periodization::Lognormal { delta } => k.iter().map(|&kj| d_factor_shifted(kj, delta)).product(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Expectation {
    /// Real part per functional.
    pub values: Vec<f64>,
    /// Imaginary residue per functional, a diagnostic for aliasing.
    pub imaginary: Vec<f64>,
}

/// Closed-form expectation of every functional of `app`.
pub fn expectation(app: &Approximant) -> Expectation {
    let factors: Vec<Complex64> = app
        .frequencies()
        .iter()
        .map(|k| basis_expectation(k, app.periodization()))
        .collect();
    let c = app.coefficients();
    let mut values = Vec::with_capacity(app.outputs());
    let mut imaginary = Vec::with_capacity(app.outputs());
    for g in 0..app.outputs() {
        let e: Complex64 = c.row(g).iter().zip(&factors).map(|(c, f)| c * f).sum();
        values.push(e.re);
        imaginary.push(e.im);
    }
    let worst = imaginary.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if worst > IMAGINARY_WARN {
        log::warn!("expectation has imaginary residue up to {worst:e}");
    }
    Expectation { values, imaginary }
}

fn variance_parts(app: &Approximant, cols: &[usize]) -> Vec<f64> {
    let c = app.coefficients();
    let freqs = app.frequencies();
    (0..app.outputs())
        .map(|g| {
            cols.iter()
                .filter(|&&j| !freqs.get(j).expect("column in range").is_zero())
                .map(|&j| c.get(g, j).norm_sqr())
                .sum()
        })
        .collect()
}

/// Variance `Σ_{k≠0} |c_{g,k}|²` per functional.
pub fn variance(app: &Approximant) -> Vec<f64> {
    let all: Vec<usize> = (0..app.frequencies().len()).collect();
    variance_parts(app, &all)
}

/// Global sensitivity index of `subset` per functional. Functionals with
/// zero variance get `0`.
pub fn variance_gsi(app: &Approximant, subset: &FrequencySet) -> Result<Vec<f64>> {
    let cols = app.subset_columns(subset)?;
    let part = variance_parts(app, &cols);
    let total = variance(app);
    let mut zero = 0;
    let out = part
        .iter()
        .zip(&total)
        .map(|(p, t)| {
            if *t > 0.0 {
                p / t
            } else {
                zero += 1;
                0.0
            }
        })
        .collect();
    if zero > 0 {
        log::warn!("{zero} functionals have zero variance; their sensitivity index is set to 0");
    }
    Ok(out)
}

/// Sensitivity indices of the classes `J_ℓ` (exactly `ℓ` nonzero components),
/// with the class sizes. `ℓ = 0` is omitted.
pub fn gsi_by_order(app: &Approximant) -> Result<BTreeMap<usize, (usize, Vec<f64>)>> {
    let mut out = BTreeMap::new();
    for (l, set) in app.frequencies().nnz_partition() {
        if l == 0 {
            continue;
        }
        out.insert(l, (set.len(), variance_gsi(app, &set)?));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub err1: Vec<f64>,
    pub err2: Vec<f64>,
    pub err_inf: Vec<f64>,
    pub n_test: usize,
    pub seed: u64,
}

impl ErrorReport {
    pub fn max_err1(&self) -> f64 {
        self.err1.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_err2(&self) -> f64 {
        self.err2.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_err_inf(&self) -> f64 {
        self.err_inf.iter().copied().fold(0.0, f64::max)
    }
}

/// Absolute errors `err_p(x_g) = (mean_j |ǔ_g(y_j) − u_g(y_j)|^p)^{1/p}` for
/// `p = 1, 2, ∞` on `n_test` draws from the parameter law of `app`.
/// `reference` takes parameters `y` directly.
pub fn error_report<B: BlackBox + ?Sized>(
    app: &Approximant,
    reference: &B,
    n_test: usize,
    seed: u64,
) -> Result<ErrorReport> {
    if n_test == 0 {
        return invalid("n_test must be at least 1");
    }
    let d = app.dim();
    if reference.dimension() != d || reference.outputs() != app.outputs() {
        return invalid("reference and approximant shapes differ");
    }
    let dist = ParameterDistribution::for_periodization(app.periodization());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = app.outputs();
    let (mut s1, mut s2, mut inf) = (vec![0.0; g], vec![0.0; g], vec![0.0f64; g]);
    let mut left = n_test;
    while left > 0 {
        let n = left.min(DRAW_BATCH);
        left -= n;
        let ys = dist.sample_points(&mut rng, n, d);
        let truth = reference.evaluate(&ys)?;
        let approx = app.evaluate(&ys)?;
        for r in 0..g {
            for (u, v) in truth.row(r).iter().zip(approx.row(r)) {
                let e = (u - v).norm();
                s1[r] += e;
                s2[r] += e * e;
                inf[r] = inf[r].max(e);
            }
        }
    }
    let n = n_test as f64;
    Ok(ErrorReport {
        err1: s1.iter().map(|s| s / n).collect(),
        err2: s2.iter().map(|s| (s / n).sqrt()).collect(),
        err_inf: inf,
        n_test,
        seed,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarlo {
    pub mean: Vec<f64>,
    /// Standard error `σ̂/√n` of the mean.
    pub std_error: Vec<f64>,
    pub n: usize,
}

/// Sample mean of the real part of every functional over `n_mc` draws.
pub fn mc_expectation<B: BlackBox + ?Sized>(
    reference: &B,
    dist: ParameterDistribution,
    n_mc: usize,
    seed: u64,
) -> Result<MonteCarlo> {
    if n_mc < 2 {
        return invalid("Monte-Carlo estimate needs at least 2 samples");
    }
    let d = reference.dimension();
    let g = reference.outputs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Welford updates per functional.
    let (mut mean, mut m2) = (vec![0.0; g], vec![0.0; g]);
    let mut count = 0usize;
    let mut left = n_mc;
    while left > 0 {
        let n = left.min(DRAW_BATCH);
        left -= n;
        let ys = dist.sample_points(&mut rng, n, d);
        let vals = reference.evaluate(&ys)?;
        for j in 0..n {
            count += 1;
            for r in 0..g {
                let x = vals.get(r, j).re;
                let delta = x - mean[r];
                mean[r] += delta / count as f64;
                m2[r] += delta * (x - mean[r]);
            }
        }
    }
    let n = n_mc as f64;
    let std_error = m2.iter().map(|m| (m / (n - 1.0) / n).sqrt()).collect();
    Ok(MonteCarlo { mean, std_error, n: n_mc })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BaselineKind {
    /// `{k : ‖k‖₀ = 1, ‖k‖₁ ≤ N}`
    AxisCross,
    /// `{k : Π max(1, 4|k_j|) ≤ N}`
    HyperbolicUniform,
    /// `{k : Π max(1, j^q |k_j|) ≤ N}`
    HyperbolicDecay { q: u32 },
    /// `{k : Σ j^q |k_j| ≤ N}`
    L1Decay { q: u32 },
}

impl BaselineKind {
    pub fn parse(name: &str, q: Option<u32>) -> Result<Self> {
        let need_q = || match q {
            Some(q @ 1..=2) => Ok(q),
            Some(q) => invalid(format!("decay exponent q must be 1 or 2, got {q}")),
            None => invalid(format!("index set {name:?} needs a decay exponent q")),
        };
        Ok(match name {
            "axis_cross" => BaselineKind::AxisCross,
            "hyperbolic_uniform" => BaselineKind::HyperbolicUniform,
            "hyperbolic_decay" => BaselineKind::HyperbolicDecay { q: need_q()? },
            "l1_decay" => BaselineKind::L1Decay { q: need_q()? },
            other => return invalid(format!("unknown index set kind {other:?}")),
        })
    }
}

/// Enumerates a standard index set in `d` dimensions with bound `n`, one
/// dimension at a time, pruning on the remaining budget.
pub fn baseline_index_set(kind: BaselineKind, n: u32, d: usize) -> Result<FrequencySet> {
    if d == 0 {
        return invalid("dimension must be positive");
    }
    let mut set = FrequencySet::new(d);
    match kind {
        BaselineKind::AxisCross => {
            for j in 0..d {
                for m in 1..=n as i32 {
                    for sign in [1, -1] {
                        let mut k = vec![0; d];
                        k[j] = sign * m;
                        set.insert(Frequency::new(k))?;
                    }
                }
            }
        }
        BaselineKind::HyperbolicUniform => {
            product_sets(&mut set, &mut vec![0; d], 0, n as u64, &|_, m| 4 * m)?;
        }
        BaselineKind::HyperbolicDecay { q } => {
            product_sets(&mut set, &mut vec![0; d], 0, n as u64, &|j, m| (j as u64 + 1).pow(q) * m)?;
        }
        BaselineKind::L1Decay { q } => {
            sum_sets(&mut set, &mut vec![0; d], 0, n as u64, q)?;
        }
    }
    Ok(set)
}

/// Recursion for `Π max(1, w(j, |k_j|)) ≤ budget`.
fn product_sets(
    set: &mut FrequencySet,
    k: &mut Vec<i32>,
    j: usize,
    budget: u64,
    w: &dyn Fn(usize, u64) -> u64,
) -> Result<()> {
    if j == k.len() {
        set.insert(Frequency::new(k.clone()))?;
        return Ok(());
    }
    k[j] = 0;
    product_sets(set, k, j + 1, budget, w)?;
    let mut m = 1u64;
    loop {
        let f = w(j, m).max(1);
        if f > budget {
            break;
        }
        for sign in [1, -1] {
            k[j] = sign * m as i32;
            product_sets(set, k, j + 1, budget / f, w)?;
        }
        m += 1;
    }
    k[j] = 0;
    Ok(())
}

/// Recursion for `Σ (j+1)^q |k_j| ≤ budget`.
fn sum_sets(set: &mut FrequencySet, k: &mut Vec<i32>, j: usize, budget: u64, q: u32) -> Result<()> {
    if j == k.len() {
        set.insert(Frequency::new(k.clone()))?;
        return Ok(());
    }
    let wj = (j as u64 + 1).pow(q);
    k[j] = 0;
    sum_sets(set, k, j + 1, budget, q)?;
    let mut m = 1u64;
    while m * wj <= budget {
        for sign in [1, -1] {
            k[j] = sign * m as i32;
            sum_sets(set, k, j + 1, budget - m * wj, q)?;
        }
        m += 1;
    }
    k[j] = 0;
    Ok(())
}

/// Coefficients on a prescribed set, bypassing detection.
pub fn fixed_set_approximation<B: BlackBox + ?Sized>(
    bb: &B,
    set: &FrequencySet,
    periodization: Periodization,
    seed: u64,
) -> Result<(Approximant, SampleCounts)> {
    let guard = match periodization {
        Periodization::Lognormal { delta } => Some(PoleGuard { delta }),
        _ => None,
    };
    fixed_set_coefficients(bb, set, periodization, guard, 1 << 16, seed)
}

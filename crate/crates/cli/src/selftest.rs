//! Built-in checks: exact recovery of random sparse trigonometric polynomials,
//! reconstructing lattices, and periodization round trips.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use usfft::detect::{usfft, DetectionConfig};
use usfft::fixtures::SparseTrigPolynomials;
use usfft::lattice::{find_reconstructing, lattice_coefficients};
use usfft::periodize::{lognormal_forward, lognormal_inverse, tent_forward, tent_inverse};
use usfft::{CMatrix, CandidateGrid, Complex64, Frequency, FrequencySet, Periodization};

use crate::CliError;

/// Coefficient tolerance for exact recovery.
pub const RECOVERY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RecoveryOutcome {
    /// True support frequencies recovered to tolerance.
    pub recovered: usize,
    /// True support frequencies missed or inaccurate.
    pub missed: Vec<(usize, Frequency)>,
    /// Recovered frequencies outside the true support with a coefficient above tolerance.
    pub spurious: usize,
}

impl RecoveryOutcome {
    pub fn exact(&self) -> bool {
        self.missed.is_empty() && self.spurious == 0
    }
}

/// Compares a detected approximant against the polynomial it came from.
pub fn compare(truth: &SparseTrigPolynomials, found: &usfft::Approximant) -> RecoveryOutcome {
    let mut out = RecoveryOutcome::default();
    for g in 0..truth.coefficients().rows() {
        let support = truth.support(g);
        for k in support.iter() {
            let c = truth.coefficient(g, k);
            let got = found
                .frequencies()
                .index_of(k)
                .map_or(Complex64::new(0.0, 0.0), |j| found.coefficients().get(g, j));
            if (got - c).norm() <= RECOVERY_TOL {
                out.recovered += 1;
            } else {
                out.missed.push((g, k.clone()));
            }
        }
        for (j, k) in found.frequencies().iter().enumerate() {
            if !support.contains(k) && found.coefficients().get(g, j).norm() > RECOVERY_TOL {
                out.spurious += 1;
            }
        }
    }
    out
}

/// One recovery trial: `d = 6`, `Γ = [−32, 32]^6`, `G = 5` polynomials with 20
/// terms each drawn from a shared pool of 30, `|c| ≥ 1`, `s = s_local = 20`.
///
/// With `inject = Some(mag)`, functional 0 gets one extra term of magnitude
/// `mag` at a fresh frequency; the second value then reports whether that
/// frequency was detected.
pub fn recovery_trial(seed: u64, inject: Option<f64>) -> Result<(RecoveryOutcome, Option<bool>), CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = SparseTrigPolynomials::random(6, 5, 30, 20, 32, 1.0, &mut rng);
    let (truth, injected) = match inject {
        None => (truth, None),
        Some(mag) => {
            // One extra term for functional 0 at a frequency outside the pool.
            let mut freqs = truth.frequencies().clone();
            let k = loop {
                let k = Frequency::new((0..6).map(|_| rng.random_range(-32..=32)).collect::<Vec<i32>>());
                if !freqs.contains(&k) {
                    break k;
                }
            };
            freqs.insert(k.clone())?;
            let old = truth.coefficients();
            let rows: Vec<Vec<Complex64>> = (0..old.rows())
                .map(|g| {
                    let mut row = old.row(g).to_vec();
                    row.push(Complex64::new(if g == 0 { mag } else { 0.0 }, 0.0));
                    row
                })
                .collect();
            (SparseTrigPolynomials::new(freqs, CMatrix::from_rows(rows))?, Some(k))
        }
    };
    let mut cfg = DetectionConfig::new(CandidateGrid::symmetric(6, 32)?, 20);
    cfg.seed = seed;
    let det = usfft(&truth, &cfg, Periodization::None)?;
    let detected = injected.map(|k| det.approximant.frequencies().contains(&k));
    Ok((compare(&truth, &det.approximant), detected))
}

/// Random sets accepted by the lattice search must have injective residues and
/// invert evaluation exactly.
pub fn lattice_suite(seed: u64, fixtures: usize) -> Result<usize, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut passed = 0;
    for f in 0..fixtures {
        let d = rng.random_range(2..=6);
        let half: i32 = rng.random_range(2..=20);
        // At most half of the box, so the rejection loop below ends quickly.
        let room = ((2 * half + 1) as usize).saturating_pow(d as u32) / 2;
        let n = rng.random_range(1..=60.min(room));
        let mut set = FrequencySet::new(d);
        while set.len() < n {
            set.insert(Frequency::new((0..d).map(|_| rng.random_range(-half..=half)).collect::<Vec<i32>>()))?;
        }
        let lat = find_reconstructing(&set, seed.wrapping_add(f as u64))?;
        let coeffs: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let samples: Vec<Complex64> = (0..lat.size())
            .map(|i| {
                let x = lat.node(i);
                set.iter()
                    .zip(&coeffs)
                    .map(|(k, c)| {
                        let ph: f64 = k.iter().zip(&x).map(|(&kj, xj)| kj as f64 * xj).sum();
                        c * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * ph)
                    })
                    .sum()
            })
            .collect();
        let rec = lattice_coefficients(&samples, &set, &lat)?;
        let ok = lat.is_reconstructing(&set)? && rec.iter().zip(&coeffs).all(|(a, b)| (a - b).norm() <= 1e-10);
        passed += ok as usize;
    }
    Ok(passed)
}

/// Tent and lognormal round trips at random points.
pub fn periodization_suite(seed: u64, points: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delta = 1.0 / (4.0 * 4099.0);
    let mut passed = 0;
    for _ in 0..points {
        let y: f64 = rng.random_range(-1.0..=1.0);
        let tent_ok = tent_inverse(y, -1.0, 1.0).is_ok_and(|t| (tent_forward(t, -1.0, 1.0) - y).abs() <= 1e-14);
        let z: f64 = rng.random_range(-4.0..=4.0);
        let ln_ok = lognormal_forward(lognormal_inverse(z, delta), delta).is_ok_and(|v| (v - z).abs() <= 1e-10);
        passed += (tent_ok && ln_ok) as usize;
    }
    passed
}

pub fn run(seed: u64, trials: usize, inject: bool) -> Result<(), CliError> {
    let theta = DetectionConfig::new(CandidateGrid::symmetric(1, 1)?, 1).theta;
    let mut failures = Vec::new();

    let mut exact = 0;
    let mut expected_misses = 0;
    for t in 0..trials {
        let (outcome, injected_found) = recovery_trial(seed.wrapping_add(t as u64), inject.then_some(0.5 * theta))?;
        if injected_found == Some(false) {
            expected_misses += 1;
        }
        // A sub-threshold term is within the coefficient tolerance of zero,
        // so it never counts against exactness.
        if outcome.exact() {
            exact += 1;
        }
    }
    println!("recovery: {exact}/{trials} trials exact");
    if inject {
        println!("recovery: {expected_misses}/{trials} injected sub-threshold coefficients missed as expected");
        if expected_misses != trials {
            failures.push("a sub-threshold coefficient was recovered");
        }
    }
    if exact != trials {
        failures.push("recovery");
    }

    let fixtures = 50;
    let lat = lattice_suite(seed, fixtures)?;
    println!("lattice: {lat}/{fixtures} fixtures");
    if lat != fixtures {
        failures.push("lattice");
    }

    let points = 10_000;
    let per = periodization_suite(seed, points);
    println!("periodization: {per}/{points} round trips");
    if per != points {
        failures.push("periodization");
    }

    if failures.is_empty() {
        println!("selftest: all suites passed");
        Ok(())
    } else {
        Err(CliError::SelftestFailed(failures.join(", ")))
    }
}

//! Rank-1 lattices `Λ(z, M) = { (i/M) z mod 1 : i = 0..M-1 }` and the
//! lattice FFT used to read off Fourier coefficients of trigonometric
//! polynomials supported on a known frequency set.

mod cover;
pub mod prime;

use std::collections::HashSet;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};
use crate::freq::FrequencySet;
use crate::matrix::CMatrix;

pub use cover::{
    build_cover, cover_coefficients, cover_coefficients_single, cover_size_bound, CoverOptions,
    LatticeCover,
};
pub use prime::{is_prime, next_prime};

/// Default upper limit on lattice sizes produced by the searches.
pub const DEFAULT_MAX_LATTICE_SIZE: u64 = 1 << 26;

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

pub(crate) fn forward_fft(len: usize) -> Arc<dyn Fft<f64>> {
    planner().lock().expect("fft planner poisoned").plan_fft_forward(len)
}

pub(crate) fn inverse_fft(len: usize) -> Arc<dyn Fft<f64>> {
    planner().lock().expect("fft planner poisoned").plan_fft_inverse(len)
}

/// A rank-1 lattice with prime size `M > 2` and generating vector `0 <= z_j < M`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Rank1Lattice {
    z: Vec<u64>,
    m: u64,
}

impl Rank1Lattice {
    /// Normalizes `z` modulo `m`. `m` must be a prime larger than 2.
    pub fn new(z: &[i64], m: u64) -> Result<Self> {
        if m <= 2 || !is_prime(m) {
            return invalid(format!("lattice size {m} must be a prime > 2"));
        }
        if z.is_empty() {
            return invalid("generating vector must be nonempty");
        }
        let z = z.iter().map(|&zj| zj.rem_euclid(m as i64) as u64).collect();
        Ok(Rank1Lattice { z, m })
    }

    pub fn size(&self) -> u64 {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    pub fn generator(&self) -> &[u64] {
        &self.z
    }

    /// Writes node `i` into `out` (length `d`).
    pub fn node_into(&self, i: u64, out: &mut [f64]) {
        let m = self.m as f64;
        for (o, &zj) in out.iter_mut().zip(&self.z) {
            *o = ((i as u128 * zj as u128) % self.m as u128) as f64 / m;
        }
    }

    pub fn node(&self, i: u64) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        self.node_into(i, &mut v);
        v
    }

    /// All `M` nodes, row-major (`M × d`), in order `i = 0..M-1`.
    pub fn nodes(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; self.m as usize * d];
        for (i, chunk) in out.chunks_mut(d).enumerate() {
            self.node_into(i as u64, chunk);
        }
        out
    }

    /// `k · z mod M` for every `k` in `set`, in set order.
    pub fn residues(&self, set: &FrequencySet) -> Result<Vec<u64>> {
        self.check_dim(set)?;
        Ok(set.iter().map(|k| k.residue(&self.z, self.m)).collect())
    }

    /// Whether `k ↦ k · z mod M` is injective on `set`.
    pub fn is_reconstructing(&self, set: &FrequencySet) -> Result<bool> {
        let mut r = self.residues(set)?;
        r.sort_unstable();
        Ok(r.windows(2).all(|w| w[0] != w[1]))
    }

    fn check_dim(&self, set: &FrequencySet) -> Result<()> {
        if set.dim() != self.dim() {
            return invalid(format!(
                "frequency set dimension {} does not match lattice dimension {}",
                set.dim(),
                self.dim()
            ));
        }
        Ok(())
    }

    /// Archive line `M=<int> z=<comma-separated ints>`.
    pub fn to_line(&self) -> String {
        let z: Vec<String> = self.z.iter().map(u64::to_string).collect();
        format!("M={} z={}", self.m, z.join(","))
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let parse_err = |msg: String| Error::Parse { line: 1, msg };
        let fields = crate::freq::parse_header(line, 1)?;
        let m: u64 = crate::freq::header_value(&fields, "M", 1)?
            .parse()
            .map_err(|e| parse_err(format!("M: {e}")))?;
        let z: std::result::Result<Vec<i64>, _> = crate::freq::header_value(&fields, "z", 1)?
            .split(',')
            .map(str::parse)
            .collect();
        let z = z.map_err(|e| parse_err(format!("z: {e}")))?;
        Rank1Lattice::new(&z, m)
    }
}

/// Keeps lattice nodes away from the two poles `Δ` and `Δ + 1/2` of the
/// lognormal periodization: every node component must have cyclic distance
/// at least `1/(8M)` from both.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoleGuard {
    pub delta: f64,
}

impl PoleGuard {
    pub fn admits(&self, lat: &Rank1Lattice) -> bool {
        let m = lat.size();
        let eps = 1.0 / (8.0 * m as f64);
        let full = lat.generator().iter().any(|&z| z != 0);
        [self.delta, self.delta + 0.5].iter().all(|&p| {
            let dist = if full {
                grid_distance(m, p)
            } else {
                cyclic_distance(0.0, p)
            };
            dist >= eps
        })
    }
}

fn cyclic_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Cyclic distance from `p` to the grid `{n/M}`.
fn grid_distance(m: u64, p: f64) -> f64 {
    let x = p * m as f64;
    let lo = x.floor();
    cyclic_distance(lo / m as f64, p).min(cyclic_distance((lo + 1.0) / m as f64, p))
}

/// Randomized search for a reconstructing rank-1 lattice.
///
/// For each candidate prime `M` (starting at the smallest prime
/// `>= max(2|I|, N_Γ + 1)`), up to `draws_per_size` generating vectors are
/// drawn uniformly from `[0, M)^d`; the first injective one is returned.
/// Failing sizes are escalated geometrically by `growth`.
#[derive(Clone, Debug)]
pub struct LatticeSearch {
    /// `N_Γ`; `None` uses the extent of the target set itself.
    pub n_gamma: Option<u64>,
    pub max_size: u64,
    pub draws_per_size: usize,
    pub growth: f64,
    pub pole_guard: Option<PoleGuard>,
}

impl Default for LatticeSearch {
    fn default() -> Self {
        LatticeSearch {
            n_gamma: None,
            max_size: DEFAULT_MAX_LATTICE_SIZE,
            draws_per_size: 50,
            growth: 1.05,
            pole_guard: None,
        }
    }
}

pub(crate) fn set_extent(set: &FrequencySet) -> u64 {
    set.bounds()
        .map(|(lo, hi)| {
            lo.iter()
                .zip(&hi)
                .map(|(l, h)| (h - l) as u64)
                .max()
                .unwrap_or(0)
        })
        .unwrap_or(0)
}

impl LatticeSearch {
    pub fn find(&self, set: &FrequencySet, seed: u64) -> Result<Rank1Lattice> {
        if set.is_empty() {
            return invalid("cannot search a lattice for an empty frequency set");
        }
        let d = set.dim();
        let n = set.len();
        let n_gamma = self.n_gamma.unwrap_or_else(|| set_extent(set));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = next_prime((2 * n as u64).max(n_gamma + 1).max(3));
        let mut checker = ResidueChecker::default();
        let mut z = vec![0u64; d];
        loop {
            if m > self.max_size {
                return Err(Error::ResourceLimit(format!(
                    "no reconstructing lattice for {n} frequencies below size {}",
                    self.max_size
                )));
            }
            if let Some(guard) = &self.pole_guard {
                // All nonzero generators give the same node components, so the
                // guard only depends on M.
                let probe = Rank1Lattice { z: vec![1; d], m };
                if !guard.admits(&probe) {
                    m = next_prime(m + 1);
                    continue;
                }
            }
            let kmod = reduce_frequencies(set, m);
            for _ in 0..self.draws_per_size {
                for zj in z.iter_mut() {
                    *zj = rng.random_range(0..m);
                }
                if checker.injective(&kmod, d, &z, m) {
                    return Ok(Rank1Lattice { z: z.clone(), m });
                }
            }
            let grown = ((m as f64) * self.growth).ceil() as u64;
            m = next_prime(grown.max(m + 1));
        }
    }
}

/// Searches with default options and `N_Γ` taken from the set's own extent.
pub fn find_reconstructing(set: &FrequencySet, seed: u64) -> Result<Rank1Lattice> {
    LatticeSearch::default().find(set, seed)
}

/// Frequencies reduced modulo `m`, flattened row-major.
pub(crate) fn reduce_frequencies(set: &FrequencySet, m: u64) -> Vec<u64> {
    let mi = m as i64;
    set.iter()
        .flat_map(|k| k.iter().map(move |&c| (c as i64).rem_euclid(mi) as u64))
        .collect()
}

#[inline]
pub(crate) fn residue_reduced(kmod: &[u64], z: &[u64], m: u64) -> u64 {
    let mut acc: u128 = 0;
    for (&k, &zj) in kmod.iter().zip(z) {
        acc += k as u128 * zj as u128;
    }
    (acc % m as u128) as u64
}

/// Collision detection with early exit, reusing a stamp table across draws.
#[derive(Default)]
pub(crate) struct ResidueChecker {
    stamps: Vec<u32>,
    generation: u32,
    seen: HashSet<u64>,
}

const STAMP_LIMIT: u64 = 1 << 24;

impl ResidueChecker {
    fn injective(&mut self, kmod: &[u64], d: usize, z: &[u64], m: u64) -> bool {
        if m <= STAMP_LIMIT {
            if self.stamps.len() < m as usize {
                self.stamps = vec![0; m as usize];
                self.generation = 0;
            }
            self.generation = self.generation.wrapping_add(1);
            if self.generation == 0 {
                self.stamps.iter_mut().for_each(|s| *s = 0);
                self.generation = 1;
            }
            for k in kmod.chunks(d) {
                let r = residue_reduced(k, z, m) as usize;
                if self.stamps[r] == self.generation {
                    return false;
                }
                self.stamps[r] = self.generation;
            }
            true
        } else {
            self.seen.clear();
            kmod.chunks(d)
                .all(|k| self.seen.insert(residue_reduced(k, z, m)))
        }
    }
}

/// FFT bin of each frequency on `lat`.
fn bins(set: &FrequencySet, lat: &Rank1Lattice) -> Result<Vec<usize>> {
    Ok(lat.residues(set)?.into_iter().map(|r| r as usize).collect())
}

/// Length-`M` forward DFT of `samples` scaled by `1/M`:
/// `ĉ_r = (1/M) Σ_i p(x_i) e^{-2πi·i·r/M}`.
pub(crate) fn lattice_spectrum(samples: &[Complex64]) -> Vec<Complex64> {
    let m = samples.len();
    let mut buf = samples.to_vec();
    forward_fft(m).process(&mut buf);
    let scale = 1.0 / m as f64;
    buf.iter_mut().for_each(|v| *v *= scale);
    buf
}

/// Fourier coefficients on `set` from samples at the nodes of `lat` (node order).
/// Exact for polynomials supported on `set` whenever `lat` is reconstructing for it.
pub fn lattice_coefficients(
    samples: &[Complex64],
    set: &FrequencySet,
    lat: &Rank1Lattice,
) -> Result<Vec<Complex64>> {
    if samples.len() as u64 != lat.size() {
        return invalid(format!(
            "expected {} samples, got {}",
            lat.size(),
            samples.len()
        ));
    }
    let bins = bins(set, lat)?;
    let spec = lattice_spectrum(samples);
    Ok(bins.iter().map(|&b| spec[b]).collect())
}

/// Row-wise [`lattice_coefficients`] for a `G × M` sample block.
pub fn lattice_coefficients_rows(
    samples: &CMatrix,
    set: &FrequencySet,
    lat: &Rank1Lattice,
) -> Result<CMatrix> {
    if samples.cols() as u64 != lat.size() {
        return invalid(format!(
            "expected {} sample columns, got {}",
            lat.size(),
            samples.cols()
        ));
    }
    let bins = bins(set, lat)?;
    let rows: Vec<Vec<Complex64>> = (0..samples.rows())
        .into_par_iter()
        .map(|g| {
            let spec = lattice_spectrum(samples.row(g));
            bins.iter().map(|&b| spec[b]).collect()
        })
        .collect();
    let mut out = CMatrix::zeros(samples.rows(), set.len());
    for (g, r) in rows.into_iter().enumerate() {
        out.row_mut(g).copy_from_slice(&r);
    }
    Ok(out)
}

/// The pole shift `Δ = 1/(4M)` maximizing the distance of the lattice nodes
/// `{n/M}` to both `Δ` and `Δ + 1/2`, for prime `M > 2`.
pub fn delta_opt(m: u64) -> Result<f64> {
    if m <= 2 || !is_prime(m) {
        return invalid(format!("optimal shift needs a prime lattice size > 2, got {m}"));
    }
    Ok(1.0 / (4.0 * m as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freq::Frequency;

    fn set(d: usize, v: &[&[i32]]) -> FrequencySet {
        FrequencySet::from_frequencies(d, v.iter().map(|k| k.to_vec())).unwrap()
    }

    #[test]
    fn node_examples() {
        let lat = Rank1Lattice::new(&[1, 3], 5).unwrap();
        assert_eq!(lat.node(2), vec![0.4, 0.2]);
        assert_eq!(lat.node(0), vec![0.0, 0.0]);
        let lat = Rank1Lattice::new(&[0, 1], 3).unwrap();
        let nodes = lat.nodes();
        assert!(nodes.chunks(2).all(|p| p[0] == 0.0));
        assert_eq!(nodes.len(), 6);
    }

    #[test]
    fn constructor_rejects_composite_sizes() {
        assert!(Rank1Lattice::new(&[1], 4).is_err());
        assert!(Rank1Lattice::new(&[1], 2).is_err());
        assert_eq!(Rank1Lattice::new(&[-1, 7], 5).unwrap().generator(), &[4, 2]);
    }

    #[test]
    fn residue_examples() {
        let lat = Rank1Lattice::new(&[1, 2], 5).unwrap();
        assert_eq!(lat.residues(&set(2, &[&[0, 0], &[1, 0], &[0, 1]])).unwrap(), vec![0, 1, 2]);
        assert_eq!(lat.residues(&set(2, &[&[5, 0]])).unwrap(), vec![0]);
        assert_eq!(lat.residues(&set(2, &[&[-1, 0]])).unwrap(), vec![4]);
        assert!(lat.residues(&set(1, &[&[0]])).is_err());
    }

    #[test]
    fn reconstructing_examples() {
        let lat = Rank1Lattice::new(&[1, 2], 5).unwrap();
        assert!(lat.is_reconstructing(&set(2, &[&[0, 0], &[1, 0], &[0, 1]])).unwrap());
        assert!(!lat.is_reconstructing(&set(2, &[&[0, 0], &[5, 0]])).unwrap());
        assert!(lat.is_reconstructing(&set(2, &[&[17, -40]])).unwrap());
    }

    #[test]
    fn find_for_singleton_and_line() {
        let s = set(2, &[&[3, -1]]);
        let lat = find_reconstructing(&s, 1).unwrap();
        assert!(lat.is_reconstructing(&s).unwrap());

        let line = FrequencySet::from_frequencies(1, (0..8).map(|k| vec![k])).unwrap();
        let lat = find_reconstructing(&line, 7).unwrap();
        assert!(lat.size() >= 17 && lat.is_reconstructing(&line).unwrap());
        // Any z coprime to M works once M > 7.
        assert!(Rank1Lattice::new(&[1], 17).unwrap().is_reconstructing(&line).unwrap());
    }

    #[test]
    fn find_respects_size_cap() {
        let line = FrequencySet::from_frequencies(1, (0..200).map(|k| vec![k])).unwrap();
        let search = LatticeSearch {
            max_size: 101,
            ..LatticeSearch::default()
        };
        assert!(matches!(search.find(&line, 0), Err(Error::ResourceLimit(_))));
    }

    #[test]
    fn coefficient_examples() {
        let lat = Rank1Lattice::new(&[1, 2], 5).unwrap();
        let s = set(2, &[&[1, 0], &[0, 1]]);
        let samples: Vec<Complex64> = (0..5)
            .map(|i| {
                let x = lat.node(i);
                Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * x[0])
            })
            .collect();
        let c = lattice_coefficients(&samples, &s, &lat).unwrap();
        assert!((c[0] - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        assert!(c[1].norm() < 1e-14);

        let zeros = vec![Complex64::new(0.0, 0.0); 5];
        assert!(lattice_coefficients(&zeros, &s, &lat).unwrap().iter().all(|c| c.norm() == 0.0));
        assert!(lattice_coefficients(&zeros[..4], &s, &lat).is_err());
    }

    #[test]
    fn coefficient_of_two_term_polynomial() {
        // p(x) = 2 + 3 e^{2πi(2x₁ + x₂)}
        let s = set(2, &[&[0, 0], &[2, 1]]);
        let lat = find_reconstructing(&s, 3).unwrap();
        let samples: Vec<Complex64> = (0..lat.size())
            .map(|i| {
                let x = lat.node(i);
                let phase = 2.0 * std::f64::consts::PI * (2.0 * x[0] + x[1]);
                Complex64::new(2.0, 0.0) + Complex64::from_polar(3.0, phase)
            })
            .collect();
        let c = lattice_coefficients(&samples, &s, &lat).unwrap();
        assert!((c[0] - Complex64::new(2.0, 0.0)).norm() < 1e-12);
        assert!((c[1] - Complex64::new(3.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn delta_opt_values() {
        assert_eq!(delta_opt(5).unwrap(), 0.05);
        assert!((delta_opt(3).unwrap() - 1.0 / 12.0).abs() < 1e-16);
        assert!(delta_opt(9).is_err());
        assert!(delta_opt(2).is_err());
    }

    #[test]
    fn pole_guard_rejects_small_sizes() {
        let guard = PoleGuard {
            delta: 1.0 / (4.0 * 4099.0),
        };
        // Node 0 sits at distance Δ from the first pole, which is < 1/(8M) for M < 2050.
        assert!(!guard.admits(&Rank1Lattice::new(&[1], 2003).unwrap()));
        assert!(guard.admits(&Rank1Lattice::new(&[1], 4099).unwrap()));
        let own = PoleGuard {
            delta: delta_opt(101).unwrap(),
        };
        assert!(own.admits(&Rank1Lattice::new(&[3, 5], 101).unwrap()));
    }

    #[test]
    fn lattice_line_round_trip() {
        let lat = Rank1Lattice::new(&[1, 33, 1089], 4099).unwrap();
        assert_eq!(lat.to_line(), "M=4099 z=1,33,1089");
        assert_eq!(Rank1Lattice::from_line(&lat.to_line()).unwrap(), lat);
        assert!(Rank1Lattice::from_line("M=10 z=1").is_err());
    }

    #[test]
    fn residue_helpers_agree() {
        let s = set(3, &[&[-7, 3, 30], &[0, -1, 2]]);
        let lat = Rank1Lattice::new(&[11, 57, 3], 101).unwrap();
        let kmod = reduce_frequencies(&s, 101);
        let via_reduced: Vec<u64> = kmod
            .chunks(3)
            .map(|k| residue_reduced(k, lat.generator(), 101))
            .collect();
        assert_eq!(via_reduced, lat.residues(&s).unwrap());
        assert_eq!(Frequency::from([-7, 3, 30]).residue(lat.generator(), 101), via_reduced[0]);
    }
}

//! Sparse trigonometric polynomials with known coefficients, used as exact
//! black boxes for recovery tests.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use crate::detect::BlackBox;
use crate::error::{invalid, Result};
use crate::freq::{Frequency, FrequencySet};
use crate::lattice::{inverse_fft, Rank1Lattice};
use crate::matrix::CMatrix;

/// `p_g(x) = Σ_{k ∈ I} c_{g,k} e^{2πi k·x}` for `g = 1..G`.
#[derive(Clone, Debug)]
pub struct SparseTrigPolynomials {
    frequencies: FrequencySet,
    coefficients: CMatrix,
}

impl SparseTrigPolynomials {
    pub fn new(frequencies: FrequencySet, coefficients: CMatrix) -> Result<Self> {
        if coefficients.cols() != frequencies.len() || frequencies.dim() == 0 {
            return invalid("coefficient matrix does not match the frequency set");
        }
        Ok(SparseTrigPolynomials {
            frequencies,
            coefficients,
        })
    }

    /// `G` polynomials drawing `per_output` frequencies each from a shared pool
    /// of `pool` random frequencies in `[-half, half]^d`. Coefficients have
    /// magnitude uniform in `[min_abs, 2 min_abs]` and uniform phase.
    pub fn random<R: Rng>(
        d: usize,
        outputs: usize,
        pool: usize,
        per_output: usize,
        half: i32,
        min_abs: f64,
        rng: &mut R,
    ) -> Self {
        assert!(per_output <= pool, "per-output support larger than the pool");
        let mut set = FrequencySet::new(d);
        while set.len() < pool {
            let k: Vec<i32> = (0..d).map(|_| rng.random_range(-half..=half)).collect();
            set.insert(Frequency::new(k)).expect("dimension matches");
        }
        let mut coefficients = CMatrix::zeros(outputs, pool);
        for g in 0..outputs {
            for j in sample(rng, pool, per_output) {
                let r = rng.random_range(min_abs..=2.0 * min_abs);
                let phase = rng.random_range(0.0..2.0 * PI);
                coefficients.set(g, j, Complex64::from_polar(r, phase));
            }
        }
        SparseTrigPolynomials {
            frequencies: set,
            coefficients,
        }
    }

    pub fn frequencies(&self) -> &FrequencySet {
        &self.frequencies
    }

    pub fn coefficients(&self) -> &CMatrix {
        &self.coefficients
    }

    /// Frequencies with a nonzero coefficient for functional `g`.
    pub fn support(&self, g: usize) -> FrequencySet {
        let mut s = FrequencySet::new(self.frequencies.dim());
        for (j, k) in self.frequencies.iter().enumerate() {
            if self.coefficients.get(g, j) != Complex64::new(0.0, 0.0) {
                s.insert(k.clone()).expect("dimension matches");
            }
        }
        s
    }

    pub fn coefficient(&self, g: usize, k: &Frequency) -> Complex64 {
        self.frequencies
            .index_of(k)
            .map_or(Complex64::new(0.0, 0.0), |j| self.coefficients.get(g, j))
    }
}

impl BlackBox for SparseTrigPolynomials {
    fn dimension(&self) -> usize {
        self.frequencies.dim()
    }

    fn outputs(&self) -> usize {
        self.coefficients.rows()
    }

    fn evaluate(&self, points: &[f64]) -> Result<CMatrix> {
        let d = self.dimension();
        if !points.len().is_multiple_of(d) {
            return invalid("point buffer length is not a multiple of the dimension");
        }
        let n = points.len() / d;
        let cols: Vec<Vec<Complex64>> = points
            .par_chunks(d)
            .map(|x| {
                let basis: Vec<Complex64> = self
                    .frequencies
                    .iter()
                    .map(|k| {
                        let ph: f64 = k.iter().zip(x).map(|(&kj, &xj)| kj as f64 * xj).sum();
                        Complex64::from_polar(1.0, 2.0 * PI * ph)
                    })
                    .collect();
                (0..self.outputs())
                    .map(|g| self.coefficients.row(g).iter().zip(&basis).map(|(c, b)| c * b).sum())
                    .collect()
            })
            .collect();
        let mut out = CMatrix::zeros(self.outputs(), n);
        for (i, col) in cols.into_iter().enumerate() {
            for (g, v) in col.into_iter().enumerate() {
                out.set(g, i, v);
            }
        }
        Ok(out)
    }

    /// Bins every term at residue `k_lead · z mod M` (trailing part folded into
    /// the coefficient) and applies one inverse FFT per functional.
    fn evaluate_lattice(&self, lat: &Rank1Lattice, trailing: &[f64], _batch: usize) -> Result<CMatrix> {
        let t = lat.dim();
        if t + trailing.len() != self.dimension() {
            return invalid("lattice and trailing dimensions do not add up");
        }
        let m = lat.size() as usize;
        let mut bins = CMatrix::zeros(self.outputs(), m);
        for (j, k) in self.frequencies.iter().enumerate() {
            let lead = Frequency::new(k[..t].to_vec());
            let r = lead.residue(lat.generator(), lat.size()) as usize;
            let ph: f64 = k[t..].iter().zip(trailing).map(|(&kj, &xj)| kj as f64 * xj).sum();
            let factor = Complex64::from_polar(1.0, 2.0 * PI * ph);
            for g in 0..self.outputs() {
                let c = self.coefficients.get(g, j);
                let row = bins.row_mut(g);
                row[r] += c * factor;
            }
        }
        let fft = inverse_fft(m);
        bins.as_mut_slice().par_chunks_mut(m).for_each(|row| fft.process(row));
        Ok(bins)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::lattice_points;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fast_lattice_path_matches_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = SparseTrigPolynomials::random(4, 3, 12, 6, 9, 1.0, &mut rng);
        let lat = Rank1Lattice::new(&[1, 17, 40], 101).unwrap();
        let trailing = [0.3141];
        let fast = p.evaluate_lattice(&lat, &trailing, 1).unwrap();
        let direct = p.evaluate(&lattice_points(&lat, &trailing, 0..101)).unwrap();
        for (a, b) in fast.as_slice().iter().zip(direct.as_slice()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn random_supports_have_requested_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = SparseTrigPolynomials::random(6, 5, 30, 20, 32, 1.0, &mut rng);
        for g in 0..5 {
            let s = p.support(g);
            assert_eq!(s.len(), 20);
            for k in s.iter() {
                let c = p.coefficient(g, k).norm();
                assert!((1.0..=2.0).contains(&c));
            }
        }
    }
}

//! Multiple rank-1 lattice covers: several small lattices, each responsible
//! for the frequencies that do not alias on it.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    lattice_coefficients_rows, next_prime, reduce_frequencies, residue_reduced, set_extent,
    PoleGuard, Rank1Lattice,
};
use crate::error::{invalid, Error, Result};
use crate::freq::FrequencySet;
use crate::matrix::CMatrix;

/// A cover of a frequency set by rank-1 lattices. `assignment[i]` is the
/// lattice responsible for the `i`-th frequency of the covered set.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeCover {
    lattices: Vec<Rank1Lattice>,
    assignment: Vec<usize>,
}

impl LatticeCover {
    pub fn lattices(&self) -> &[Rank1Lattice] {
        &self.lattices
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn total_nodes(&self) -> u64 {
        self.lattices.iter().map(Rank1Lattice::size).sum()
    }

    /// Checks that every frequency of `set` is alias-free on its lattice
    /// against the whole of `set`.
    pub fn is_valid_for(&self, set: &FrequencySet) -> Result<bool> {
        if self.assignment.len() != set.len() {
            return Ok(false);
        }
        for (l, lat) in self.lattices.iter().enumerate() {
            let r = lat.residues(set)?;
            let mut counts = std::collections::HashMap::new();
            for &v in &r {
                *counts.entry(v).or_insert(0usize) += 1;
            }
            for (i, &a) in self.assignment.iter().enumerate() {
                if a == l && counts[&r[i]] != 1 {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

/// Size bound `⌈2 ln(2|I|)⌉ · 4(|I| − 1)` on the total number of cover nodes
/// that holds with high probability.
pub fn cover_size_bound(n: usize) -> u64 {
    if n < 2 {
        return 0;
    }
    let lattices = (2.0 * (2.0 * n as f64).ln()).ceil() as u64;
    lattices * 4 * (n as u64 - 1)
}

#[derive(Clone, Debug)]
pub struct CoverOptions {
    /// `N_Γ`; `None` uses the extent of the target set itself.
    pub n_gamma: Option<u64>,
    pub pole_guard: Option<PoleGuard>,
    /// Consecutive draws assigning nothing before giving up.
    pub max_empty_draws: usize,
}

impl Default for CoverOptions {
    fn default() -> Self {
        CoverOptions {
            n_gamma: None,
            pole_guard: None,
            max_empty_draws: 100,
        }
    }
}

impl CoverOptions {
    /// All lattices share the size `M` = smallest admissible prime
    /// `> max(2|I|, N_Γ)`; each draw of `z` claims the still-unassigned
    /// frequencies whose residue is unique among the full set.
    pub fn build(&self, set: &FrequencySet, seed: u64) -> Result<LatticeCover> {
        if set.is_empty() {
            return invalid("cannot cover an empty frequency set");
        }
        let d = set.dim();
        let n = set.len();
        let n_gamma = self.n_gamma.unwrap_or_else(|| set_extent(set));
        let mut m = next_prime((2 * n as u64).max(n_gamma).max(2) + 1);
        if let Some(guard) = &self.pole_guard {
            while !guard.admits(&Rank1Lattice { z: vec![1; d], m }) {
                m = next_prime(m + 1);
            }
        }
        let kmod = reduce_frequencies(set, m);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut assignment = vec![usize::MAX; n];
        let mut remaining = n;
        let mut lattices = Vec::new();
        let mut counts = vec![0u32; m as usize];
        let mut residues = vec![0u64; n];
        let mut z = vec![0u64; d];
        let mut empty = 0;
        while remaining > 0 {
            for zj in z.iter_mut() {
                *zj = rng.random_range(0..m);
            }
            for (r, k) in residues.iter_mut().zip(kmod.chunks(d)) {
                *r = residue_reduced(k, &z, m);
                counts[*r as usize] += 1;
            }
            let index = lattices.len();
            let mut claimed = 0;
            for (a, &r) in assignment.iter_mut().zip(&residues) {
                if *a == usize::MAX && counts[r as usize] == 1 {
                    *a = index;
                    claimed += 1;
                }
            }
            for &r in &residues {
                counts[r as usize] = 0;
            }
            if claimed == 0 {
                empty += 1;
                if empty >= self.max_empty_draws {
                    return Err(Error::Construction(format!(
                        "{remaining} of {n} frequencies unassigned after {empty} empty draws at M = {m}"
                    )));
                }
                continue;
            }
            empty = 0;
            remaining -= claimed;
            lattices.push(Rank1Lattice { z: z.clone(), m });
        }
        let cover = LatticeCover {
            lattices,
            assignment,
        };
        let bound = cover_size_bound(n);
        if n >= 2 && cover.total_nodes() > bound {
            log::warn!(
                "lattice cover uses {} nodes, above the typical bound {bound}",
                cover.total_nodes()
            );
        }
        Ok(cover)
    }
}

pub fn build_cover(set: &FrequencySet, seed: u64) -> Result<LatticeCover> {
    CoverOptions::default().build(set, seed)
}

/// Coefficients of every frequency in `set` from `G × M_l` sample blocks, one
/// per cover lattice in node order. Returns `G × |set|`.
pub fn cover_coefficients(
    samples: &[CMatrix],
    cover: &LatticeCover,
    set: &FrequencySet,
) -> Result<CMatrix> {
    if samples.len() != cover.lattices.len() {
        return invalid(format!(
            "expected {} sample blocks, got {}",
            cover.lattices.len(),
            samples.len()
        ));
    }
    if cover.assignment.len() != set.len() {
        return invalid("cover does not match the frequency set");
    }
    let g = samples.first().map_or(0, CMatrix::rows);
    if samples.iter().any(|s| s.rows() != g) {
        return invalid("sample blocks disagree on the number of functionals");
    }
    let mut out = CMatrix::zeros(g, set.len());
    for (l, (lat, block)) in cover.lattices.iter().zip(samples).enumerate() {
        let members: Vec<usize> = (0..set.len())
            .filter(|&i| cover.assignment[i] == l)
            .collect();
        let sub = FrequencySet::from_frequencies(
            set.dim(),
            members.iter().map(|&i| set.get(i).expect("index in range").clone()),
        )?;
        let coeffs = lattice_coefficients_rows(block, &sub, lat)?;
        for row in 0..g {
            for (j, &i) in members.iter().enumerate() {
                out.set(row, i, coeffs.get(row, j));
            }
        }
    }
    Ok(out)
}

/// Single-functional convenience wrapper around [`cover_coefficients`].
pub fn cover_coefficients_single(
    samples: &[Vec<Complex64>],
    cover: &LatticeCover,
    set: &FrequencySet,
) -> Result<Vec<Complex64>> {
    let blocks: Vec<CMatrix> = samples
        .iter()
        .map(|s| CMatrix::from_vec(1, s.len(), s.clone()))
        .collect();
    Ok(cover_coefficients(&blocks, cover, set)?.row(0).to_vec())
}

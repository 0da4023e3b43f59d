//! A PDE model seen as a black box on the torus.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::detect::{point_key, BlackBox};
use crate::error::{invalid, Error, Result};
use crate::matrix::CMatrix;
use crate::pde::PdeSolver;
use crate::periodize::{Periodization, LOGNORMAL_CLAMP};

/// Solutions kept in memory before the cache is flushed.
pub const DEFAULT_CACHE_CAPACITY: usize = 1 << 15;

/// Evaluates `ỹ ↦ (ǔ(x_g, φ(ỹ)))_g` with one solve per distinct point.
///
/// Points are keyed by their exact bit pattern. A point is solved at most once
/// while it stays cached; the distinct-point counter never forgets, so it is
/// the sample count of everything evaluated through this instance.
pub struct PdeBlackBox {
    solver: Arc<PdeSolver>,
    periodization: Periodization,
    cache: Mutex<HashMap<u128, Arc<[f64]>>>,
    capacity: usize,
    seen: Mutex<HashSet<u128>>,
    solves: AtomicUsize,
}

impl PdeBlackBox {
    /// Torus black box; `periodization` must match the model kind.
    pub fn new(solver: Arc<PdeSolver>, periodization: Periodization) -> Result<Self> {
        if !solver.model().accepts(&periodization) {
            return invalid(format!(
                "periodization for the {} model cannot be used with the {} model",
                periodization.model_name(),
                solver.model().kind().name()
            ));
        }
        Ok(Self::build(solver, periodization))
    }

    /// Black box taking parameters `y ∈ D_y` directly, used as the reference
    /// when measuring errors.
    pub fn reference(solver: Arc<PdeSolver>) -> Self {
        Self::build(solver, Periodization::None)
    }

    fn build(solver: Arc<PdeSolver>, periodization: Periodization) -> Self {
        PdeBlackBox {
            solver,
            periodization,
            cache: Mutex::new(HashMap::new()),
            capacity: DEFAULT_CACHE_CAPACITY,
            seen: Mutex::new(HashSet::new()),
            solves: AtomicUsize::new(0),
        }
    }

    pub fn with_cache_capacity(mut self, capacity: usize) -> Self {
        self.capacity = capacity;
        self
    }

    pub fn solver(&self) -> &PdeSolver {
        &self.solver
    }

    pub fn periodization(&self) -> Periodization {
        self.periodization
    }

    /// Number of distinct points evaluated so far.
    pub fn distinct_solves(&self) -> usize {
        self.seen.lock().expect("lock").len()
    }

    /// Number of solver invocations, including re-solves after cache flushes.
    pub fn solver_calls(&self) -> usize {
        self.solves.load(Ordering::Relaxed)
    }

    /// Parameter vector for a torus point; lognormal values are clamped.
    pub fn parameters(&self, yt: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; yt.len()];
        self.periodization.forward_point(yt, &mut y)?;
        if let Periodization::Lognormal { .. } = self.periodization {
            y.iter_mut().for_each(|v| *v = v.clamp(-LOGNORMAL_CLAMP, LOGNORMAL_CLAMP));
        }
        Ok(y)
    }

    fn solve_point(&self, yt: &[f64]) -> Result<Arc<[f64]>> {
        let wrap = |e: Error| Error::BlackBox {
            point: yt.to_vec(),
            source: Box::new(e),
        };
        let y = self.parameters(yt).map_err(wrap)?;
        let u = self.solver.solve(&y).map_err(wrap)?;
        self.solves.fetch_add(1, Ordering::Relaxed);
        Ok(u.into())
    }
}

impl BlackBox for PdeBlackBox {
    fn dimension(&self) -> usize {
        self.solver.model().d_y()
    }

    fn outputs(&self) -> usize {
        self.solver.outputs()
    }

    fn evaluate(&self, points: &[f64]) -> Result<CMatrix> {
        let d = self.dimension();
        if !points.len().is_multiple_of(d) {
            return invalid("point buffer length is not a multiple of the dimension");
        }
        let n = points.len() / d;
        let keys: Vec<u128> = points.chunks_exact(d).map(point_key).collect();

        // First occurrence of every key not already cached.
        let mut missing: Vec<usize> = Vec::new();
        {
            let cache = self.cache.lock().expect("lock");
            let mut batch = HashSet::new();
            for (i, k) in keys.iter().enumerate() {
                if !cache.contains_key(k) && batch.insert(*k) {
                    missing.push(i);
                }
            }
        }
        let solved: Vec<(u128, Arc<[f64]>)> = missing
            .par_iter()
            .map(|&i| Ok((keys[i], self.solve_point(&points[i * d..(i + 1) * d])?)))
            .collect::<Result<_>>()?;

        let mut cache = self.cache.lock().expect("lock");
        let mut local: HashMap<u128, Arc<[f64]>> = HashMap::with_capacity(solved.len());
        {
            let mut seen = self.seen.lock().expect("lock");
            for (k, u) in solved {
                seen.insert(k);
                local.insert(k, u);
            }
        }
        let g = self.outputs();
        let mut out = CMatrix::zeros(g, n);
        for (i, k) in keys.iter().enumerate() {
            let u = local.get(k).or_else(|| cache.get(k)).expect("every key solved or cached");
            for (r, v) in u.iter().enumerate() {
                out.set(r, i, Complex64::new(*v, 0.0));
            }
        }
        if cache.len() + local.len() > self.capacity {
            cache.clear();
        }
        if local.len() <= self.capacity {
            cache.extend(local);
        }
        Ok(out)
    }
}

//! Elliptic model problems `−∇·(a(·, y)∇u) = f` on the unit square with a
//! random coefficient, solved by P1 finite elements.

mod blackbox;
mod fem;
mod mesh;

use std::f64::consts::PI;

pub use blackbox::{PdeBlackBox, DEFAULT_CACHE_CAPACITY};
pub use fem::{conjugate_gradient, BandCholesky, BandMatrix, Fem, LinearSolver, RESIDUAL_TOL};
pub use mesh::{Mesh, Triangle};

use crate::error::{invalid, Error, Result};
use crate::periodize::{Periodization, DEFAULT_SHIFT_LATTICE_SIZE};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ModelKind {
    /// `a = 1 + (1/√6) Σ sin(2πy_j) ψ_j`, `ψ_j = c j^{−μ} sin(jπx₁) sin(jπx₂)`, `y ~ U[−1/2, 1/2]`.
    Periodic { mu: f64, c: f64 },
    /// `a = 1 + Σ y_j ψ_j`, `ψ_j = c j^{−μ} cos(2πm₁x₁) cos(2πm₂x₂)`, `y ~ U[−1, 1]`.
    Affine { mu: f64, c: f64 },
    /// `a = exp(Σ y_j ψ_j / j)`, `ψ_j = sin(2πjx₁) cos(2π(d_y+1−j)x₂)`, `y ~ N(0, 1)`.
    Lognormal,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Periodic { .. } => "periodic",
            ModelKind::Affine { .. } => "affine",
            ModelKind::Lognormal => "lognormal",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rhs {
    /// `f(x) = x₂`
    X2,
    /// `f ≡ 1`
    One,
    /// `f(x) = sin(1.3πx₁ + 3.4πx₂) cos(4.3πx₁ − 3.1πx₂)`
    Trig,
}

impl Rhs {
    pub fn eval(&self, [x1, x2]: [f64; 2]) -> f64 {
        match self {
            Rhs::X2 => x2,
            Rhs::One => 1.0,
            Rhs::Trig => (1.3 * PI * x1 + 3.4 * PI * x2).sin() * (4.3 * PI * x1 - 3.1 * PI * x2).cos(),
        }
    }
}

/// `ζ(μ)` for `μ > 1`: partial sum plus an Euler–Maclaurin tail, accurate to
/// far below `1e-12`.
pub fn zeta(mu: f64) -> f64 {
    assert!(mu > 1.0, "zeta needs mu > 1");
    const N: usize = 64;
    let head: f64 = (1..N).rev().map(|k| (k as f64).powf(-mu)).sum();
    let n = N as f64;
    let p = |k: i32| n.powf(-mu - k as f64);
    let tail = n.powf(1.0 - mu) / (mu - 1.0) + 0.5 * p(0) + mu / 12.0 * p(1)
        - mu * (mu + 1.0) * (mu + 2.0) / 720.0 * p(3)
        + mu * (mu + 1.0) * (mu + 2.0) * (mu + 3.0) * (mu + 4.0) / 30240.0 * p(5);
    head + tail
}

/// `(m₁(j), m₂(j), k(j))` enumerating `ℕ₀²` along anti-diagonals.
pub fn diag_index(j: usize) -> Result<(usize, usize, usize)> {
    if j < 1 {
        return invalid("diagonal index needs j >= 1");
    }
    let mut k = ((-0.5 + (0.25 + 2.0 * j as f64).sqrt()).floor()) as usize;
    // Guard the float floor against rounding at triangular numbers.
    while k * (k + 1) / 2 > j {
        k -= 1;
    }
    while (k + 1) * (k + 2) / 2 <= j {
        k += 1;
    }
    let m1 = j - k * (k + 1) / 2;
    Ok((m1, k - m1, k))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PdeModel {
    kind: ModelKind,
    d_y: usize,
    rhs: Rhs,
}

impl PdeModel {
    pub fn new(kind: ModelKind, d_y: usize, rhs: Rhs) -> Result<Self> {
        if d_y == 0 {
            return invalid("stochastic dimension must be positive");
        }
        match kind {
            ModelKind::Periodic { mu, c } | ModelKind::Affine { mu, c } => {
                if !(mu > 1.0) || !mu.is_finite() {
                    return invalid(format!("decay rate must exceed 1, got {mu}"));
                }
                if !(c >= 0.0) || !c.is_finite() {
                    return invalid(format!("coefficient scale must be nonnegative, got {c}"));
                }
                let limit = match kind {
                    ModelKind::Periodic { .. } => 6f64.sqrt() / zeta(mu),
                    _ => 1.0 / zeta(mu),
                };
                if c >= limit {
                    return Err(Error::Model(format!(
                        "{} model with mu = {mu}, c = {c} is not uniformly elliptic (needs c < {limit})",
                        kind.name()
                    )));
                }
            }
            ModelKind::Lognormal => {
                log::warn!("lognormal model is neither uniformly elliptic nor uniformly bounded");
            }
        }
        Ok(PdeModel { kind, d_y, rhs })
    }

    /// Periodic model with `f = x₂`.
    pub fn periodic(mu: f64, c: f64, d_y: usize) -> Result<Self> {
        Self::new(ModelKind::Periodic { mu, c }, d_y, Rhs::X2)
    }

    /// Affine model with `f ≡ 1`.
    pub fn affine(mu: f64, c: f64, d_y: usize) -> Result<Self> {
        Self::new(ModelKind::Affine { mu, c }, d_y, Rhs::One)
    }

    /// Lognormal model with the trigonometric right-hand side.
    pub fn lognormal(d_y: usize) -> Result<Self> {
        Self::new(ModelKind::Lognormal, d_y, Rhs::Trig)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn d_y(&self) -> usize {
        self.d_y
    }

    pub fn rhs(&self) -> Rhs {
        self.rhs
    }

    /// Scaled basis function: `ψ̂_j` such that the coefficient is
    /// `1 + Σ w_j(y) ψ̂_j(x)` (periodic, affine) or `exp(Σ y_j ψ̂_j(x))` (lognormal).
    pub fn scaled_psi(&self, j: usize, [x1, x2]: [f64; 2]) -> f64 {
        let jf = j as f64;
        match self.kind {
            ModelKind::Periodic { mu, c } => {
                c * jf.powf(-mu) * (jf * PI * x1).sin() * (jf * PI * x2).sin() / 6f64.sqrt()
            }
            ModelKind::Affine { mu, c } => {
                let (m1, m2, _) = diag_index(j).expect("j >= 1");
                c * jf.powf(-mu) * (2.0 * PI * m1 as f64 * x1).cos() * (2.0 * PI * m2 as f64 * x2).cos()
            }
            ModelKind::Lognormal => {
                let m = (self.d_y + 1 - j) as f64;
                (2.0 * PI * jf * x1).sin() * (2.0 * PI * m * x2).cos() / jf
            }
        }
    }

    /// Parameter weights `w_j(y)`: `sin(2πy_j)` for the periodic model, `y_j` otherwise.
    fn weights(&self, y: &[f64]) -> Vec<f64> {
        match self.kind {
            ModelKind::Periodic { .. } => y.iter().map(|v| (2.0 * PI * v).sin()).collect(),
            _ => y.to_vec(),
        }
    }

    fn combine(&self, s: f64) -> f64 {
        match self.kind {
            ModelKind::Lognormal => s.exp(),
            _ => 1.0 + s,
        }
    }

    pub fn coefficient(&self, x: [f64; 2], y: &[f64]) -> Result<f64> {
        self.check_parameters(y)?;
        let w = self.weights(y);
        let s: f64 = w.iter().enumerate().map(|(j, wj)| wj * self.scaled_psi(j + 1, x)).sum();
        Ok(self.combine(s))
    }

    fn check_parameters(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.d_y {
            return invalid(format!("expected {} parameters, got {}", self.d_y, y.len()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite parameter in {y:?}")));
        }
        if let ModelKind::Affine { .. } = self.kind {
            if y.iter().any(|v| v.abs() > 1.0) {
                return Err(Error::Domain(format!("affine parameters must lie in [-1, 1], got {y:?}")));
            }
        }
        Ok(())
    }

    /// `(a_min, a_max)` over all `x` and `y` for the whole series (`d_y → ∞`).
    pub fn ellipticity_bounds(&self) -> Result<(f64, f64)> {
        let r = match self.kind {
            ModelKind::Periodic { mu, c } => c / 6f64.sqrt() * zeta(mu),
            ModelKind::Affine { mu, c } => c * zeta(mu),
            ModelKind::Lognormal => {
                return Err(Error::Unsupported(
                    "the lognormal coefficient has no ellipticity bounds".into(),
                ))
            }
        };
        Ok((1.0 - r, 1.0 + r))
    }

    /// The periodization paired with this model: none, tent on `[−1, 1]`, or
    /// lognormal with `Δ = 1/(4·4099)`.
    pub fn default_periodization(&self) -> Periodization {
        match self.kind {
            ModelKind::Periodic { .. } => Periodization::None,
            ModelKind::Affine { .. } => Periodization::Tent { alpha: -1.0, beta: 1.0 },
            ModelKind::Lognormal => Periodization::Lognormal {
                delta: 1.0 / (4.0 * DEFAULT_SHIFT_LATTICE_SIZE as f64),
            },
        }
    }

    pub fn accepts(&self, p: &Periodization) -> bool {
        p.model_name() == self.kind.name()
    }
}

/// A model bound to a mesh: basis values at the centroids are tabulated once.
#[derive(Clone, Debug)]
pub struct PdeSolver {
    model: PdeModel,
    fem: Fem,
    /// `psi[e * d_y + j]` is `ψ̂_{j+1}` at the centroid of triangle `e`.
    psi: Vec<f64>,
}

impl PdeSolver {
    pub fn new(model: PdeModel, mesh: Mesh, solver: LinearSolver) -> Self {
        let rhs = model.rhs();
        let fem = Fem::new(mesh, |x| rhs.eval(x), solver);
        let d = model.d_y();
        let mut psi = Vec::with_capacity(fem.centroids().len() * d);
        for &c in fem.centroids() {
            for j in 1..=d {
                psi.push(model.scaled_psi(j, c));
            }
        }
        PdeSolver { model, fem, psi }
    }

    pub fn model(&self) -> &PdeModel {
        &self.model
    }

    pub fn mesh(&self) -> &Mesh {
        self.fem.mesh()
    }

    pub fn outputs(&self) -> usize {
        self.mesh().interior_nodes()
    }

    /// Coefficient at every triangle centroid.
    pub fn element_coefficients(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.model.check_parameters(y)?;
        let w = self.model.weights(y);
        let d = w.len();
        let mut out = Vec::with_capacity(self.psi.len() / d);
        for (e, row) in self.psi.chunks_exact(d).enumerate() {
            let s: f64 = row.iter().zip(&w).map(|(p, w)| p * w).sum();
            let a = self.model.combine(s);
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::Model(format!(
                    "coefficient {a} at centroid {:?} is not positive and finite",
                    self.fem.centroids()[e]
                )));
            }
            out.push(a);
        }
        Ok(out)
    }

    /// Nodal solution at the interior nodes for parameter `y`.
    pub fn solve(&self, y: &[f64]) -> Result<Vec<f64>> {
        let a = self.element_coefficients(y)?;
        self.fem.solve(&a)
    }
}

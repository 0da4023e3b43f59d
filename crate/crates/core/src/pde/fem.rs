//! P1 Galerkin assembly with centroid quadrature and banded SPD solvers.

use crate::error::{invalid, Error, Result};
use crate::pde::mesh::Mesh;

/// Relative residual every solve must reach.
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LinearSolver {
    /// Banded Cholesky with one step of iterative refinement if needed.
    #[default]
    Cholesky,
    /// Conjugate gradients with a Jacobi preconditioner.
    ConjugateGradient,
}

/// Symmetric band matrix, lower half stored row-wise. Row `r` holds columns
/// `r−bw ..= r` at offsets `0 ..= bw`, so the diagonal sits at offset `bw`.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandMatrix {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> usize {
        debug_assert!(c <= r && r - c <= self.bw);
        r * (self.bw + 1) + self.bw + c - r
    }

    /// Entry `(r, c)` of the full symmetric matrix.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (r, c) = if c > r { (c, r) } else { (r, c) };
        if r - c > self.bw {
            0.0
        } else {
            self.data[self.at(r, c)]
        }
    }

    /// Adds `v` to `(r, c)` and, implicitly, to `(c, r)`.
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        let (r, c) = if c > r { (c, r) } else { (r, c) };
        assert!(r - c <= self.bw, "entry ({r}, {c}) outside the band");
        let k = self.at(r, c);
        self.data[k] += v;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.data[self.at(r, r)]).collect()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        let w = self.bw + 1;
        for r in 0..self.n {
            let row = &self.data[r * w..(r + 1) * w];
            let c0 = r.saturating_sub(self.bw);
            let off = self.bw + c0 - r;
            let mut acc = row[self.bw] * x[r];
            for (k, c) in (c0..r).enumerate() {
                let a = row[off + k];
                acc += a * x[c];
                y[c] += a * x[r];
            }
            y[r] += acc;
        }
    }

    /// In-place `L Lᵀ` factorization; fails on a non-positive pivot.
    pub fn cholesky(&self) -> Result<BandCholesky> {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        let mut l = self.data.clone();
        for i in 0..n {
            let k0 = i.saturating_sub(bw);
            for j in k0..=i {
                // Σ_{k=k0}^{j−1} L[i][k] L[j][k]; both rows are contiguous in k.
                let ri = i * w + bw - i;
                let rj = j * w + bw - j;
                let mut s = l[ri + j];
                for k in k0..j {
                    s -= l[ri + k] * l[rj + k];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::Numerical(format!(
                            "stiffness matrix not positive definite at pivot {i} ({s:e})"
                        )));
                    }
                    l[ri + i] = s.sqrt();
                } else {
                    l[ri + j] = s / l[rj + j];
                }
            }
        }
        Ok(BandCholesky { n, bw, l })
    }
}

#[derive(Clone, Debug)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        let mut x = b.to_vec();
        for i in 0..n {
            let ri = i * w + bw - i;
            let mut s = x[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l[ri + k] * x[k];
            }
            x[i] = s / self.l[ri + i];
        }
        for i in (0..n).rev() {
            let s = x[i] / self.l[i * w + bw];
            x[i] = s;
            for k in i.saturating_sub(bw)..i {
                x[k] -= self.l[i * w + bw - i + k] * s;
            }
        }
        x
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn residual(a: &BandMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut ax = vec![0.0; x.len()];
    a.matvec(x, &mut ax);
    b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
}

/// Preconditioned CG to relative residual `tol`; at most `max_iter` steps.
pub fn conjugate_gradient(a: &BandMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = a.size();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        a.matvec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(Error::Numerical(format!("CG breakdown, pᵀAp = {pap:e}")));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm(&r) <= tol * bnorm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Numerical(format!(
        "CG did not reach relative residual {tol:e} in {max_iter} iterations"
    )))
}

#[derive(Clone, Debug)]
struct Element {
    /// Interior index per vertex, `None` for boundary vertices.
    dofs: [Option<usize>; 3],
    /// Local stiffness for a unit coefficient.
    local: [[f64; 3]; 3],
}

/// Assembly data for `−∇·(a∇u) = f`, `u = 0` on the boundary, on a fixed mesh
/// and right-hand side. The coefficient enters as one value per triangle.
#[derive(Clone, Debug)]
pub struct Fem {
    mesh: Mesh,
    elements: Vec<Element>,
    centroids: Vec<[f64; 2]>,
    load: Vec<f64>,
    solver: LinearSolver,
}

impl Fem {
    pub fn new(mesh: Mesh, f: impl Fn([f64; 2]) -> f64, solver: LinearSolver) -> Self {
        let h = mesh.h();
        let mut load = vec![0.0; mesh.interior_nodes()];
        let mut elements = Vec::new();
        let mut centroids = Vec::new();
        for tri in mesh.triangles() {
            let p: Vec<[f64; 2]> = tri
                .vertices
                .iter()
                .map(|&(i, j)| [i as f64 * h, j as f64 * h])
                .collect();
            // Edge opposite vertex k, oriented counter-clockwise.
            let e: Vec<[f64; 2]> = (0..3)
                .map(|k| {
                    let (a, b) = (p[(k + 1) % 3], p[(k + 2) % 3]);
                    [b[0] - a[0], b[1] - a[1]]
                })
                .collect();
            let area = 0.5 * (e[2][0] * (-e[1][1]) - (-e[1][0]) * e[2][1]).abs();
            let mut local = [[0.0; 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    local[a][b] = (e[a][0] * e[b][0] + e[a][1] * e[b][1]) / (4.0 * area);
                }
            }
            let dofs = tri.vertices.map(|(i, j)| mesh.node_index(i, j));
            let c = tri.centroid(h);
            let fc = f(c) * area / 3.0;
            for g in dofs.iter().flatten() {
                load[*g] += fc;
            }
            elements.push(Element { dofs, local });
            centroids.push(c);
        }
        Fem {
            mesh,
            elements,
            centroids,
            load,
            solver,
        }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    /// Triangle centroids, the coefficient quadrature points.
    pub fn centroids(&self) -> &[[f64; 2]] {
        &self.centroids
    }

    pub fn load(&self) -> &[f64] {
        &self.load
    }

    pub fn stiffness(&self, coeff: &[f64]) -> Result<BandMatrix> {
        if coeff.len() != self.elements.len() {
            return invalid(format!(
                "need one coefficient per triangle ({}), got {}",
                self.elements.len(),
                coeff.len()
            ));
        }
        let mut k = BandMatrix::zeros(self.mesh.interior_nodes(), self.mesh.bandwidth());
        for (el, &a) in self.elements.iter().zip(coeff) {
            for r in 0..3 {
                let Some(gr) = el.dofs[r] else { continue };
                for c in 0..=r {
                    if let Some(gc) = el.dofs[c] {
                        k.add(gr, gc, a * el.local[r][c]);
                    }
                }
            }
        }
        Ok(k)
    }

    /// Nodal solution at the interior nodes in mesh order.
    pub fn solve(&self, coeff: &[f64]) -> Result<Vec<f64>> {
        let k = self.stiffness(coeff)?;
        let b = &self.load;
        let bnorm = norm(b);
        match self.solver {
            LinearSolver::Cholesky => {
                let chol = k.cholesky()?;
                let mut x = chol.solve(b);
                if bnorm == 0.0 {
                    return Ok(x);
                }
                let mut r = residual(&k, &x, b);
                if norm(&r) > RESIDUAL_TOL * bnorm {
                    let dx = chol.solve(&r);
                    x.iter_mut().zip(&dx).for_each(|(x, d)| *x += d);
                    r = residual(&k, &x, b);
                    let rel = norm(&r) / bnorm;
                    if rel > RESIDUAL_TOL {
                        return Err(Error::Numerical(format!(
                            "Cholesky solve left relative residual {rel:e} after refinement"
                        )));
                    }
                }
                Ok(x)
            }
            LinearSolver::ConjugateGradient => conjugate_gradient(&k, b, RESIDUAL_TOL, 10 * k.size().max(10)),
        }
    }
}

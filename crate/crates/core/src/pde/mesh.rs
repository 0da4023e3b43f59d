//! Structured right-triangle mesh of the unit square.

use crate::error::{invalid, Result};

/// Uniform mesh with `n` cells per side. Every cell `[i, i+1] × [j, j+1]`
/// (in units of `h = 1/n`) is split along its rising diagonal into
/// `(i,j), (i+1,j), (i+1,j+1)` and `(i,j), (i+1,j+1), (i,j+1)`.
///
/// Interior node `(i, j)`, `1 ≤ i, j ≤ n−1`, has index `(j−1)(n−1) + (i−1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mesh {
    n: usize,
}

/// A triangle as three lattice vertices `(i, j)` in counter-clockwise order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Triangle {
    pub vertices: [(usize, usize); 3],
}

impl Triangle {
    pub fn centroid(&self, h: f64) -> [f64; 2] {
        let sx: usize = self.vertices.iter().map(|v| v.0).sum();
        let sy: usize = self.vertices.iter().map(|v| v.1).sum();
        [sx as f64 * h / 3.0, sy as f64 * h / 3.0]
    }
}

impl Mesh {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return invalid(format!("mesh needs at least 2 cells per side, got {n}"));
        }
        Ok(Mesh { n })
    }

    pub fn cells_per_side(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Number of interior nodes `G = (n−1)²`.
    pub fn interior_nodes(&self) -> usize {
        (self.n - 1) * (self.n - 1)
    }

    /// Interior index of lattice vertex `(i, j)`; `None` on the boundary.
    pub fn node_index(&self, i: usize, j: usize) -> Option<usize> {
        let m = self.n - 1;
        if (1..=m).contains(&i) && (1..=m).contains(&j) {
            Some((j - 1) * m + (i - 1))
        } else {
            None
        }
    }

    pub fn node_coords(&self, g: usize) -> [f64; 2] {
        let m = self.n - 1;
        let (i, j) = (g % m + 1, g / m + 1);
        [i as f64 / self.n as f64, j as f64 / self.n as f64]
    }

    pub fn nodes(&self) -> Vec<[f64; 2]> {
        (0..self.interior_nodes()).map(|g| self.node_coords(g)).collect()
    }

    /// Matrix half-bandwidth under the interior numbering.
    pub fn bandwidth(&self) -> usize {
        self.n
    }

    pub fn triangles(&self) -> Vec<Triangle> {
        let mut out = Vec::with_capacity(2 * self.n * self.n);
        for j in 0..self.n {
            for i in 0..self.n {
                out.push(Triangle {
                    vertices: [(i, j), (i + 1, j), (i + 1, j + 1)],
                });
                out.push(Triangle {
                    vertices: [(i, j), (i + 1, j + 1), (i, j + 1)],
                });
            }
        }
        out
    }

    /// `x1,x2,value` rows for a nodal vector in mesh order.
    pub fn snapshot_csv(&self, values: &[f64]) -> Result<String> {
        if values.len() != self.interior_nodes() {
            return invalid(format!(
                "snapshot needs {} values, got {}",
                self.interior_nodes(),
                values.len()
            ));
        }
        let mut s = String::from("x1,x2,value\n");
        for (g, v) in values.iter().enumerate() {
            let [x1, x2] = self.node_coords(g);
            s.push_str(&format!("{x1},{x2},{v:e}\n"));
        }
        Ok(s)
    }
}

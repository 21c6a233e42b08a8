//! Uniform node-centered grids on `[0,1]` and `[0,1]²`.
//!
//! Nodes sit at `x_i = i Δx` for `i = 0..=n`, so each axis carries `n + 1`
//! nodes and `Δx = 1/n`. In 2D the flat index is row-major in `y`:
//! `idx = j (n + 1) + i` for the node `(x_i, y_j)`.
//!
//! Quadrature conventions:
//!
//! * 1D uses the trapezoidal rule (`Δx/2` at both endpoints, `Δx` inside),
//!   which integrates affine functions exactly and sums to 1.
//! * 2D uses the rectangular rule with weight `Δx Δy` at *every* node,
//!   boundary included. The weights therefore sum to `(1 + Δx)²`, an `O(Δx)`
//!   excess over the unit area. Densities are normalized against these same
//!   weights, so the offset never leaks into mass balances.

use crate::{Error, Result};

/// Default resolution per axis for 1D runs.
pub const DEFAULT_N_1D: usize = 1000;
/// Default resolution per axis for 2D runs.
pub const DEFAULT_N_2D: usize = 100;

/// A uniform grid with homogeneous Neumann structure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    n: usize,
    h: f64,
}

impl Grid {
    /// Builds a grid with `n` intervals (so `n + 1` nodes) per axis.
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1 or 2, got {dim}"
            )));
        }
        if n < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 intervals per axis, got {n}"
            )));
        }
        Ok(Self {
            dim,
            n,
            h: 1.0 / n as f64,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of intervals per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Nodes per axis (`n + 1`).
    pub fn nodes_per_axis(&self) -> usize {
        self.n + 1
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.nodes_per_axis().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid spacing `Δx = 1/n`.
    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Axis indices `(i, j)` of a flat node index (`j = 0` in 1D).
    #[inline]
    pub fn axis_index(&self, idx: usize) -> (usize, usize) {
        let np = self.nodes_per_axis();
        match self.dim {
            1 => (idx, 0),
            _ => (idx % np, idx / np),
        }
    }

    #[inline]
    pub fn flat_index(&self, i: usize, j: usize) -> usize {
        j * self.nodes_per_axis() + i
    }

    /// Coordinates of a node; `y` is zero in 1D.
    #[inline]
    pub fn coords(&self, idx: usize) -> (f64, f64) {
        let (i, j) = self.axis_index(idx);
        (i as f64 * self.h, j as f64 * self.h)
    }

    /// Quadrature weight of a single node.
    #[inline]
    pub fn weight(&self, idx: usize) -> f64 {
        match self.dim {
            1 => {
                if idx == 0 || idx == self.n {
                    0.5 * self.h
                } else {
                    self.h
                }
            }
            _ => self.h * self.h,
        }
    }

    pub fn quad_weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.weight(i)).collect()
    }

    /// Trapezoid-style boundary factor: `1/2` per axis on which the node lies
    /// on the boundary. Used to symmetrize the ghost-node Neumann stencil.
    #[inline]
    pub(crate) fn boundary_factor(&self, idx: usize) -> f64 {
        let (i, j) = self.axis_index(idx);
        let edge = |k: usize| if k == 0 || k == self.n { 0.5 } else { 1.0 };
        match self.dim {
            1 => edge(i),
            _ => edge(i) * edge(j),
        }
    }

    /// Grid neighbours of a node (4-neighbourhood in 2D).
    pub fn neighbours(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = self.axis_index(idx);
        let n = self.n;
        let mut out = [usize::MAX; 4];
        out[0] = if i > 0 {
            self.flat_index(i - 1, j)
        } else {
            usize::MAX
        };
        out[1] = if i < n {
            self.flat_index(i + 1, j)
        } else {
            usize::MAX
        };
        if self.dim == 2 {
            out[2] = if j > 0 {
                self.flat_index(i, j - 1)
            } else {
                usize::MAX
            };
            out[3] = if j < n {
                self.flat_index(i, j + 1)
            } else {
                usize::MAX
            };
        }
        out.into_iter().filter(|&k| k != usize::MAX)
    }

    /// Integrates nodal values with the grid quadrature.
    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        self.check_len(values.len())?;
        Ok(self.integrate_unchecked(values))
    }

    #[inline]
    pub(crate) fn integrate_unchecked(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| self.weight(i) * v)
            .sum()
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::ShapeMismatch {
                expected: self.len(),
                found: len,
            });
        }
        Ok(())
    }
}

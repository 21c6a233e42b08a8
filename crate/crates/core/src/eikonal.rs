//! Distance to the maximizers of a payoff, `|∇v| = 1` off the target and
//! `v = 0` on it, computed with a semi-Lagrangian fast-marching scheme.
//!
//! Each trial node takes the best value over the simplices formed with its
//! accepted neighbours:
//!
//! ```text
//! v_i = min_{t ∈ [0,1]}  t v_a + (1 − t) v_b + h √(t² + (1 − t)²)
//! ```
//!
//! where `a` and `b` are an `x`- and a `y`-neighbour of the same quadrant.
//! The minimizer is interior exactly when `|v_a − v_b| < h`, giving
//! `(v_a + v_b)/2 + ½√(2h² − (v_a − v_b)²)`; otherwise an edge wins with
//! `min(v_a, v_b) + h`. In 1D this reduces to Dijkstra on the line.
//!
//! Disconnected targets need no special care: the wavefronts from each
//! component meet along the kink of the viscosity solution.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::grid::Grid;
use crate::measures::ScalarField;
use crate::{Error, Result};

/// Nodes treated as `argmax θ`.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetSet {
    pub nodes: Vec<usize>,
    pub zeta: f64,
}

/// Default maximizer tolerance `1e-10 (1 + |max θ|)`.
pub fn default_zeta(theta_max: f64) -> f64 {
    1e-10 * (1.0 + theta_max.abs())
}

/// `{i : θ_i ≥ max θ − ζ}`; `None` selects [`default_zeta`].
pub fn extract_target(theta: &ScalarField, zeta: Option<f64>) -> TargetSet {
    let top = theta.max();
    let zeta = zeta.unwrap_or_else(|| default_zeta(top));
    let nodes = theta
        .values()
        .iter()
        .enumerate()
        .filter(|(_, t)| **t >= top - zeta)
        .map(|(i, _)| i)
        .collect();
    TargetSet { nodes, zeta }
}

#[derive(Clone, Copy, Debug)]
struct Trial {
    value: f64,
    node: usize,
}

impl PartialEq for Trial {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Trial {}
impl PartialOrd for Trial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Trial {
    // Reversed: BinaryHeap is a max-heap and we pop the smallest value.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .value
            .total_cmp(&self.value)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Distance field to `target`.
pub fn solve_eikonal(grid: &Grid, target: &TargetSet) -> Result<ScalarField> {
    let (v, _) = march(grid, target)?;
    ScalarField::new(*grid, v)
}

/// Fast marching returning the values and the acceptance order.
pub(crate) fn march(grid: &Grid, target: &TargetSet) -> Result<(Vec<f64>, Vec<usize>)> {
    if target.nodes.is_empty() {
        return Err(Error::InvalidConfig("eikonal target set is empty".into()));
    }
    let len = grid.len();
    let mut v = vec![f64::INFINITY; len];
    let mut accepted = vec![false; len];
    let mut order = Vec::with_capacity(len);
    let mut heap = BinaryHeap::new();
    for &t in &target.nodes {
        if t >= len {
            return Err(Error::ShapeMismatch {
                expected: len,
                found: t + 1,
            });
        }
        v[t] = 0.0;
        heap.push(Trial {
            value: 0.0,
            node: t,
        });
    }
    while let Some(Trial { value, node }) = heap.pop() {
        if accepted[node] || value > v[node] {
            continue;
        }
        accepted[node] = true;
        order.push(node);
        for nb in grid.neighbours(node) {
            if accepted[nb] {
                continue;
            }
            let cand = local_update(grid, &v, &accepted, nb);
            if cand < v[nb] {
                v[nb] = cand;
                heap.push(Trial {
                    value: cand,
                    node: nb,
                });
            }
        }
    }
    Ok((v, order))
}

fn local_update(grid: &Grid, v: &[f64], accepted: &[bool], idx: usize) -> f64 {
    let h = grid.spacing();
    let n = grid.n();
    let (i, j) = grid.axis_index(idx);
    let known = |k: usize| if accepted[k] { v[k] } else { f64::INFINITY };
    let xs = [
        if i > 0 { known(idx - 1) } else { f64::INFINITY },
        if i < n { known(idx + 1) } else { f64::INFINITY },
    ];
    if grid.dim() == 1 {
        return xs[0].min(xs[1]) + h;
    }
    let np = grid.nodes_per_axis();
    let ys = [
        if j > 0 {
            known(idx - np)
        } else {
            f64::INFINITY
        },
        if j < n {
            known(idx + np)
        } else {
            f64::INFINITY
        },
    ];
    let mut best = f64::INFINITY;
    for a in xs {
        for b in ys {
            best = best.min(simplex_update(a, b, h));
        }
    }
    best
}

/// Minimum of `t a + (1 − t) b + h √(t² + (1 − t)²)` over `t ∈ [0,1]`.
#[inline]
fn simplex_update(a: f64, b: f64, h: f64) -> f64 {
    let edge = a.min(b) + h;
    if !a.is_finite() || !b.is_finite() {
        return edge;
    }
    let d = a - b;
    if d.abs() < h {
        (0.5 * (a + b) + 0.5 * (2.0 * h * h - d * d).sqrt()).min(edge)
    } else {
        edge
    }
}

//! Grid functions: probability densities and scalar fields, with TV and
//! Wasserstein-1 distances.

use rand::Rng;

use crate::grid::Grid;
use crate::rng::stream_rng;
use crate::{Error, Result};

/// Default relative threshold below which a node is not in `supp(m)`.
pub const DEFAULT_SUPPORT_THRESHOLD: f64 = 1e-9;

/// Allowed deviation of a density's integral from one.
pub const MASS_TOLERANCE: f64 = 1e-10;

const MAX_REDRAWS: u64 = 100;

/// Anything carrying one value per grid node.
pub trait Nodal {
    fn grid(&self) -> &Grid;
    fn values(&self) -> &[f64];
}

/// A real-valued grid function (payoffs, distances, coefficients).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        grid.check_len(values.len())?;
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    /// Samples `f(x, y)` at every node (`y = 0` in 1D).
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let (x, y) = grid.coords(i);
                f(x, y)
            })
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn integral(&self) -> f64 {
        self.grid.integrate_unchecked(&self.values)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Max-norm `‖·‖∞`.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl Nodal for ScalarField {
    fn grid(&self) -> &Grid {
        &self.grid
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A nonnegative grid density with unit integral.
#[derive(Clone, Debug, PartialEq)]
pub struct Density {
    grid: Grid,
    values: Vec<f64>,
}

impl Density {
    /// Wraps values that are already a probability density.
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        grid.check_len(values.len())?;
        check_nonnegative(&values)?;
        let mass = grid.integrate_unchecked(&values);
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidConfig(format!(
                "density integrates to {mass}, not 1"
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn uniform(grid: Grid) -> Self {
        let total: f64 = grid.quad_weights().iter().sum();
        Self {
            grid,
            values: vec![1.0 / total; grid.len()],
        }
    }

    pub(crate) fn from_raw_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mass(&self) -> f64 {
        self.grid.integrate_unchecked(&self.values)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Convex combination `(1 − t) self + t other`.
    pub fn interpolate(&self, other: &Density, t: f64) -> Result<Density> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (1.0 - t) * a + t * b)
            .collect();
        normalize(self.grid, values)
    }
}

impl Nodal for Density {
    fn grid(&self) -> &Grid {
        &self.grid
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

fn check_nonnegative(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        Some(index) => Err(Error::InvalidDensity {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

/// Rescales a nonnegative field to unit mass.
pub fn normalize(grid: Grid, mut raw: Vec<f64>) -> Result<Density> {
    grid.check_len(raw.len())?;
    check_nonnegative(&raw)?;
    let mass = grid.integrate_unchecked(&raw);
    if mass <= 0.0 {
        return Err(Error::ZeroMass);
    }
    raw.iter_mut().for_each(|v| *v /= mass);
    Ok(Density { grid, values: raw })
}

/// `∫ |a − b|` with the grid quadrature.
pub fn tv_distance(a: &impl Nodal, b: &impl Nodal) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch);
    }
    let grid = a.grid();
    Ok(a.values()
        .iter()
        .zip(b.values())
        .enumerate()
        .map(|(i, (x, y))| grid.weight(i) * (x - y).abs())
        .sum())
}

/// Wasserstein-1 distance on `[0,1]` through `∫ |M₁ − M₂| dx`, with `M`
/// the trapezoidal cumulative mass.
pub fn w1_distance_1d(a: &Density, b: &Density) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    if a.grid.dim() != 1 {
        return Err(Error::Unsupported("W1 distance is only available in 1D"));
    }
    let h = a.grid.spacing();
    let diff: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
    let mut cdf = 0.0;
    let mut prev = 0.0;
    let mut total = 0.0;
    for i in 1..diff.len() {
        cdf += 0.5 * h * (diff[i - 1] + diff[i]);
        total += 0.5 * h * (prev + cdf.abs());
        prev = cdf.abs();
    }
    Ok(total)
}

/// Nodes with `m_i > rel_threshold · max m`.
pub fn support(m: &Density, rel_threshold: f64) -> Vec<usize> {
    let cut = rel_threshold * m.max();
    m.values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > cut)
        .map(|(i, _)| i)
        .collect()
}

/// Random 1D initial density `max(0, Σ_{j=1}^5 a_j sin(b_j π x))`,
/// `a_j, b_j ~ U[1, 10]`, normalized.
///
/// Draws come from [`stream_rng`]`(seed, attempt)`; a draw whose positive
/// part vanishes is retried on the next stream, up to 100 times.
pub fn random_density(seed: u64, grid: Grid) -> Result<Density> {
    if grid.dim() != 1 {
        return Err(Error::Unsupported("random initial densities are 1D only"));
    }
    for attempt in 0..MAX_REDRAWS {
        let mut rng = stream_rng(seed, attempt);
        let terms: Vec<(f64, f64)> = (0..5)
            .map(|_| (rng.random_range(1.0..10.0), rng.random_range(1.0..10.0)))
            .collect();
        let raw: Vec<f64> = (0..grid.len())
            .map(|i| {
                let x = grid.coords(i).0;
                let s: f64 = terms
                    .iter()
                    .map(|(a, b)| a * (b * std::f64::consts::PI * x).sin())
                    .sum();
                s.max(0.0)
            })
            .collect();
        match normalize(grid, raw) {
            Ok(d) => return Ok(d),
            Err(Error::ZeroMass) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::DegenerateDraw(MAX_REDRAWS as usize))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g1() -> Grid {
        Grid::new(1, 1000).unwrap()
    }

    fn indicator(grid: Grid, lo: f64, hi: f64) -> Density {
        let raw = (0..grid.len())
            .map(|i| {
                let x = grid.coords(i).0;
                if x >= lo - 1e-12 && x <= hi + 1e-12 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        normalize(grid, raw).unwrap()
    }

    #[test]
    fn normalize_rescales() {
        let g = g1();
        let d = normalize(g, vec![2.0; g.len()]).unwrap();
        assert!(d.values().iter().all(|v| (v - 1.0).abs() < 1e-12));

        let half = indicator(g, 0.0, 0.5);
        assert!((half.mass() - 1.0).abs() < 1e-12);
        assert!((half.values()[0] - 2.0).abs() < 0.01);

        let raw = ScalarField::from_fn(g, |x, _| (3.0 * std::f64::consts::PI * x).sin().max(0.0));
        let d = normalize(g, raw.into_values()).unwrap();
        assert!((g.integrate(d.values()).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn normalize_errors() {
        let g = Grid::new(1, 10).unwrap();
        assert!(matches!(
            normalize(g, vec![0.0; g.len()]),
            Err(Error::ZeroMass)
        ));
        let mut v = vec![1.0; g.len()];
        v[3] = -1.0;
        assert!(matches!(
            normalize(g, v),
            Err(Error::InvalidDensity { index: 3, .. })
        ));
    }

    #[test]
    fn normalize_is_idempotent() {
        let d = random_density(3, g1()).unwrap();
        let again = normalize(*d.grid(), d.values().to_vec()).unwrap();
        for (a, b) in d.values().iter().zip(again.values()) {
            assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
        }
    }

    #[test]
    fn tv_examples() {
        let g = g1();
        let u = Density::uniform(g);
        assert_eq!(tv_distance(&u, &u).unwrap(), 0.0);
        let l = indicator(g, 0.0, 0.5);
        let r = indicator(g, 0.5, 1.0);
        // The node at 0.5 belongs to both halves.
        assert!((tv_distance(&l, &r).unwrap() - 2.0).abs() < 2.0 * 2.0 * g.spacing());
        let lin = normalize(g, ScalarField::from_fn(g, |x, _| 4.0 * x).into_values()).unwrap();
        assert!((tv_distance(&u, &lin).unwrap() - 0.5).abs() < 2.0 * g.spacing());
    }

    #[test]
    fn w1_examples() {
        let g = g1();
        let u = Density::uniform(g);
        let l = indicator(g, 0.0, 0.5);
        let r = indicator(g, 0.5, 1.0);
        assert_eq!(w1_distance_1d(&u, &u).unwrap(), 0.0);
        assert!((w1_distance_1d(&l, &r).unwrap() - 0.5).abs() < 2.0 * g.spacing());
        // CDFs: M_u = x, M_l = min(2x, 1); ∫|M_l − M_u| = ∫₀^½ x dx + ∫_½^1 (1 − x) dx = 1/4.
        assert!((w1_distance_1d(&u, &l).unwrap() - 0.25).abs() < 2.0 * g.spacing());
    }

    #[test]
    fn w1_rejects_2d() {
        let g = Grid::new(2, 10).unwrap();
        let u = Density::uniform(g);
        assert!(matches!(w1_distance_1d(&u, &u), Err(Error::Unsupported(_))));
    }

    #[test]
    fn distances_reject_grid_mismatch() {
        let a = Density::uniform(Grid::new(1, 10).unwrap());
        let b = Density::uniform(Grid::new(1, 11).unwrap());
        assert!(matches!(tv_distance(&a, &b), Err(Error::GridMismatch)));
        assert!(matches!(w1_distance_1d(&a, &b), Err(Error::GridMismatch)));
    }

    #[test]
    fn support_examples() {
        let g = g1();
        let u = Density::uniform(g);
        assert_eq!(support(&u, 0.5).len(), g.len());
        let l = indicator(g, 0.0, 0.5);
        let s = support(&l, DEFAULT_SUPPORT_THRESHOLD);
        assert_eq!(s.len(), 501);
        assert!(s.iter().all(|&i| g.coords(i).0 <= 0.5 + 1e-12));
    }

    #[test]
    fn random_density_contract() {
        let g = g1();
        let a = random_density(11, g).unwrap();
        let b = random_density(11, g).unwrap();
        assert_eq!(a, b);
        assert!((a.mass() - 1.0).abs() < 1e-10);
        assert!(a.values().iter().all(|v| *v >= 0.0));
        assert!(matches!(
            random_density(1, Grid::new(2, 10).unwrap()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn twelve_seeds_give_distinct_densities() {
        let g = g1();
        let ds: Vec<Density> = (1..=12).map(|s| random_density(s, g).unwrap()).collect();
        for i in 0..ds.len() {
            for j in i + 1..ds.len() {
                assert!(tv_distance(&ds[i], &ds[j]).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn uniform_2d_has_unit_mass() {
        let g = Grid::new(2, 20).unwrap();
        assert!((Density::uniform(g).mass() - 1.0).abs() < 1e-12);
    }
}

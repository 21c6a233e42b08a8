//! Convergence studies and equilibrium certificates.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::elliptic::{ModelSpec, PayoffSolver};
use crate::flow::{
    nash_gap, run_flow, run_flow_observed, FlowConfig, FlowResult, Termination, Variant,
};
use crate::measures::{
    random_density, tv_distance, Density, ScalarField, DEFAULT_SUPPORT_THRESHOLD,
};
use crate::{Error, Result};

/// `(t, Φ)` along a run, `t` the cumulative transported mass. `Φ` is the
/// Nash gap for the best-response flow and `sup θ` for the eikonal one.
pub fn functional_trace(result: &FlowResult, variant: Variant) -> Vec<(f64, f64)> {
    result
        .all_records()
        .map(|r| {
            let phi = match variant {
                Variant::BestResponse => r.residual,
                Variant::Eikonal => r.sup_theta,
            };
            (r.mass_cum, phi)
        })
        .collect()
}

/// Iterates of one fixed-ε run keyed by cumulative transported mass.
#[derive(Clone, Debug)]
pub struct LevelTrajectory {
    pub level: usize,
    pub epsilon: f64,
    pub steps: usize,
    /// `(mass_cum, m)` for the initial state and every step.
    pub samples: Vec<(f64, Density)>,
    pub termination: Termination,
    pub elapsed: Duration,
}

impl LevelTrajectory {
    /// Transported mass covered by the run; a converged run stays put forever.
    pub fn horizon(&self) -> f64 {
        match self.termination {
            Termination::Converged | Termination::Stationary => f64::INFINITY,
            _ => self.samples.last().map_or(0.0, |s| s.0),
        }
    }

    /// `m^{⌊t/ε⌋}`: the last iterate with `mass_cum ≤ t`.
    pub fn at(&self, t: f64) -> &Density {
        let k = self
            .samples
            .partition_point(|(s, _)| *s <= t * (1.0 + 1e-12) + 1e-15);
        &self.samples[k.saturating_sub(1)].1
    }
}

#[derive(Clone, Debug)]
pub struct RefinementStudy {
    pub eps0: f64,
    pub levels: Vec<LevelTrajectory>,
    pub t_grid: Vec<f64>,
    /// `sup_t TV(m_k(t), m_{k+1}(t))` for `k = 0..K`.
    pub sup_tv: Vec<f64>,
}

impl RefinementStudy {
    /// `(level k, ε_k, sup_tv)` rows.
    pub fn table(&self) -> Vec<(usize, f64, f64)> {
        self.sup_tv
            .iter()
            .enumerate()
            .map(|(k, d)| (k, self.levels[k].epsilon, *d))
            .collect()
    }

    /// Number of consecutive pairs where the distance grows.
    pub fn increases(&self) -> usize {
        self.sup_tv.windows(2).filter(|w| w[1] > w[0]).count()
    }
}

/// Runs levels `k = 0..=levels` with fixed `ε = ε₀/2^k` and compares
/// consecutive trajectories in TV on `t_grid`.
///
/// Each level runs until it has transported `eps0 · max_outer` mass or
/// converged. Without a `t_grid`, 100 samples of `[0, T]` are used, `T` the
/// smallest horizon over the levels.
pub fn refinement_study(
    model: &ModelSpec,
    m0: &Density,
    base: &FlowConfig,
    levels: usize,
    t_grid: Option<Vec<f64>>,
) -> Result<RefinementStudy> {
    if levels < 1 {
        return Err(Error::InvalidConfig(
            "refinement needs at least one level pair".into(),
        ));
    }
    base.validate()?;
    let solver = PayoffSolver::new(model)?;
    let horizon = t_grid
        .as_ref()
        .and_then(|t| t.iter().copied().reduce(f64::max))
        .unwrap_or(base.eps0 * base.max_outer as f64);

    let runs: Vec<Result<LevelTrajectory>> = (0..=levels)
        .into_par_iter()
        .map(|k| {
            let epsilon = base.eps0 / f64::powi(2.0, k as i32);
            let cfg = FlowConfig {
                eps0: epsilon,
                eps_min: epsilon,
                fixed_eps: true,
                max_outer: ((horizon / epsilon).ceil() as usize).max(1),
                ..base.clone()
            };
            let start = Instant::now();
            let mut samples = Vec::new();
            let result = run_flow_observed(&solver, m0.clone(), &cfg, |rec, m, _| {
                samples.push((rec.mass_cum, m.clone()))
            })
            .map_err(|e| Error::StudyLevel {
                level: k,
                source: Box::new(e),
            })?;
            Ok(LevelTrajectory {
                level: k,
                epsilon,
                steps: result.iterations(),
                samples,
                termination: result.termination,
                elapsed: start.elapsed(),
            })
        })
        .collect();
    let levels: Vec<LevelTrajectory> = runs.into_iter().collect::<Result<_>>()?;

    let t_grid = t_grid.unwrap_or_else(|| {
        let mut t_max = levels
            .iter()
            .map(|l| l.horizon())
            .fold(f64::INFINITY, f64::min);
        if !t_max.is_finite() {
            t_max = levels
                .iter()
                .map(|l| l.samples.last().map_or(0.0, |s| s.0))
                .fold(0.0, f64::max);
        }
        (0..100).map(|i| t_max * i as f64 / 99.0).collect()
    });

    let mut sup_tv = Vec::with_capacity(levels.len() - 1);
    for pair in levels.windows(2) {
        let mut worst = 0.0f64;
        for &t in &t_grid {
            worst = worst.max(tv_distance(pair[0].at(t), pair[1].at(t))?);
        }
        sup_tv.push(worst);
    }
    Ok(RefinementStudy {
        eps0: base.eps0,
        levels,
        t_grid,
        sup_tv,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StressRow {
    pub seed: u64,
    pub variant: Variant,
    pub iterations: usize,
    pub converged: bool,
    pub final_residual: f64,
}

/// Runs both variants from `random_density(seed)` for every seed. Rows come
/// back ordered by seed list position, best response first.
pub fn stress_test(model: &ModelSpec, cfg: &FlowConfig, seeds: &[u64]) -> Result<Vec<StressRow>> {
    let solver = PayoffSolver::new(model)?;
    let grid = *model.grid();
    let jobs: Vec<(u64, Variant)> = seeds
        .iter()
        .flat_map(|&s| [(s, Variant::BestResponse), (s, Variant::Eikonal)])
        .collect();
    jobs.par_iter()
        .map(|&(seed, variant)| {
            let m0 = random_density(seed, grid)?;
            let cfg = FlowConfig {
                variant,
                ..cfg.clone()
            };
            let res = run_flow_observed(&solver, m0, &cfg, |_, _, _| {})?;
            Ok(StressRow {
                seed,
                variant,
                iterations: res.iterations(),
                converged: res.converged,
                final_residual: res.final_residual(),
            })
        })
        .collect()
}

/// Convenience for a single run from the uniform density.
pub fn uniform_run(model: &ModelSpec, cfg: &FlowConfig) -> Result<FlowResult> {
    run_flow(model, Density::uniform(*model.grid()), cfg)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NashCertificate {
    pub eps_nash: f64,
    /// Mass outside `{θ ≥ max θ − eps_nash − Δx}`.
    pub support_violation: f64,
}

pub fn nash_certificate(m: &Density, theta: &ScalarField) -> Result<NashCertificate> {
    let eps_nash = nash_gap(theta, m, DEFAULT_SUPPORT_THRESHOLD)?;
    let grid = m.grid();
    let cut = theta.max() - eps_nash - grid.spacing();
    let support_violation = m
        .values()
        .iter()
        .zip(theta.values())
        .enumerate()
        .filter(|(_, (_, t))| **t < cut)
        .map(|(i, (v, _))| grid.weight(i) * v)
        .sum();
    Ok(NashCertificate {
        eps_nash,
        support_violation,
    })
}

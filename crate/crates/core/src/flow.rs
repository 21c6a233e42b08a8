//! The two total-variation minimizing-movement flows.
//!
//! One step moves mass `ε`:
//!
//! 1. **select** `m⁻ ≤ m` with `∫ m⁻ = ε`, either the players with the lowest
//!    payoff (`θ ≤ η`, best response) or those farthest from `argmax θ`
//!    (`v ≥ η`, eikonal);
//! 2. **redistribute** `ν = (h − m⁺)₊ χ_{θ ≥ C}` with `∫ ν = ε`, where
//!    `m⁺ = m − m⁻` and `h` is the equilibrium plateau height at `θ̄ = max θ`;
//! 3. set `m ← m⁺ + ν` and recompute `θ` and the Nash gap `R`.
//!
//! Both levels `η` and `C` are located by bisection over the sorted distinct
//! key values, and the node group sitting exactly on the crossing level is
//! taken fractionally so that the moved mass is `ε` to roundoff.
//!
//! [`run_flow`] wraps this in the adaptive loop: every outer iteration starts
//! from `ε₀` and halves until `R` strictly decreases, the step becomes
//! admissible, or `ε` drops below `ε_min`.

use crate::eikonal::{extract_target, solve_eikonal};
use crate::elliptic::{ModelSpec, PayoffSolver};
use crate::measures::{normalize, support, tv_distance, Density, ScalarField};
use crate::measures::{DEFAULT_SUPPORT_THRESHOLD, MASS_TOLERANCE};
use crate::{Error, Result};

/// Relative mass drift that triggers renormalization after a step.
const RENORMALIZE_DRIFT: f64 = 1e-12;
/// Fraction of the gap covered by the last target tolerance.
const FRINGE: f64 = 0.999;
/// Plateau snapping never reaches further below `max θ` than this fraction
/// of the current gap.
const SNAP_FRACTION: f64 = 0.2;
/// Times a fixed step may shrink to the mass that can actually move.
const MAX_CLAMPS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Move the lowest-income players.
    BestResponse,
    /// Move the players farthest from `argmax θ`.
    Eikonal,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::BestResponse => "best-response",
            Variant::Eikonal => "eikonal",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "best-response" | "best_response" | "br" => Ok(Variant::BestResponse),
            "eikonal" | "gf" => Ok(Variant::Eikonal),
            other => Err(Error::InvalidConfig(format!("unknown variant '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowConfig {
    pub variant: Variant,
    /// Initial (and maximal) mass moved per step.
    pub eps0: f64,
    /// Halving stops once `ε ≤ eps_min`.
    pub eps_min: f64,
    /// Outer-iteration cap.
    pub max_outer: usize,
    /// Stop once the Nash gap is at most `tau`.
    pub tau: f64,
    pub support_rel_threshold: f64,
    /// Move `eps0` every step and accept unconditionally. A step larger than
    /// the removable mass or the plateau capacity moves only what fits.
    pub fixed_eps: bool,
    /// Maximizer tolerance for targets and the stationarity test. `None`
    /// means `1e-10 (1 + |max θ|)` for best response; the eikonal flow then
    /// tries `τ`, `τ/2`, `τ/4`, `1e-10 (1 + |max θ|)` and, once `ε` has been
    /// halved, `0.999 R`, keeping the first step that lowers the gap.
    /// Plateau snapping never uses more than `τ`.
    pub zeta: Option<f64>,
    /// Halve `ε` when the removal and plateau regions share a node.
    pub reject_overlap: bool,
}

impl FlowConfig {
    /// Defaults `ε₀ = 0.1`, `ε_min = 1e-15`, `M = 100`.
    pub fn new(variant: Variant, tau: f64) -> Self {
        Self {
            variant,
            eps0: 0.1,
            eps_min: 1e-15,
            max_outer: 100,
            tau,
            support_rel_threshold: DEFAULT_SUPPORT_THRESHOLD,
            fixed_eps: false,
            zeta: None,
            reject_overlap: true,
        }
    }

    /// Single-tolerance configurations tried for a trial step of mass `eps`
    /// from a state with gap `residual`; the step with the smallest new gap
    /// wins.
    ///
    /// The last rung keeps everything but the worst fringe of the support in
    /// the target, so the farthest mass is also the poorest paid one. It
    /// rescues states where distance and income disagree, and only joins
    /// once the full step `ε₀` has been turned down.
    fn target_ladder(&self, residual: f64, eps: f64) -> Vec<FlowConfig> {
        let with = |zeta| FlowConfig {
            zeta,
            ..self.clone()
        };
        if self.zeta.is_some() {
            return vec![self.clone()];
        }
        if self.fixed_eps {
            return vec![with(Some(self.tau))];
        }
        if self.variant == Variant::BestResponse {
            return vec![with(None)];
        }
        [
            Some(self.tau),
            Some(0.5 * self.tau),
            Some(0.25 * self.tau),
            None,
            Some(FRINGE * residual),
        ]
        .into_iter()
        .take(if eps < self.eps0 { 5 } else { 4 })
        .map(with)
        .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.eps_min > 0.0
            && self.eps_min <= self.eps0
            && self.eps0 <= 1.0
            && self.tau > 0.0
            && self.max_outer >= 1
            && (0.0..1.0).contains(&self.support_rel_threshold)
            && self.zeta.is_none_or(|z| z >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "invalid flow configuration {self:?}"
            )))
        }
    }
}

/// One accepted outer iteration (index 0 describes the initial state).
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub epsilon: f64,
    pub residual: f64,
    pub sup_theta: f64,
    pub min_theta_supp: f64,
    pub tv_step: f64,
    pub mass_cum: f64,
    /// Times the trial step shrank before acceptance: halvings, or in
    /// fixed-step mode reductions to the mass that could move.
    pub halvings: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Termination {
    /// Nash gap at most `tau`.
    Converged,
    /// Every player already sits on the maximizing set; nothing to move.
    Stationary,
    MaxOuter,
    /// `ε` halved below `eps_min` without an admissible decreasing step.
    StepExhausted,
    /// A fixed-step run could not perform its step.
    StepFailed(String),
}

#[derive(Clone, Debug)]
pub struct FlowResult {
    pub density: Density,
    pub theta: ScalarField,
    pub converged: bool,
    pub initial: IterationRecord,
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    /// Trial steps rejected because removal and plateau regions overlapped.
    pub overlap_rejections: usize,
}

impl FlowResult {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn final_residual(&self) -> f64 {
        self.records.last().unwrap_or(&self.initial).residual
    }

    /// Initial state followed by every accepted iterate.
    pub fn all_records(&self) -> impl Iterator<Item = &IterationRecord> {
        std::iter::once(&self.initial).chain(&self.records)
    }
}

/// `max θ − min_{supp m} θ`.
pub fn nash_gap(theta: &ScalarField, m: &Density, rel_threshold: f64) -> Result<f64> {
    let (sup, low) = gap_parts(theta, m, rel_threshold)?;
    Ok(sup - low)
}

fn gap_parts(theta: &ScalarField, m: &Density, rel_threshold: f64) -> Result<(f64, f64)> {
    if theta.grid() != m.grid() {
        return Err(Error::GridMismatch);
    }
    let supp = support(m, rel_threshold);
    assert!(
        !supp.is_empty(),
        "a normalized density has nonempty support"
    );
    let t = theta.values();
    let low = supp.iter().map(|&i| t[i]).fold(f64::INFINITY, f64::min);
    Ok((theta.max(), low))
}

/// Mass removed from `m`: `removed + kept = m`, `∫ removed = ε`.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub removed: Vec<f64>,
    pub kept: Vec<f64>,
    /// Crossing level `η`.
    pub level: f64,
}

/// Mass laid on the plateau `{θ ≥ C}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Redistribution {
    pub added: Vec<f64>,
    /// Crossing level `C`.
    pub level: f64,
    pub theta_bar: f64,
}

/// Per-node inclusion fractions of a level cut.
pub(crate) struct LevelCut {
    pub level: f64,
    pub fraction: Vec<f64>,
}

/// Takes nodes in order of `keys` (ascending or descending) until the
/// accumulated `masses` reach `target`. Equal keys are ordered by ascending
/// `tie` when given. Nodes sharing the crossing position are included with
/// a common fraction. Returns `None` when the total mass is short of
/// `target`.
pub(crate) fn cut_by_level(
    keys: &[f64],
    tie: Option<&[f64]>,
    masses: &[f64],
    target: f64,
    descending: bool,
) -> Option<LevelCut> {
    let len = keys.len();
    let secondary = |i: usize| tie.map_or(0.0, |t| t[i]);
    let mut order: Vec<usize> = (0..len).collect();
    order.sort_by(|&a, &b| {
        let primary = if descending {
            keys[b].total_cmp(&keys[a])
        } else {
            keys[a].total_cmp(&keys[b])
        };
        primary.then_with(|| secondary(a).total_cmp(&secondary(b)))
    });
    let same = |a: usize, b: usize| keys[a] == keys[b] && secondary(a) == secondary(b);
    // Groups of equal position: (start, end) into `order`, with inclusive
    // cumulative mass.
    let mut groups: Vec<(usize, usize)> = Vec::new();
    let mut cum: Vec<f64> = Vec::new();
    let mut acc = 0.0;
    let mut start = 0;
    while start < len {
        let mut end = start;
        while end < len && same(order[start], order[end]) {
            acc += masses[order[end]];
            end += 1;
        }
        groups.push((start, end));
        cum.push(acc);
        start = end;
    }
    let total = acc;
    if target > total * (1.0 + 1e-12) + 1e-15 {
        return None;
    }
    // Asking for all of it up to roundoff takes all of it.
    let target = if target >= total * (1.0 - 1e-12) {
        total
    } else {
        target
    };
    let g = cum.partition_point(|&c| c < target).min(groups.len() - 1);
    let before = if g == 0 { 0.0 } else { cum[g - 1] };
    let group_mass = cum[g] - before;
    let alpha = if group_mass > 0.0 {
        ((target - before) / group_mass).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let mut fraction = vec![0.0; len];
    for &(s, e) in &groups[..g] {
        for &i in &order[s..e] {
            fraction[i] = 1.0;
        }
    }
    let (s, e) = groups[g];
    for &i in &order[s..e] {
        fraction[i] = alpha;
    }
    Some(LevelCut {
        level: keys[order[s]],
        fraction,
    })
}

fn select_by(
    m: &Density,
    keys: &[f64],
    tie: Option<&[f64]>,
    eps: f64,
    descending: bool,
) -> Result<Selection> {
    let grid = m.grid();
    grid.check_len(keys.len())?;
    let total = m.mass();
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "step mass must be positive, got {eps}"
        )));
    }
    let masses: Vec<f64> = m
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| grid.weight(i) * v)
        .collect();
    let cut =
        cut_by_level(keys, tie, &masses, eps, descending).ok_or(Error::SelectionExceedsMass {
            requested: eps,
            available: total,
        })?;
    let removed: Vec<f64> = m
        .values()
        .iter()
        .zip(&cut.fraction)
        .map(|(v, s)| v * s)
        .collect();
    let kept = m
        .values()
        .iter()
        .zip(&removed)
        .map(|(v, r)| (v - r).max(0.0))
        .collect();
    Ok(Selection {
        removed,
        kept,
        level: cut.level,
    })
}

/// Removes mass `eps` from the lowest-payoff players, `{θ ≤ η}`.
pub fn select_lowest_income(m: &Density, theta: &ScalarField, eps: f64) -> Result<Selection> {
    if theta.grid() != m.grid() {
        return Err(Error::GridMismatch);
    }
    select_by(m, theta.values(), None, eps, false)
}

/// Removes mass `eps` from the players farthest from the target, `{v ≥ η}`.
/// Fails with [`Error::EmptySelection`] when all mass is at distance zero.
pub fn select_farthest(m: &Density, v: &ScalarField, eps: f64) -> Result<Selection> {
    select_farthest_by(m, v, None, eps)
}

/// [`select_farthest`] with equidistant players ordered by ascending payoff,
/// so the poorer of two equally distant players leaves first.
pub fn select_farthest_tiebreak(
    m: &Density,
    v: &ScalarField,
    theta: &ScalarField,
    eps: f64,
) -> Result<Selection> {
    if theta.grid() != m.grid() {
        return Err(Error::GridMismatch);
    }
    select_farthest_by(m, v, Some(theta.values()), eps)
}

fn select_farthest_by(
    m: &Density,
    v: &ScalarField,
    tie: Option<&[f64]>,
    eps: f64,
) -> Result<Selection> {
    if v.grid() != m.grid() {
        return Err(Error::GridMismatch);
    }
    let off_target: f64 = m
        .values()
        .iter()
        .zip(v.values())
        .enumerate()
        .filter(|(_, (_, d))| **d > 0.0)
        .map(|(i, (mi, _))| m.grid().weight(i) * mi)
        .sum();
    if off_target <= 0.0 {
        return Err(Error::EmptySelection);
    }
    select_by(m, v.values(), tie, eps, true)
}

/// Lays mass `eps` on the top level set of `theta` with the model's plateau
/// profile, `ν = (h(θ̄) − m⁺)₊ χ_{θ ≥ C}`.
pub fn redistribute(
    kept: &[f64],
    theta: &ScalarField,
    model: &ModelSpec,
    eps: f64,
) -> Result<Redistribution> {
    redistribute_within(kept, theta, model, eps, 0.0)
}

/// [`redistribute`] with every node within `zeta` of `max θ` treated as
/// lying on the top level, so near-equal maxima share the new mass in
/// proportion to their room.
pub fn redistribute_within(
    kept: &[f64],
    theta: &ScalarField,
    model: &ModelSpec,
    eps: f64,
    zeta: f64,
) -> Result<Redistribution> {
    let grid = theta.grid();
    grid.check_len(kept.len())?;
    if model.grid() != grid {
        return Err(Error::GridMismatch);
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "step mass must be positive, got {eps}"
        )));
    }
    // Any nonempty {θ ≥ C} contains the global maximizer.
    let theta_bar = theta.max();
    let height = model.plateau_height(theta_bar);
    let room: Vec<f64> = height
        .iter()
        .zip(kept)
        .map(|(h, k)| (h - k).max(0.0))
        .collect();
    let masses: Vec<f64> = room
        .iter()
        .enumerate()
        .map(|(i, r)| grid.weight(i) * r)
        .collect();
    let keys: Vec<f64> = theta
        .values()
        .iter()
        .map(|&t| if t >= theta_bar - zeta { theta_bar } else { t })
        .collect();
    let cut = cut_by_level(&keys, None, &masses, eps, true).ok_or_else(|| {
        Error::InsufficientCapacity {
            requested: eps,
            available: masses.iter().sum(),
        }
    })?;
    let added = room.iter().zip(&cut.fraction).map(|(r, s)| r * s).collect();
    Ok(Redistribution {
        added,
        level: cut.level,
        theta_bar,
    })
}

#[derive(Clone, Debug)]
pub enum StepOutcome {
    /// `supp m ⊂ argmax θ` up to the target tolerance: nothing to move.
    Stationary,
    Moved {
        density: Density,
        theta: ScalarField,
        residual: f64,
        tv_step: f64,
        /// Removal and plateau regions shared a node.
        overlap: bool,
    },
}

/// One selection/redistribution step of mass `eps` from `(m, θ[m])`.
pub fn flow_step(
    solver: &PayoffSolver,
    m: &Density,
    theta: &ScalarField,
    eps: f64,
    cfg: &FlowConfig,
) -> Result<StepOutcome> {
    let grid = *m.grid();
    let target = extract_target(theta, cfg.zeta);
    let mut on_target = vec![false; grid.len()];
    target.nodes.iter().for_each(|&i| on_target[i] = true);
    if support(m, cfg.support_rel_threshold)
        .iter()
        .all(|&i| on_target[i])
    {
        return Ok(StepOutcome::Stationary);
    }

    let selection = match cfg.variant {
        Variant::BestResponse => select_lowest_income(m, theta, eps)?,
        Variant::Eikonal => {
            let v = solve_eikonal(&grid, &target)?;
            match select_farthest_tiebreak(m, &v, theta, eps) {
                Err(Error::EmptySelection) => return Ok(StepOutcome::Stationary),
                other => other?,
            }
        }
    };
    let plateau = redistribute_within(
        &selection.kept,
        theta,
        solver.model(),
        eps,
        target
            .zeta
            .min(cfg.tau)
            .min(SNAP_FRACTION * nash_gap(theta, m, cfg.support_rel_threshold)?),
    )?;
    let overlap = selection
        .removed
        .iter()
        .zip(&plateau.added)
        .any(|(r, a)| *r > 0.0 && *a > 0.0);

    let mut next: Vec<f64> = selection
        .kept
        .iter()
        .zip(&plateau.added)
        .map(|(k, a)| k + a)
        .collect();
    let mass = grid.integrate_unchecked(&next);
    if (mass - 1.0).abs() > RENORMALIZE_DRIFT {
        if (mass - 1.0).abs() > 1e3 * MASS_TOLERANCE {
            return Err(Error::InvalidConfig(format!(
                "step broke mass balance: {mass}"
            )));
        }
        next = normalize(grid, next)?.into_values();
    }
    let density = Density::from_raw_unchecked(grid, next);
    let theta_next = solver.solve_near(&density, Some(theta))?;
    let residual = nash_gap(&theta_next, &density, cfg.support_rel_threshold)?;
    let tv_step = tv_distance(&density, m)?;
    Ok(StepOutcome::Moved {
        density,
        theta: theta_next,
        residual,
        tv_step,
        overlap,
    })
}

/// The step over `ladder` with the smallest gap below `residual` and no
/// rejected overlap; otherwise the outcome of the last tolerance.
fn ladder_step(
    solver: &PayoffSolver,
    m: &Density,
    theta: &ScalarField,
    eps: f64,
    ladder: &[FlowConfig],
    residual: f64,
) -> Result<StepOutcome> {
    let mut best: Option<(f64, StepOutcome)> = None;
    let mut last = Err(Error::EmptySelection);
    for cfg in ladder {
        let outcome = flow_step(solver, m, theta, eps, cfg);
        match outcome {
            Ok(StepOutcome::Moved {
                residual: r,
                overlap,
                ..
            }) if r < best.as_ref().map_or(residual, |b| b.0)
                && !(overlap && cfg.reject_overlap) =>
            {
                best = Some((r, outcome?));
            }
            Ok(_)
            | Err(Error::InsufficientCapacity { .. } | Error::SelectionExceedsMass { .. }) => {
                last = outcome;
            }
            Err(_) => return outcome,
        }
    }
    best.map_or(last, |(_, o)| Ok(o))
}

fn record(
    iter: usize,
    epsilon: f64,
    theta: &ScalarField,
    m: &Density,
    cfg: &FlowConfig,
    tv_step: f64,
    mass_cum: f64,
    halvings: usize,
) -> Result<IterationRecord> {
    let (sup_theta, min_theta_supp) = gap_parts(theta, m, cfg.support_rel_threshold)?;
    Ok(IterationRecord {
        iter,
        epsilon,
        residual: sup_theta - min_theta_supp,
        sup_theta,
        min_theta_supp,
        tv_step,
        mass_cum,
        halvings,
    })
}

/// Runs the flow from `m0` until the Nash gap is at most `cfg.tau`.
pub fn run_flow(model: &ModelSpec, m0: Density, cfg: &FlowConfig) -> Result<FlowResult> {
    let solver = PayoffSolver::new(model)?;
    run_flow_observed(&solver, m0, cfg, |_, _, _| {})
}

/// [`run_flow`] with a shared solver and a callback on the initial state and
/// every accepted iterate.
pub fn run_flow_observed(
    solver: &PayoffSolver,
    m0: Density,
    cfg: &FlowConfig,
    mut observe: impl FnMut(&IterationRecord, &Density, &ScalarField),
) -> Result<FlowResult> {
    cfg.validate()?;
    if solver.model().grid() != m0.grid() {
        return Err(Error::GridMismatch);
    }
    let mut m = m0;
    let mut theta = solver.solve(&m)?;
    let initial = record(0, 0.0, &theta, &m, cfg, 0.0, 0.0, 0)?;
    observe(&initial, &m, &theta);
    let mut residual = initial.residual;
    let mut records = Vec::new();
    let mut mass_cum = 0.0;
    let mut overlap_rejections = 0;
    let mut termination = Termination::MaxOuter;

    let mut j = 0;
    while residual > cfg.tau {
        if j >= cfg.max_outer {
            termination = Termination::MaxOuter;
            break;
        }
        let mut eps = cfg.eps0;
        let mut halvings = 0;
        let accepted = loop {
            if !cfg.fixed_eps && eps <= cfg.eps_min {
                break None;
            }
            let outcome = match ladder_step(
                solver,
                &m,
                &theta,
                eps,
                &cfg.target_ladder(residual, eps),
                residual,
            ) {
                Ok(o) => o,
                Err(
                    e @ (Error::InsufficientCapacity { available, .. }
                    | Error::SelectionExceedsMass { available, .. }),
                ) => {
                    if cfg.fixed_eps {
                        // A fixed step larger than what can move moves what fits.
                        if available > 0.0 && available < eps && halvings < MAX_CLAMPS {
                            eps = available;
                            halvings += 1;
                            continue;
                        }
                        termination = Termination::StepFailed(e.to_string());
                        break None;
                    }
                    eps *= 0.5;
                    halvings += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            match outcome {
                StepOutcome::Stationary => {
                    termination = Termination::Stationary;
                    break None;
                }
                StepOutcome::Moved {
                    density,
                    theta,
                    residual: r,
                    tv_step,
                    overlap,
                } => {
                    if cfg.fixed_eps {
                        break Some((density, theta, tv_step));
                    }
                    if overlap && cfg.reject_overlap {
                        overlap_rejections += 1;
                    } else if r < residual {
                        break Some((density, theta, tv_step));
                    }
                    eps *= 0.5;
                    halvings += 1;
                }
            }
        };
        let Some((density, theta_next, tv_step)) = accepted else {
            if !matches!(
                termination,
                Termination::Stationary | Termination::StepFailed(_)
            ) {
                termination = Termination::StepExhausted;
            }
            break;
        };
        j += 1;
        mass_cum += eps;
        m = density;
        theta = theta_next;
        let rec = record(j, eps, &theta, &m, cfg, tv_step, mass_cum, halvings)?;
        residual = rec.residual;
        observe(&rec, &m, &theta);
        records.push(rec);
    }
    let converged = residual <= cfg.tau;
    if converged {
        termination = Termination::Converged;
    }
    Ok(FlowResult {
        density: m,
        theta,
        converged,
        initial,
        records,
        termination,
        overlap_rejections,
    })
}

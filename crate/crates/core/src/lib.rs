//! Equilibria of first-order ergodic mean-field games via total-variation
//! minimizing movements.
//!
//! A population with density `m` on `[0,1]^d` earns a payoff `θ[m]` given by
//! an elliptic PDE. Two flows move a small amount of mass `ε` per step from
//! badly placed players onto the maximizers of `θ`:
//!
//! * the **best-response** flow relocates the players with the lowest income,
//! * the **eikonal** flow relocates the players geographically farthest from
//!   `argmax θ`, measured by a fast-marching distance field.
//!
//! Relocated mass is laid down with the plateau profile an equilibrium must
//! have, and the step size is halved until the Nash gap
//! `max θ − min_{supp m} θ` strictly decreases.
//!
//! ```no_run
//! use tvmfg::{Grid, Density, ModelSpec, ScalarField, FlowConfig, Variant, run_flow};
//!
//! let grid = Grid::new(1, 1000).unwrap();
//! let f = ScalarField::from_fn(grid, |x, _| 4.0 * x);
//! let p = ScalarField::constant(grid, 0.5);
//! let model = ModelSpec::linear(0.1, p, f).unwrap();
//! let cfg = FlowConfig::new(Variant::BestResponse, grid.spacing());
//! let result = run_flow(&model, Density::uniform(grid), &cfg).unwrap();
//! assert!(result.converged);
//! ```

mod error;

pub mod diagnostics;
pub mod eikonal;
pub mod elliptic;
pub mod flow;
pub mod grid;
mod linalg;
pub mod measures;
pub mod rng;

pub use diagnostics::{
    functional_trace, nash_certificate, refinement_study, stress_test, uniform_run,
    LevelTrajectory, NashCertificate, RefinementStudy, StressRow,
};
pub use eikonal::{extract_target, solve_eikonal, TargetSet};
pub use elliptic::{
    pde_residual, solve_linear, solve_nonlinear, solve_nonlinear_from, LinearOperator, ModelKind,
    ModelSpec, NonlinearSolution, NonlinearSolveOptions, PayoffSolver,
};
pub use error::{Error, Result};
pub use flow::{
    flow_step, nash_gap, redistribute, redistribute_within, run_flow, run_flow_observed,
    select_farthest, select_farthest_tiebreak, select_lowest_income, FlowConfig, FlowResult,
    IterationRecord, Redistribution, Selection, StepOutcome, Termination, Variant,
};
pub use grid::Grid;
pub use measures::{
    normalize, random_density, support, tv_distance, w1_distance_1d, Density, ScalarField,
    DEFAULT_SUPPORT_THRESHOLD,
};

//! Solver verification suite run by the `validate` subcommand: manufactured
//! solutions and comparisons against brute-force oracles.

use std::f64::consts::PI;

use tvmfg::{
    extract_target, pde_residual, select_lowest_income, solve_eikonal, solve_linear,
    solve_nonlinear, Density, Grid, ModelSpec, NonlinearSolveOptions, ScalarField, TargetSet,
};

use crate::CliError;

const MU: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

pub fn run_all() -> Result<Vec<Check>, CliError> {
    Ok(vec![
        manufactured(1, &[100, 200, 400])?,
        manufactured(2, &[16, 32, 64])?,
        constant_linear()?,
        constant_nonlinear()?,
        nonlinear_residual()?,
        eikonal_1d()?,
        eikonal_2d()?,
        lowest_income()?,
    ])
}

fn grid(dim: usize, n: usize) -> Result<Grid, CliError> {
    Ok(Grid::new(dim, n)?)
}

fn max_error(a: &ScalarField, exact: impl Fn(f64, f64) -> f64) -> f64 {
    let g = a.grid();
    a.values()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let (x, y) = g.coords(i);
            (v - exact(x, y)).abs()
        })
        .fold(0.0, f64::max)
}

/// `θ = 3 + Π cos πx_i` with `P = 1` and uniform `m`; the observed order under
/// refinement must be about two.
fn manufactured(dim: usize, sizes: &[usize]) -> Result<Check, CliError> {
    let d = dim as f64;
    let exact =
        move |x: f64, y: f64| 3.0 + (PI * x).cos() * if dim == 2 { (PI * y).cos() } else { 1.0 };
    let mut errors = Vec::new();
    for &n in sizes {
        let g = grid(dim, n)?;
        // The uniform density is not exactly 1 in 2D, so f absorbs it.
        let m = Density::uniform(g);
        let f = (0..g.len())
            .map(|i| {
                let (x, y) = g.coords(i);
                let c = exact(x, y) - 3.0;
                3.0 + (1.0 + d * MU * PI * PI) * c + m.values()[i]
            })
            .collect();
        let model = ModelSpec::linear(MU, ScalarField::constant(g, 1.0), ScalarField::new(g, f)?)?;
        let theta = solve_linear(&model, &m)?;
        errors.push(max_error(&theta, exact));
    }
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let worst = orders.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Check {
        name: if dim == 1 {
            "manufactured linear 1D"
        } else {
            "manufactured linear 2D"
        },
        passed: worst >= 1.9,
        detail: format!(
            "errors {}, orders {}",
            fmt_list(&errors, "e"),
            fmt_list(&orders, "f")
        ),
    })
}

fn constant_linear() -> Result<Check, CliError> {
    let g = grid(1, 200)?;
    let model = ModelSpec::linear(
        MU,
        ScalarField::constant(g, 0.5),
        ScalarField::constant(g, 2.0),
    )?;
    let err = max_error(&solve_linear(&model, &Density::uniform(g))?, |_, _| 2.0);
    Ok(Check {
        name: "constant linear solution",
        passed: err <= 1e-9,
        detail: format!("|θ − 2| = {err:.2e}"),
    })
}

fn constant_nonlinear() -> Result<Check, CliError> {
    let g = grid(1, 200)?;
    let model = ModelSpec::nonlinear(MU, ScalarField::constant(g, 3.0))?;
    let sol = solve_nonlinear(
        &model,
        &Density::uniform(g),
        &NonlinearSolveOptions::default(),
    )?;
    let err = max_error(&sol.theta, |_, _| 2.0);
    Ok(Check {
        name: "constant nonlinear solution",
        passed: err <= 1e-6 && !sol.trivial,
        detail: format!("|θ − (K − m)| = {err:.2e}"),
    })
}

fn nonlinear_residual() -> Result<Check, CliError> {
    let g = grid(1, 1000)?;
    let model = ModelSpec::nonlinear(MU, ScalarField::from_fn(g, |x, _| 4.0 * x))?;
    let m = Density::uniform(g);
    let sol = solve_nonlinear(&model, &m, &NonlinearSolveOptions::default())?;
    let r = pde_residual(&model, &m, &sol.theta)?;
    Ok(Check {
        name: "nonlinear PDE residual",
        passed: r <= 1e-6 && !sol.trivial && sol.theta.min() >= 0.0,
        detail: format!("residual {r:.2e} after {} iterations", sol.iterations),
    })
}

fn eikonal_1d() -> Result<Check, CliError> {
    let g = grid(1, 1000)?;
    let target = TargetSet {
        nodes: vec![250, 700],
        zeta: 0.0,
    };
    let v = solve_eikonal(&g, &target)?;
    let err = max_error(&v, |x, _| (x - 0.25).abs().min((x - 0.7).abs()));
    Ok(Check {
        name: "eikonal 1D vs exact distance",
        passed: err <= 1e-12,
        detail: format!("max error {err:.2e}"),
    })
}

fn eikonal_2d() -> Result<Check, CliError> {
    let mut errors = Vec::new();
    for n in [20, 40, 80] {
        let g = grid(2, n)?;
        let theta = ScalarField::from_fn(g, |x, y| -((x - 0.5).powi(2) + (y - 0.5).powi(2)));
        let v = solve_eikonal(&g, &extract_target(&theta, None))?;
        errors.push(max_error(&v, |x, y| (x - 0.5).hypot(y - 0.5)));
    }
    let shrinking = errors.windows(2).all(|w| w[1] < w[0]);
    Ok(Check {
        name: "eikonal 2D vs Euclidean distance",
        passed: shrinking && errors[errors.len() - 1] <= 0.05,
        detail: format!("errors {}", fmt_list(&errors, "e")),
    })
}

/// Removal from a strictly increasing payoff must take exactly `ε` from the
/// lowest-paid nodes.
fn lowest_income() -> Result<Check, CliError> {
    let g = grid(1, 1000)?;
    let model = ModelSpec::linear(
        MU,
        ScalarField::constant(g, 0.5),
        ScalarField::from_fn(g, |x, _| 4.0 * x),
    )?;
    let m = Density::uniform(g);
    let theta = solve_linear(&model, &m)?;
    let eps = 0.1;
    let sel = select_lowest_income(&m, &theta, eps)?;
    let removed = g.integrate(&sel.removed)?;
    let t = theta.values();
    let top_removed = (0..g.len())
        .filter(|&i| sel.removed[i] > 0.0)
        .map(|i| t[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let low_untouched = (0..g.len())
        .filter(|&i| sel.removed[i] == 0.0 && m.values()[i] > 0.0)
        .map(|i| t[i])
        .fold(f64::INFINITY, f64::min);
    let mass_err = (removed - eps).abs();
    Ok(Check {
        name: "lowest-income selection vs scan",
        passed: mass_err <= 1e-10 && top_removed <= low_untouched,
        detail: format!(
            "mass error {mass_err:.2e}, removal level {top_removed:.6} ≤ untouched {low_untouched:.6}"
        ),
    })
}

fn fmt_list(values: &[f64], style: &str) -> String {
    let parts: Vec<String> = values
        .iter()
        .map(|v| {
            if style == "e" {
                format!("{v:.2e}")
            } else {
                format!("{v:.3}")
            }
        })
        .collect();
    format!("[{}]", parts.join(", "))
}

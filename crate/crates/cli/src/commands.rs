use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use tvmfg::{
    extract_target, functional_trace, refinement_study, run_flow, solve_eikonal, stress_test,
    Density, FlowResult, Variant,
};

use crate::config::{RunConfig, Settings};
use crate::output::{
    ensure_dir, field_header, field_rows, float, iteration_row, termination_name, write_csv,
    ITERATION_HEADER,
};
use crate::{validate, CliError};

pub const ENV_OUT: &str = "TVMFG_OUT";
pub const ENV_SEED: &str = "TVMFG_SEED";

/// Equilibria of ergodic mean-field games by total-variation minimizing
/// movements.
#[derive(Debug, Parser)]
#[command(name = "tvmfg", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one flow from the uniform density; writes density.csv and
    /// iterations.csv.
    Solve(Flags),
    /// ε-refinement study; writes refinement.csv.
    Refine(Flags),
    /// Both variants from random initial densities (1D); writes stress.csv.
    Stress(Flags),
    /// Functional decay along a run; writes trace.csv.
    Trace(Flags),
    /// Run the solver verification suite.
    Validate,
}

/// Flags shared by the run subcommands. Each overrides the matching key of
/// the configuration file.
#[derive(Clone, Debug, Default, Args)]
pub struct Flags {
    /// Configuration file of `key = value` lines.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Named coefficient preset, e.g. linear-4x or nonlinear-gauss.
    #[arg(long)]
    pub preset: Option<String>,
    /// best-response or eikonal.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub dim: Option<String>,
    /// Cells per axis.
    #[arg(long, value_name = "N")]
    pub grid: Option<String>,
    #[arg(long, value_name = "F")]
    pub eps0: Option<String>,
    #[arg(long, value_name = "F")]
    pub eps_min: Option<String>,
    #[arg(long, value_name = "N")]
    pub max_outer: Option<String>,
    /// Convergence tolerance, a number or `dx` for the grid spacing.
    #[arg(long, value_name = "F|dx")]
    pub tau: Option<String>,
    #[arg(long, env = ENV_SEED)]
    pub seed: Option<String>,
    /// Move exactly this mass every step, without halving.
    #[arg(long, value_name = "F")]
    pub fixed_eps: Option<String>,
    /// Output directory.
    #[arg(long, env = ENV_OUT, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Also write the final distance-to-maximizers field (eikonal.csv).
    #[arg(long)]
    pub dump_eikonal: bool,
    /// Refinement levels (pairs compared).
    #[arg(long, value_name = "K")]
    pub levels: Option<String>,
    /// Number of stress seeds, counted up from --seed.
    #[arg(long, value_name = "N")]
    pub seeds: Option<String>,
}

impl Flags {
    pub fn settings(&self) -> Result<Settings, CliError> {
        let mut s = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| {
                    CliError::Config(format!("cannot read {}: {e}", path.display()))
                })?;
                Settings::parse(&text)?
            }
            None => Settings::default(),
        };
        let pairs = [
            ("preset", &self.preset),
            ("variant", &self.variant),
            ("dim", &self.dim),
            ("grid", &self.grid),
            ("eps0", &self.eps0),
            ("eps_min", &self.eps_min),
            ("max_outer", &self.max_outer),
            ("tau", &self.tau),
            ("seed", &self.seed),
            ("fixed_eps", &self.fixed_eps),
            ("levels", &self.levels),
            ("seeds", &self.seeds),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                s.set(key, v.as_str());
            }
        }
        if let Some(out) = &self.out {
            s.set("out", out.to_string_lossy());
        }
        if self.dump_eikonal {
            s.set("dump_eikonal", "true");
        }
        Ok(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    NotConverged,
}

/// Runs a parsed command line, writing the human-readable summary to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Validate => run_validate(out),
        Command::Solve(flags) => solve(&flags.settings()?.resolve()?, out),
        Command::Refine(flags) => refine(&flags.settings()?.resolve()?, out),
        Command::Stress(flags) => stress(&flags.settings()?.resolve()?, out),
        Command::Trace(flags) => trace(&flags.settings()?.resolve()?, out),
    }
}

fn say(out: &mut dyn Write, line: String) -> Result<(), CliError> {
    writeln!(out, "{line}").map_err(|source| CliError::Io {
        path: PathBuf::from("<stdout>"),
        source,
    })
}

fn status(converged: bool) -> Outcome {
    if converged {
        Outcome::Ok
    } else {
        Outcome::NotConverged
    }
}

pub fn solve(cfg: &RunConfig, out: &mut dyn Write) -> Result<Outcome, CliError> {
    let grid = cfg.grid()?;
    let model = cfg.model(grid)?;
    let flow = cfg.flow_config(&grid);
    let res = run_flow(&model, Density::uniform(grid), &flow)?;

    ensure_dir(&cfg.out)?;
    write_csv(
        &cfg.out,
        "density.csv",
        &field_header(&grid, &["m", "theta"]),
        field_rows(&grid, &[res.density.values(), res.theta.values()]),
    )?;
    write_csv(
        &cfg.out,
        "iterations.csv",
        ITERATION_HEADER,
        res.all_records().map(iteration_row),
    )?;
    if cfg.dump_eikonal {
        let v = solve_eikonal(&grid, &extract_target(&res.theta, None))?;
        write_csv(
            &cfg.out,
            "eikonal.csv",
            &field_header(&grid, &["distance"]),
            field_rows(&grid, &[v.values()]),
        )?;
    }
    say(out, summary(cfg.variant, &res))?;
    Ok(status(res.converged))
}

fn summary(variant: Variant, res: &FlowResult) -> String {
    format!(
        "variant={} converged={} iterations={} residual={:.6e} termination={}",
        variant.name(),
        res.converged,
        res.iterations(),
        res.final_residual(),
        termination_name(&res.termination)
    )
}

pub fn refine(cfg: &RunConfig, out: &mut dyn Write) -> Result<Outcome, CliError> {
    let grid = cfg.grid()?;
    let model = cfg.model(grid)?;
    let study = refinement_study(
        &model,
        &Density::uniform(grid),
        &cfg.flow_config(&grid),
        cfg.levels,
        None,
    )?;
    ensure_dir(&cfg.out)?;
    write_csv(
        &cfg.out,
        "refinement.csv",
        &["level", "epsilon", "sup_tv"],
        study
            .table()
            .into_iter()
            .map(|(k, eps, d)| vec![k.to_string(), float(eps), float(d)]),
    )?;
    say(
        out,
        format!(
            "variant={} pairs={} increases={} max_sup_tv={:.6e}",
            cfg.variant.name(),
            study.sup_tv.len(),
            study.increases(),
            study.sup_tv.iter().copied().fold(0.0, f64::max)
        ),
    )?;
    Ok(Outcome::Ok)
}

pub fn stress(cfg: &RunConfig, out: &mut dyn Write) -> Result<Outcome, CliError> {
    if cfg.dim != 1 {
        return Err(CliError::Config(
            "stress runs need random initial densities, which are 1D only".into(),
        ));
    }
    let grid = cfg.grid()?;
    let model = cfg.model(grid)?;
    let seeds: Vec<u64> = (0..cfg.seeds as u64)
        .map(|k| cfg.seed.wrapping_add(k))
        .collect();
    let rows = stress_test(&model, &cfg.flow_config(&grid), &seeds)?;
    ensure_dir(&cfg.out)?;
    write_csv(
        &cfg.out,
        "stress.csv",
        &[
            "seed",
            "variant",
            "iterations",
            "converged",
            "final_residual",
        ],
        rows.iter().map(|r| {
            vec![
                r.seed.to_string(),
                r.variant.name().to_string(),
                r.iterations.to_string(),
                r.converged.to_string(),
                float(r.final_residual),
            ]
        }),
    )?;
    let converged = rows.iter().filter(|r| r.converged).count();
    say(
        out,
        format!(
            "runs={} converged={} max_iterations={}",
            rows.len(),
            converged,
            rows.iter().map(|r| r.iterations).max().unwrap_or(0)
        ),
    )?;
    Ok(status(converged == rows.len()))
}

pub fn trace(cfg: &RunConfig, out: &mut dyn Write) -> Result<Outcome, CliError> {
    let grid = cfg.grid()?;
    let flow = cfg.flow_config(&grid);
    let stages = std::iter::once(("trace.csv", cfg.coef.as_str()))
        .chain(cfg.trace_coef.as_deref().map(|c| ("trace_sin.csv", c)));
    ensure_dir(&cfg.out)?;
    let mut all_converged = true;
    for (file, coef) in stages {
        let model = cfg.model_for(grid, coef)?;
        let res = run_flow(&model, Density::uniform(grid), &flow)?;
        write_csv(
            &cfg.out,
            file,
            &["t", "phi"],
            functional_trace(&res, cfg.variant)
                .into_iter()
                .map(|(t, phi)| vec![float(t), float(phi)]),
        )?;
        say(out, format!("{file}: {}", summary(cfg.variant, &res)))?;
        all_converged &= res.converged;
    }
    Ok(status(all_converged))
}

fn run_validate(out: &mut dyn Write) -> Result<Outcome, CliError> {
    let checks = validate::run_all()?;
    for c in &checks {
        say(
            out,
            format!(
                "{} {}: {}",
                if c.passed { "ok  " } else { "FAIL" },
                c.name,
                c.detail
            ),
        )?;
    }
    if checks.iter().all(|c| c.passed) {
        Ok(Outcome::Ok)
    } else {
        Err(CliError::Verification(
            checks.iter().filter(|c| !c.passed).count(),
        ))
    }
}

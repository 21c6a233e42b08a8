//! Run configuration: `key = value` files, flag overrides and resolution
//! into grids, models and flow settings.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use tvmfg::{FlowConfig, Grid, ModelSpec, ScalarField, Variant};

use crate::expr::Expr;
use crate::presets;
use crate::CliError;

pub const DEFAULT_PRESET: &str = "linear-4x";
pub const DEFAULT_MU: f64 = 0.1;

/// Keys accepted in configuration files. Flags map onto the same keys.
pub const KEYS: &[&str] = &[
    "preset",
    "model",
    "f",
    "k",
    "p",
    "mu",
    "dim",
    "grid",
    "variant",
    "eps0",
    "eps_min",
    "max_outer",
    "tau",
    "seed",
    "fixed_eps",
    "out",
    "dump_eikonal",
    "levels",
    "seeds",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelChoice {
    Linear,
    Nonlinear,
}

impl fmt::Display for ModelChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Linear => "linear",
            Self::Nonlinear => "nonlinear",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TauMode {
    /// `τ = Δx` of the run's grid.
    Dx,
    Absolute(f64),
}

impl FromStr for TauMode {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        if s == "dx" {
            return Ok(Self::Dx);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(Self::Absolute(v)),
            _ => Err(CliError::Config(format!(
                "tau must be 'dx' or a positive number, got '{s}'"
            ))),
        }
    }
}

/// Fully resolved settings of one invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub model: ModelChoice,
    /// `f` (linear) or `K` (nonlinear).
    pub coef: String,
    /// Coefficient of the second trace stage, if any.
    pub trace_coef: Option<String>,
    /// `P` of the linear model.
    pub p: String,
    pub mu: f64,
    pub dim: usize,
    pub grid_n: usize,
    pub variant: Variant,
    pub eps0: f64,
    pub eps_min: f64,
    pub max_outer: usize,
    pub tau: TauMode,
    pub seed: u64,
    pub fixed_eps: bool,
    pub out: PathBuf,
    pub dump_eikonal: bool,
    pub levels: usize,
    pub seeds: usize,
}

/// Raw `key = value` settings; later writes win.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    /// Parses a configuration file body. Blank lines and `#` comments are
    /// ignored; keys are case-sensitive.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut out = Self::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!(
                    "line {}: expected 'key = value', got '{line}'",
                    no + 1
                )));
            };
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(CliError::Config(format!(
                    "line {}: unknown key '{key}'",
                    no + 1
                )));
            }
            out.set(key, value.trim());
        }
        Ok(out)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        debug_assert!(KEYS.contains(&key), "unknown key {key}");
        self.values.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| CliError::Config(format!("invalid value '{v}' for '{key}'")))
            })
            .transpose()
    }

    fn flag(&self, key: &str) -> Result<bool, CliError> {
        match self.get(key) {
            None | Some("false") | Some("0") | Some("no") => Ok(false),
            Some("true") | Some("1") | Some("yes") => Ok(true),
            Some(v) => Err(CliError::Config(format!(
                "invalid value '{v}' for '{key}', expected true or false"
            ))),
        }
    }

    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let seed = self.parsed::<u64>("seed")?.unwrap_or(1);
        let explicit_coef = self.get("f").or(self.get("k"));
        let preset_name = match (self.get("preset"), explicit_coef) {
            (Some(p), _) => Some(p.to_string()),
            (None, Some(_)) => None,
            (None, None) => Some(DEFAULT_PRESET.to_string()),
        };
        let preset = preset_name
            .as_deref()
            .map(|name| {
                presets::lookup(name, seed).ok_or_else(|| {
                    CliError::Config(format!(
                        "unknown preset '{name}' (known: {})",
                        presets::NAMES.join(", ")
                    ))
                })
            })
            .transpose()?;

        let model = match self.get("model") {
            Some("linear") => ModelChoice::Linear,
            Some("nonlinear") => ModelChoice::Nonlinear,
            Some(other) => {
                return Err(CliError::Config(format!(
                    "model must be 'linear' or 'nonlinear', got '{other}'"
                )))
            }
            None => preset.as_ref().map_or(
                if self.get("k").is_some() {
                    ModelChoice::Nonlinear
                } else {
                    ModelChoice::Linear
                },
                |p| p.model,
            ),
        };
        let (own_key, other_key) = match model {
            ModelChoice::Linear => ("f", "k"),
            ModelChoice::Nonlinear => ("k", "f"),
        };
        if self.get(other_key).is_some() {
            return Err(CliError::Config(format!(
                "'{other_key}' does not apply to the {model} model"
            )));
        }
        let (coef, trace_coef) = match (self.get(own_key), &preset) {
            (Some(c), _) => (c.to_string(), None),
            (None, Some(p)) => (p.coef.clone(), p.trace_coef.clone()),
            (None, None) => {
                return Err(CliError::Config(format!(
                    "no coefficient: set '{own_key}' or a preset"
                )))
            }
        };

        let dim = self
            .parsed::<usize>("dim")?
            .or(preset.as_ref().map(|p| p.dim))
            .unwrap_or(1);
        if !(1..=2).contains(&dim) {
            return Err(CliError::Config(format!("dim must be 1 or 2, got {dim}")));
        }
        let p = match (model, self.get("p")) {
            (ModelChoice::Nonlinear, Some(_)) => {
                return Err(CliError::Config(
                    "'p' does not apply to the nonlinear model".into(),
                ))
            }
            (_, Some(p)) => p.to_string(),
            (_, None) => if dim == 1 { "0.5" } else { "1" }.to_string(),
        };

        let fixed = self.parsed::<f64>("fixed_eps")?;
        let eps0 = match (fixed, self.parsed::<f64>("eps0")?) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "set either 'fixed_eps' or 'eps0', not both".into(),
                ))
            }
            (Some(e), None) | (None, Some(e)) => e,
            (None, None) => match (dim, model) {
                (1, _) => 0.1,
                (_, ModelChoice::Linear) => 0.5,
                (_, ModelChoice::Nonlinear) => 0.25,
            },
        };

        let cfg = RunConfig {
            preset: preset_name,
            model,
            coef,
            trace_coef,
            p,
            mu: self.parsed::<f64>("mu")?.unwrap_or(DEFAULT_MU),
            dim,
            grid_n: self
                .parsed::<usize>("grid")?
                .unwrap_or(if dim == 1 { 1000 } else { 100 }),
            variant: self
                .get("variant")
                .map(|v| {
                    v.parse::<Variant>()
                        .map_err(|e| CliError::Config(e.to_string()))
                })
                .transpose()?
                .unwrap_or(Variant::BestResponse),
            eps0,
            eps_min: self.parsed::<f64>("eps_min")?.unwrap_or(1e-15),
            max_outer: self.parsed::<usize>("max_outer")?.unwrap_or(100),
            tau: self.get("tau").map_or(Ok(TauMode::Dx), str::parse)?,
            seed,
            fixed_eps: fixed.is_some(),
            out: PathBuf::from(self.get("out").unwrap_or("out")),
            dump_eikonal: self.flag("dump_eikonal")?,
            levels: self.parsed::<usize>("levels")?.unwrap_or(6),
            seeds: self.parsed::<usize>("seeds")?.unwrap_or(12),
        };
        cfg.check()?;
        Ok(cfg)
    }
}

impl RunConfig {
    fn check(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return bad(format!("mu must be positive, got {}", self.mu));
        }
        if !(self.eps0 > 0.0 && self.eps0 <= 1.0) {
            return bad(format!("step mass must lie in (0, 1], got {}", self.eps0));
        }
        if !(self.eps_min > 0.0) {
            return bad(format!("eps_min must be positive, got {}", self.eps_min));
        }
        if self.max_outer == 0 || self.levels == 0 || self.seeds == 0 {
            return bad("max_outer, levels and seeds must be at least 1".into());
        }
        for src in std::iter::once(&self.coef)
            .chain(self.trace_coef.iter())
            .chain((self.model == ModelChoice::Linear).then_some(&self.p))
        {
            let e = Expr::parse(src).map_err(|e| CliError::Config(format!("'{src}': {e}")))?;
            if self.dim == 1 && e.uses_y() {
                return bad(format!("'{src}' uses y but dim = 1"));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        Grid::new(self.dim, self.grid_n).map_err(CliError::from)
    }

    pub fn tau(&self, grid: &Grid) -> f64 {
        match self.tau {
            TauMode::Dx => grid.spacing(),
            TauMode::Absolute(t) => t,
        }
    }

    pub fn model(&self, grid: Grid) -> Result<ModelSpec, CliError> {
        self.model_for(grid, &self.coef)
    }

    /// The configured model with its `f` or `K` replaced by `coef`.
    pub fn model_for(&self, grid: Grid, coef: &str) -> Result<ModelSpec, CliError> {
        let c = field(grid, coef)?;
        let model = match self.model {
            ModelChoice::Linear => ModelSpec::linear(self.mu, field(grid, &self.p)?, c),
            ModelChoice::Nonlinear => ModelSpec::nonlinear(self.mu, c),
        };
        model.map_err(CliError::from)
    }

    pub fn flow_config(&self, grid: &Grid) -> FlowConfig {
        FlowConfig {
            eps0: self.eps0,
            eps_min: self.eps_min.min(self.eps0),
            max_outer: self.max_outer,
            fixed_eps: self.fixed_eps,
            ..FlowConfig::new(self.variant, self.tau(grid))
        }
    }
}

fn field(grid: Grid, src: &str) -> Result<ScalarField, CliError> {
    let e = Expr::parse(src).map_err(|e| CliError::Config(format!("'{src}': {e}")))?;
    Ok(ScalarField::from_fn(grid, |x, y| e.eval(x, y)))
}

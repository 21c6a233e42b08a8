//! Command-line driver for the `tvmfg` solvers: configuration, experiment
//! orchestration and CSV output.
//!
//! Exit codes: 0 success, 2 a run did not converge, 3 bad configuration,
//! 4 solver, verification or I/O failure.

mod commands;
pub mod config;
pub mod expr;
pub mod output;
pub mod presets;
pub mod validate;

use std::path::PathBuf;

use thiserror::Error;

pub use commands::{
    refine, run, solve, stress, trace, Cli, Command, Flags, Outcome, ENV_OUT, ENV_SEED,
};
pub use config::{ModelChoice, RunConfig, Settings, TauMode};

pub const EXIT_NOT_CONVERGED: u8 = 2;
pub const EXIT_CONFIG: u8 = 3;
pub const EXIT_FAILURE: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Solver(#[from] tvmfg::Error),
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0} verification check(s) failed")]
    Verification(usize),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use tvmfg::Error as E;
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Solver(
                E::InvalidGrid(_) | E::InvalidModel(_) | E::InvalidConfig(_) | E::Unsupported(_),
            ) => EXIT_CONFIG,
            Self::Solver(_) | Self::Io { .. } | Self::Verification(_) => EXIT_FAILURE,
        }
    }
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Ok => 0,
            Outcome::NotConverged => EXIT_NOT_CONVERGED,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 3);
        assert_eq!(
            CliError::Solver(tvmfg::Error::InvalidModel("f".into())).exit_code(),
            3
        );
        assert_eq!(CliError::Solver(tvmfg::Error::ZeroMass).exit_code(), 4);
        assert_eq!(CliError::Verification(1).exit_code(), 4);
        assert_eq!(Outcome::Ok.exit_code(), 0);
        assert_eq!(Outcome::NotConverged.exit_code(), 2);
    }
}

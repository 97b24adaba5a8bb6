//! Config-driven experiment runner for `isac-core`.
//!
//! `isac <command> --config <path> [--out <path>] [--seed N] [--trials N]`
//! writes one self-describing table (CSV or JSON) per command.

// `!(x > 0)` style guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{execute, run, Command, Outcome, Overrides, Scenario};
pub use config::{default_scenario, ExperimentConfig};
pub use output::{Cell, Table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] isac_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use isac_core::Error as E;
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(E::InvalidConfig(_) | E::InvalidPrior(_) | E::InvalidGeometry(_)) => {
                EXIT_CONFIG
            }
            CliError::Core(E::Infeasible { .. }) => EXIT_INFEASIBLE,
            CliError::Core(_) => EXIT_SOLVER,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

//! Command-line front end for transient tangent-vector runs: TOML config,
//! CSV/JSON artifacts, binary checkpoints and gnuplot scripts.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod plot;

pub use commands::{cmd_clv, cmd_orbit, cmd_perturb, cmd_plot, Options};
pub use config::Config;
pub use error::CliError;

//! Command-line front end for the ZOCBF safety-filter toolkit: declarative
//! experiment configs, trajectory logs and parameter sweeps.

pub mod config;
pub mod experiment;
pub mod output;
pub mod sweep;

pub use config::{ConfigError, ExperimentConfig, ModelId, Resolved};
pub use experiment::{execute, RunOutcome};

/// Exit status when the run was safe and every filter step feasible.
pub const EXIT_OK: u8 = 0;
/// Safety violation or filter infeasibility.
pub const EXIT_UNSAFE: u8 = 1;
/// Unreadable, malformed or invalid configuration or arguments.
pub const EXIT_CONFIG: u8 = 2;
/// Runtime or output failure; any partial log has been written.
pub const EXIT_RUNTIME: u8 = 3;

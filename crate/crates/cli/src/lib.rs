//! Command-line front end: synthetic benchmark bundles, pipeline runs over
//! PNG id-map inputs, evaluation reports and consensus inspection.

pub mod bench;
pub mod bundle;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use commands::{cmd_eval, cmd_inspect, cmd_run, cmd_synth, PropagatorSpec};
pub use config::Config;
pub use error::{CliError, CliResult};

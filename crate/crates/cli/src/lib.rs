//! Command-line pipelines over `csd-core`: each subcommand writes one run
//! directory holding CSV data and a `manifest.json`.

pub mod commands;
pub mod config;
pub mod run;

pub use commands::{Command, Outcome};
pub use config::RunConfig;
pub use run::{execute, RunManifest};

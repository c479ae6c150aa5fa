//! Command-line orchestration of the simulate, label, train, generate,
//! couple and analyze stages.

pub mod config;
pub mod error;
pub mod manifest;
pub mod overrides;
pub mod stages;

pub use config::PipelineConfig;
pub use error::{CliError, CliResult};
pub use stages::{run, run_all, Context, Stage};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "SGMUS_OUTPUT_ROOT";

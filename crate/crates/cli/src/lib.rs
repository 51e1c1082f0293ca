//! Configuration, pipeline and output handling behind the `or-verify` binary.

pub mod compare;
pub mod config;
pub mod output;
pub mod pipeline;

pub use compare::{compare_runs, CompareError, Comparison};
pub use config::{load_config, parse_config, ConfigError, ExperimentConfig};
pub use output::{load_summary, write_bundle, LoadError};
pub use pipeline::{configured_stages, run_pipeline, Bundle, RunVerdict, Stage, Summary};

//! Batch experiments for the triangular-lattice transverse-field Ising
//! model: configuration parsing, parallel execution and reproducible output.

pub mod config;
pub mod output;
pub mod run;

pub use config::{parse_config, ConfigError, ExperimentKind, RunConfig};
pub use run::{rerun_manifest, run_config_text, Execution, InputSource, Manifest, RunError};

//! Reproducible experiments and report files for `gelsim`.

pub mod config;
pub mod error;
pub mod experiments;
pub mod report;
pub mod stats;

pub use config::{AlphaRule, ConfigFile, ExperimentConfig, ExperimentId};
pub use error::{HarnessError, Result};
pub use experiments::run_experiment;
pub use report::{Check, Report, Table};

//! Experiment harness: JSON configs in, snapshots, CSV tables, rate fits
//! and a manifest out.

pub mod config;
pub mod error;
pub mod fit;
pub mod output;
pub mod pipeline;
pub mod report;
pub mod runner;

pub use config::{ExperimentConfig, ResolvedConfig};
pub use error::{ExpError, ExpResult};
pub use runner::{execute, Mode, Summary};

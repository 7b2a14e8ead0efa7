//! Experiment runner for the PV-row inspection stack: configuration,
//! closed-loop simulation, flight traces and accuracy metrics.

// `!(x > y)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod trace;

pub use config::{CameraMode, ExperimentConfig};
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, ExperimentResult, RunSummary};
pub use metrics::{compute_metrics, RunMetrics};
pub use trace::{Trace, TraceRow};

//! Experiment plumbing for the option-level learners: config files,
//! checkpoints, metrics, model selection, plot data and the drivers behind
//! the `smdp` command line tool.

pub mod checkpoint;
pub mod config_file;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod plot;
pub mod select;

pub use checkpoint::{Checkpoint, CheckpointKind};
pub use error::{HarnessError, Result};
pub use metrics::{MetricsRow, MetricsWriter, RunTag};
pub use plot::{emit_plot_data, Figure};
pub use select::select_model;

//! Config-driven sweeps, CSV persistence, SVG figures and validation for
//! the probe-ancilla protocol.

// negated comparisons are used on purpose so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod figure;
pub mod output;
pub mod sweep;
pub mod validate;

pub use config::{load_config, parse_config, ExperimentConfig};
pub use error::{LabError, LabResult};
pub use figure::{emit_figure, FigureStyle};
pub use output::{emit_csv, read_csv};
pub use sweep::{run_experiment, SweepResult};
pub use validate::{validate_config, ValidateOptions, ValidationReport};

//! Experiment driver for the photonic MIMO emulator: JSON experiment specs,
//! parallel Monte-Carlo SER sweeps, cost tables, and CSV/JSON/SVG output.

pub mod error;
pub mod run;
pub mod spec;
pub mod stats;
pub mod svg;

pub use error::{HarnessError, Result};
pub use run::{run_experiment, ResultRow, RunOptions, RunReport, SerPoint};
pub use spec::{ExperimentKind, ExperimentSpec};

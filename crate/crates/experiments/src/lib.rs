//! Reproducible experiment drivers on top of `gibbscode`.

pub mod config;
pub mod corpus;
pub mod emit;
pub mod error;
pub mod fit;
pub mod run;

pub use config::{ExperimentConfig, ExperimentKind};
pub use emit::{emit, ExperimentOutput, Format, Table};
pub use error::{ExpError, Result};
pub use run::run_experiment;

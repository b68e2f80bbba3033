//! Experiment plumbing around `mfdiff`: configuration, file formats,
//! checkpoints, reports and the end-to-end runner.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod experiment;
pub mod io;
pub mod obj;
pub mod report;

pub use config::ExperimentConfig;
pub use error::{LabError, Result};

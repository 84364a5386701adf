//! Command-line front end: run documents, batch simulation, equilibrium
//! analysis and plot-ready field output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;

use thiserror::Error;

pub mod commands;
pub mod contour;
pub mod document;
pub mod output;

pub use document::{Format, OutputBlock, RandomInitials, RunDocument, SimBlock};
pub use output::{RunEntry, RunReport};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error("document does not match the schema: {0}")]
    Schema(#[source] serde_json::Error),
    #[error("invalid document: {0}")]
    Invalid(String),
    #[error("bad override: {0}")]
    Override(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Geometry(#[from] spf_core::GeometryError),
    #[error(transparent)]
    Simulation(#[from] spf_core::SimError),
    #[error(transparent)]
    Analysis(#[from] spf_core::AnalysisError),
}

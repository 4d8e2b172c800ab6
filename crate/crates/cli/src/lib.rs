//! Command-line front end: layered configuration, file-based stages, the
//! multi-view and single-view flows, and run manifests.

pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;

pub use config::{EvalParams, PipelineConfig};
pub use error::CliError;
pub use manifest::Manifest;

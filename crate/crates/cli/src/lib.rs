//! Manifest-driven pipeline: sample meshes into dense colored clouds, align
//! them onto sparse labeled clouds, transfer part labels, report statistics,
//! and train per-category colorization networks.
//!
//! Every stage reads the manifest, processes the pending objects on a worker
//! pool and rewrites the manifest after each object, so an interrupted run
//! resumes where it stopped.

pub mod config;
pub mod fsio;
pub mod model;
pub mod runner;
pub mod stages;
pub mod synth;
pub mod validate;

pub use config::PipelineConfig;
pub use runner::{Pipeline, StageSummary};

use std::path::PathBuf;
use thiserror::Error;

/// Errors that stop a whole command; per-object problems are recorded in the
/// manifest instead.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: densify_core::io::manifest::ManifestError,
    },
    #[error("{0}")]
    Config(String),
}

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Fatal,
    ObjectFailures,
}

impl Outcome {
    pub fn code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::Fatal => 1,
            Outcome::ObjectFailures => 2,
        }
    }
}

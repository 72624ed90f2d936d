//! Command-level orchestration: configuration, the on-disk record format,
//! and the synth → train → infer → eval → export workflows the CLI exposes.

use std::path::PathBuf;

use thiserror::Error;

use crate::fit::FitError;
use crate::geom::GeomError;
use crate::metrics::MetricsError;
use crate::net::TrainError;
use crate::nn::NnError;
use crate::synth::SynthError;

mod commands;
mod config;
mod record;

pub use commands::{
    cmd_eval, cmd_export, cmd_infer, cmd_synth, cmd_train, InferOutput, SynthSummary,
};
pub use config::{EvalConfig, PipelineConfig};
pub use record::{load_record, save_record, GtPose, Provenance, SequenceRecord, SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("record {path}: {msg}")]
    Record { path: PathBuf, msg: String },
    #[error("frame {frame} out of range: sequence has {frames} frames")]
    FrameOutOfRange { frame: usize, frames: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl PipelineError {
    /// Process exit code: 2 for validation failures, 1 for operational ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Io(_) | PipelineError::Json(_) | PipelineError::Nn(_) => 1,
            PipelineError::Synth(SynthError::GraspNotFound { .. }) => 1,
            PipelineError::Fit(FitError::NonFiniteLoss { .. }) => 1,
            _ => 2,
        }
    }
}

//! Experiment orchestration: a single JSON config drives calibration,
//! training, interrogation and characterization runs. Every run writes to
//! a fresh directory holding its effective config, artifacts, a report with
//! floats fixed to six decimals, and a `timings.json` sidecar kept apart
//! from the report so that reports stay byte-reproducible.

mod config;
mod pipeline;
mod report;

pub use config::{
    derive_seed, AgentSection, CalibrationSection, CharacterizeSection, CharacterizeTarget, ExperimentConfig,
    InterrogationSection, Profile, RiskSection, SensorSection, SCHEMA_VERSION,
};
pub use pipeline::{
    calibration_samples, create_run_dir, load_model, load_surface, report_exit_code, run_calibrate,
    run_characterize, run_interrogate, run_train, train_model, training_env, verify_frames, CalibrateOutcome,
    RunOutcome, TrainOutcome, CONFIG_FILE, MODEL_FILE, REPORT_FILE, SAMPLES_FILE, SURFACE_FILE, TIMINGS_FILE,
    TRACE_FILE,
};
pub use report::{
    render_csv, render_table, ExperimentReport, Failure, FailureKind, FineTrace, FrameRef, GroundTruth,
    InclusionReport, ReportKind, SequenceArtifact, REPORT_DECIMALS, REPORT_SCHEMA_VERSION, TABLE_COLUMNS,
};

use std::path::Path;

use thiserror::Error;

use crate::agent::AgentError;
use crate::interrogation::InterrogationError;
use crate::mechprops::MechError;
use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("corrupt report: {0}")]
    CorruptReport(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Interrogation(#[from] InterrogationError),
    #[error(transparent)]
    Mech(#[from] MechError),
}

impl HarnessError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        HarnessError::Io { path: path.display().to_string(), message: e.to_string() }
    }

    /// Process exit status: 2 for configuration and I/O problems, 3 for
    /// numeric failures, 4 for lost or non-convergent targets.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Io { .. } | HarnessError::CorruptReport(_) => 2,
            HarnessError::Sim(_) => 2,
            HarnessError::Agent(e) => match e {
                AgentError::NonFiniteLoss { .. } => 3,
                AgentError::NoContact { .. } => 4,
                AgentError::InvalidConfig(_) | AgentError::Checkpoint(_) | AgentError::Sim(_) => 2,
            },
            HarnessError::Interrogation(e) => match e {
                InterrogationError::LostTarget { .. } | InterrogationError::NonConvergent { .. } => 4,
                InterrogationError::DegenerateGrid(_)
                | InterrogationError::InvalidRoi(_)
                | InterrogationError::Sim(_) => 2,
            },
            HarnessError::Mech(e) => match e {
                MechError::Io(_) | MechError::InvalidWeights(_) => 2,
                _ => 3,
            },
        }
    }
}

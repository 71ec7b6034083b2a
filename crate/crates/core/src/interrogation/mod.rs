//! Dynamic interrogation: a coarse raster scan flags waypoints whose tactile
//! images show a candidate inclusion, then fine interrogation recentres the
//! probe on each candidate and merges duplicates.

mod coarse;
mod detect;
mod fine;
mod grid;

pub use coarse::{coarse_interrogate, CoarseResult, PressConfig, WaypointVisit};
pub use detect::{background_threshold, detect_regions, label_components, median3x3, DetectConfig, DetectedRegion};
pub use fine::{
    localization_error, merge_candidates, refine_location, refine_location_traced, FineConfig, FineStep,
    DEFAULT_MERGE_THRESHOLD_MM,
};
pub use grid::{plan_grid, GridPlan, RoiSpec};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Xy;
use crate::sim::SimError;

#[derive(Debug, Error, PartialEq)]
pub enum InterrogationError {
    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),
    #[error("invalid ROI: {0}")]
    InvalidRoi(String),
    #[error("target lost at iteration {iteration}: no region detected")]
    LostTarget { iteration: u32 },
    #[error("no convergence after {iterations} iterations (last offset {last_offset_px:.1} px)")]
    NonConvergent { iterations: u32, last_offset_px: f64 },
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSource {
    Coarse,
    Refined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateLocation {
    pub xy: Xy,
    pub source: CandidateSource,
    /// Fine-interrogation iterations used; 0 for coarse candidates.
    pub iterations: u32,
}

impl CandidateLocation {
    pub fn coarse(xy: Xy) -> Self {
        Self { xy, source: CandidateSource::Coarse, iterations: 0 }
    }

    pub fn refined(xy: Xy, iterations: u32) -> Self {
        Self { xy, source: CandidateSource::Refined, iterations }
    }
}

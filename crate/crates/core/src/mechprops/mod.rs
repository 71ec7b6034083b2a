//! Mechanical properties from a force-ordered frame sequence: size from a
//! calibrated (F, I_p) polynomial surface, deformation index from the
//! intensity-versus-force slope, and a composite risk score.

mod di;
mod surface;

pub use di::{di_ratio, estimate_di, DeformationIndex};
pub use surface::{estimate_size, fit_size_surface, CalibrationSample, CalibrationSurface, SizeEstimate, Standardizer};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::TactileFrame;

#[derive(Debug, Error, PartialEq)]
pub enum MechError {
    #[error("design matrix has rank {rank} < 6 ({samples} samples)")]
    RankDeficient { rank: usize, samples: usize },
    #[error("no frame with force inside [{lo}, {hi}] N")]
    EmptyWindow { lo: f64, hi: f64 },
    #[error("need at least 2 in-window frames, found {0}")]
    TooFewFrames(usize),
    #[error("force span {span:.4} N is below the noise floor {floor:.4} N")]
    DegenerateForceRange { span: f64, floor: f64 },
    #[error("soft deformation index is zero")]
    DivisionByZeroDI,
    #[error("invalid risk weights: {0}")]
    InvalidWeights(String),
    #[error("surface io: {0}")]
    Io(String),
}

/// Force and pixel sum of one recorded frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceSample {
    pub frame_index: u64,
    pub force: f64,
    pub pixel_sum: f64,
}

impl From<&TactileFrame> for SequenceSample {
    fn from(f: &TactileFrame) -> Self {
        Self { frame_index: f.frame_index, force: f.applied_force, pixel_sum: f.pixel_sum() as f64 }
    }
}

/// Frames acquired during one press, in acquisition order, with the force
/// window they were recorded in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSequence {
    pub samples: Vec<SequenceSample>,
    pub window: (f64, f64),
}

impl FrameSequence {
    pub fn new(samples: Vec<SequenceSample>, window: (f64, f64)) -> Self {
        Self { samples, window }
    }

    pub fn from_frames(frames: &[TactileFrame], window: (f64, f64)) -> Self {
        Self::new(frames.iter().map(SequenceSample::from).collect(), window)
    }

    pub fn in_window(&self) -> impl Iterator<Item = &SequenceSample> {
        let (lo, hi) = self.window;
        self.samples.iter().filter(move |s| s.force >= lo && s.force <= hi)
    }

    /// Index into `samples` of the lowest-force in-window frame.
    pub fn reference_index(&self) -> Option<usize> {
        let (lo, hi) = self.window;
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.force >= lo && s.force <= hi)
            .min_by(|a, b| a.1.force.total_cmp(&b.1.force))
            .map(|(i, _)| i)
    }
}

/// Percentage error of an estimate. NaN when `true_d` is not positive.
pub fn size_error(true_d: f64, est_d: f64) -> f64 {
    if true_d > 0.0 {
        100.0 * (est_d - true_d).abs() / true_d
    } else {
        f64::NAN
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskWeights {
    pub w1: f64,
    pub w2: f64,
    /// Size normaliser, mm.
    pub d_max: f64,
    /// DI normaliser, counts/N.
    pub di_max: f64,
}

impl RiskWeights {
    /// Equal weights; `d_max` is the largest calibrated size and `di_max`
    /// the DI of a frame going from black to saturated across the window.
    pub fn defaults(d_max: f64, pixel_count: usize, window: (f64, f64)) -> Self {
        Self { w1: 0.5, w2: 0.5, d_max, di_max: 255.0 * pixel_count as f64 / (window.1 - window.0) }
    }

    pub fn validate(&self) -> Result<(), MechError> {
        if !(self.d_max > 0.0 && self.di_max > 0.0) {
            return Err(MechError::InvalidWeights(format!(
                "normalisers must be positive (d_max {}, di_max {})",
                self.d_max, self.di_max
            )));
        }
        if !(self.w1.is_finite() && self.w2.is_finite()) {
            return Err(MechError::InvalidWeights("weights must be finite".into()));
        }
        Ok(())
    }
}

/// W1·D/D_max − W2·DI/DI_max clamped to [0, 1].
pub fn risk_score(d: f64, di: f64, w: &RiskWeights) -> f64 {
    (w.w1 * d / w.d_max - w.w2 * di / w.di_max).clamp(0.0, 1.0)
}

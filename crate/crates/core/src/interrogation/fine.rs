use serde::{Deserialize, Serialize};

use super::coarse::press_and_capture;
use super::{detect_regions, CandidateLocation, DetectConfig, InterrogationError, PressConfig};
use crate::geom::Xy;
use crate::sim::TactileSim;

pub const DEFAULT_MERGE_THRESHOLD_MM: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineConfig {
    /// Press used for every refinement image.
    pub press: PressConfig,
    /// Stop once the centroid lies within this many pixels of the image
    /// centre.
    pub offset_threshold_px: f64,
    pub max_iters: u32,
}

impl FineConfig {
    /// Threshold of 2.1 mm expressed in pixels of the given sensor.
    pub fn for_pixel_pitch(mm_per_pixel: f64) -> Self {
        Self { press: PressConfig::default(), offset_threshold_px: 2.1 / mm_per_pixel, max_iters: 20 }
    }
}

/// One refinement iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineStep {
    pub iteration: u32,
    pub commanded: Xy,
    pub force: f64,
    /// Centroid minus image centre, (columns, rows).
    pub offset_px: Option<(f64, f64)>,
}

impl FineStep {
    pub fn offset_norm_px(&self) -> Option<f64> {
        self.offset_px.map(|(du, dv)| du.hypot(dv))
    }
}

/// Like [`refine_location`], also returning the per-iteration trace, which
/// is kept even when refinement fails.
pub fn refine_location_traced(
    sim: &mut TactileSim,
    candidate: &CandidateLocation,
    fi: &FineConfig,
    detect: &DetectConfig,
) -> (Result<CandidateLocation, InterrogationError>, Vec<FineStep>) {
    let mut trace = Vec::new();
    let res = refine_inner(sim, candidate, fi, detect, &mut trace);
    (res, trace)
}

/// Recentres the probe on the largest detected region until the centroid
/// offset falls below the threshold. Returns the final commanded XY.
pub fn refine_location(
    sim: &mut TactileSim,
    candidate: &CandidateLocation,
    fi: &FineConfig,
    detect: &DetectConfig,
) -> Result<CandidateLocation, InterrogationError> {
    refine_location_traced(sim, candidate, fi, detect).0
}

fn refine_inner(
    sim: &mut TactileSim,
    candidate: &CandidateLocation,
    fi: &FineConfig,
    detect: &DetectConfig,
    trace: &mut Vec<FineStep>,
) -> Result<CandidateLocation, InterrogationError> {
    let cfg = sim.config().clone();
    let (cu, cv) = cfg.image_center();
    let extent = sim.phantom().extent;
    let mut at = candidate.xy;
    let mut last_norm = f64::INFINITY;
    for iteration in 1..=fi.max_iters {
        let frame = press_and_capture(sim, at, &fi.press)?;
        let regions = detect_regions(&frame, detect, cfg.mm_per_pixel);
        let Some(top) = regions.first() else {
            trace.push(FineStep { iteration, commanded: at, force: frame.applied_force, offset_px: None });
            sim.retract_to(fi.press.travel_z)?;
            return Err(InterrogationError::LostTarget { iteration });
        };
        let (du, dv) = (top.centroid_px.0 - cu, top.centroid_px.1 - cv);
        trace.push(FineStep { iteration, commanded: at, force: frame.applied_force, offset_px: Some((du, dv)) });
        last_norm = du.hypot(dv);
        if last_norm < fi.offset_threshold_px {
            sim.retract_to(fi.press.travel_z)?;
            return Ok(CandidateLocation::refined(at, iteration));
        }
        at = Xy::new(
            (at.x + du * cfg.mm_per_pixel).clamp(0.0, extent.x),
            (at.y + dv * cfg.mm_per_pixel).clamp(0.0, extent.y),
        );
    }
    sim.retract_to(fi.press.travel_z)?;
    Err(InterrogationError::NonConvergent { iterations: fi.max_iters, last_offset_px: last_norm })
}

/// Single-linkage clustering of locations closer than `threshold_mm`; each
/// cluster is represented by its last member in input order. Clusters are
/// returned in order of their representative.
pub fn merge_candidates(refined: &[CandidateLocation], threshold_mm: f64) -> Vec<CandidateLocation> {
    let n = refined.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if refined[i].xy.distance(&refined[j].xy) < threshold_mm {
                let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                parent[a.min(b)] = a.max(b);
            }
        }
    }
    let mut last = vec![None; n];
    for i in 0..n {
        let r = root(&mut parent, i);
        last[r] = Some(i);
    }
    let mut reps: Vec<usize> = last.into_iter().flatten().collect();
    reps.sort_unstable();
    reps.into_iter().map(|i| refined[i]).collect()
}

/// Euclidean XY distance, mm.
pub fn localization_error(refined: Xy, truth: Xy) -> f64 {
    refined.distance(&truth)
}

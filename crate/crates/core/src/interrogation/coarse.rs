use serde::{Deserialize, Serialize};

use super::{detect_regions, CandidateLocation, DetectConfig, GridPlan, InterrogationError};
use crate::geom::Xy;
use crate::sim::{TactileFrame, TactileSim};

/// Scripted force-controlled press used to image a location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PressConfig {
    /// Target normal force, N.
    pub force: f64,
    pub step_mm: f64,
    pub max_depth_mm: f64,
    /// Safe travel height in the ROI frame, mm.
    pub travel_z: f64,
}

impl Default for PressConfig {
    fn default() -> Self {
        Self { force: 5.0, step_mm: 0.05, max_depth_mm: 15.0, travel_z: 25.0 }
    }
}

/// Retracts, travels to `xy`, presses to the configured force and captures
/// one frame.
pub(crate) fn press_and_capture(
    sim: &mut TactileSim,
    xy: Xy,
    press: &PressConfig,
) -> Result<TactileFrame, InterrogationError> {
    sim.retract_to(press.travel_z)?;
    sim.move_to(xy.with_z(press.travel_z))?;
    sim.press_to(press.force, press.step_mm, press.max_depth_mm)?;
    Ok(sim.capture())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointVisit {
    pub xy: Xy,
    pub force: f64,
    pub pixel_sum: u64,
    pub region_count: usize,
    pub largest_diameter_px: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseResult {
    pub visits: Vec<WaypointVisit>,
    pub candidates: Vec<CandidateLocation>,
}

/// Visits every waypoint in order; those whose frame holds at least one
/// region surviving detection become candidates at the waypoint itself.
pub fn coarse_interrogate(
    sim: &mut TactileSim,
    plan: &GridPlan,
    press: &PressConfig,
    detect: &DetectConfig,
) -> Result<CoarseResult, InterrogationError> {
    if plan.waypoints.is_empty() {
        return Err(InterrogationError::DegenerateGrid("plan has no waypoints".into()));
    }
    let mmpp = sim.config().mm_per_pixel;
    let mut visits = Vec::with_capacity(plan.waypoints.len());
    let mut candidates = Vec::new();
    for &wp in &plan.waypoints {
        let frame = press_and_capture(sim, wp, press)?;
        let regions = detect_regions(&frame, detect, mmpp);
        if !regions.is_empty() {
            candidates.push(CandidateLocation::coarse(wp));
        }
        visits.push(WaypointVisit {
            xy: wp,
            force: frame.applied_force,
            pixel_sum: frame.pixel_sum(),
            region_count: regions.len(),
            largest_diameter_px: regions.first().map(|r| r.equivalent_diameter_px),
        });
    }
    sim.retract_to(press.travel_z)?;
    Ok(CoarseResult { visits, candidates })
}

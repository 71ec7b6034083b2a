use serde::{Deserialize, Serialize};

use super::InterrogationError;
use crate::geom::{Vec3, Xy};
use crate::sim::RoiTransform;

/// Rectangular region of interest and the scan's starting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoiSpec {
    pub extent: Xy,
    pub transform: RoiTransform,
    /// (x_s, y_s, z_s) in the ROI frame; z_s is the safe travel height.
    pub start: Vec3,
}

impl RoiSpec {
    /// 165.1 x 215.9 mm ROI starting at (38.25, 38.25, 25).
    pub fn dual_inclusion() -> Self {
        Self { extent: Xy::new(165.1, 215.9), transform: RoiTransform::default(), start: Vec3::new(38.25, 38.25, 25.0) }
    }

    pub fn validate(&self) -> Result<(), InterrogationError> {
        let (s, e) = (self.start, self.extent);
        if !(e.x > 0.0 && e.y > 0.0) {
            return Err(InterrogationError::InvalidRoi(format!("extent must be positive, got {e:?}")));
        }
        if !(s.x > 0.0 && s.x < e.x && s.y > 0.0 && s.y < e.y) {
            return Err(InterrogationError::InvalidRoi(format!(
                "start ({}, {}) must lie strictly inside the ROI",
                s.x, s.y
            )));
        }
        Ok(())
    }

    pub fn contains(&self, p: Xy) -> bool {
        (0.0..=self.extent.x).contains(&p.x) && (0.0..=self.extent.y).contains(&p.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPlan {
    pub dx: f64,
    pub dy: f64,
    /// Raster order: rows of increasing X, each scanned in +Y from y_s.
    pub waypoints: Vec<Xy>,
}

/// Lays out the coarse scan: rows at x_s, x_s + dx, ... and within each row
/// points y_s, y_s + dy, ..., all strictly inside the ROI.
pub fn plan_grid(roi: &RoiSpec, dx: f64, dy: f64) -> Result<GridPlan, InterrogationError> {
    roi.validate()?;
    let e = roi.extent;
    if !(dx > 0.0 && dx < e.x && dy > 0.0 && dy < e.y) {
        return Err(InterrogationError::DegenerateGrid(format!(
            "spacing ({dx}, {dy}) must satisfy 0 < dx < {} and 0 < dy < {}",
            e.x, e.y
        )));
    }
    let axis = |start: f64, step: f64, limit: f64| -> Vec<f64> {
        (0..).map(|i| start + i as f64 * step).take_while(|&v| v < limit).collect()
    };
    let ys = axis(roi.start.y, dy, e.y);
    let waypoints: Vec<Xy> =
        axis(roi.start.x, dx, e.x).into_iter().flat_map(|x| ys.iter().map(move |&y| Xy::new(x, y))).collect();
    if waypoints.is_empty() {
        return Err(InterrogationError::DegenerateGrid("no waypoint fits inside the ROI".into()));
    }
    Ok(GridPlan { dx, dy, waypoints })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent enumeration: nested loops with explicit bounds checks.
    fn enumerate_count(roi: &RoiSpec, dx: f64, dy: f64) -> usize {
        let mut n = 0;
        let mut i = 0;
        loop {
            let x = roi.start.x + i as f64 * dx;
            if x >= roi.extent.x {
                break;
            }
            let mut j = 0;
            loop {
                let y = roi.start.y + j as f64 * dy;
                if y >= roi.extent.y {
                    break;
                }
                n += 1;
                j += 1;
            }
            i += 1;
        }
        n
    }

    #[test]
    fn first_row_contains_coarse_scan_locations() {
        let plan = plan_grid(&RoiSpec::dual_inclusion(), 15.0, 15.0).unwrap();
        for p in [Xy::new(38.25, 38.25), Xy::new(38.25, 53.25), Xy::new(38.25, 68.25), Xy::new(38.25, 113.25)] {
            assert!(plan.waypoints.contains(&p), "{p:?} missing");
        }
        assert_eq!(plan.waypoints[0], Xy::new(38.25, 38.25));
        assert_eq!(plan.waypoints[1], Xy::new(38.25, 53.25));
    }

    #[test]
    fn count_matches_enumeration() {
        let roi = RoiSpec::dual_inclusion();
        let plan = plan_grid(&roi, 15.0, 15.0).unwrap();
        assert_eq!(plan.waypoints.len(), enumerate_count(&roi, 15.0, 15.0));
        assert_eq!(plan.waypoints.len(), 9 * 12);
    }

    #[test]
    fn half_extent_spacing_from_centre_is_single_point() {
        let mut roi = RoiSpec::dual_inclusion();
        roi.start = Vec3::new(roi.extent.x / 2.0, roi.extent.y / 2.0, 25.0);
        let plan = plan_grid(&roi, roi.extent.x / 2.0, roi.extent.y / 2.0).unwrap();
        assert_eq!(plan.waypoints, vec![Xy::new(82.55, 107.95)]);
    }

    #[test]
    fn rejects_bad_spacing_and_start() {
        let roi = RoiSpec::dual_inclusion();
        assert!(matches!(plan_grid(&roi, 0.0, 15.0), Err(InterrogationError::DegenerateGrid(_))));
        assert!(plan_grid(&roi, 200.0, 15.0).is_err());
        let mut edge = roi.clone();
        edge.start.x = 0.0;
        assert!(matches!(plan_grid(&edge, 15.0, 15.0), Err(InterrogationError::InvalidRoi(_))));
    }

    proptest! {
        #[test]
        fn raster_structure(
            rx in 20.0f64..300.0, ry in 20.0f64..300.0,
            fx in 0.05f64..0.95, fy in 0.05f64..0.95,
            dx in 1.0f64..19.0, dy in 1.0f64..19.0,
        ) {
            let roi = RoiSpec {
                extent: Xy::new(rx, ry),
                transform: RoiTransform::default(),
                start: Vec3::new(fx * rx, fy * ry, 25.0),
            };
            let plan = plan_grid(&roi, dx, dy).unwrap();
            prop_assert_eq!(plan.waypoints.len(), enumerate_count(&roi, dx, dy));
            for w in &plan.waypoints {
                prop_assert!(w.x > 0.0 && w.x < rx && w.y > 0.0 && w.y < ry);
            }
            for pair in plan.waypoints.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                if a.x == b.x {
                    prop_assert!((b.y - a.y - dy).abs() < 1e-9);
                } else {
                    prop_assert!((b.x - a.x - dx).abs() < 1e-9);
                    prop_assert_eq!(b.y, roi.start.y);
                }
            }
        }
    }
}

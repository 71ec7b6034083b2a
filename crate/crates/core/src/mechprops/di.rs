use serde::{Deserialize, Serialize};

use super::{FrameSequence, MechError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformationIndex {
    /// Slope of ΔI against ΔF through the origin, counts/N.
    pub di: f64,
    /// RMS residual of the fit, counts.
    pub residual: f64,
    /// Number of (ΔF, ΔI) pairs used.
    pub points: usize,
    pub reference_frame: u64,
    /// ΔI/ΔF for each pair, for diagnostics.
    pub per_frame_ratios: Vec<f64>,
}

/// Least-squares slope through the origin of ΔI versus ΔF, with differences
/// taken against the lowest-force in-window frame. Pairs whose ΔF is zero
/// add nothing to the slope and are skipped in the ratios.
pub fn estimate_di(seq: &FrameSequence, force_floor: f64) -> Result<DeformationIndex, MechError> {
    let n = seq.in_window().count();
    if n < 2 {
        return Err(MechError::TooFewFrames(n));
    }
    let r = seq.reference_index().expect("window is non-empty");
    let reference = seq.samples[r];
    let pairs: Vec<(f64, f64)> = seq
        .in_window()
        .filter(|s| s.frame_index != reference.frame_index)
        .map(|s| (s.force - reference.force, s.pixel_sum - reference.pixel_sum))
        .collect();
    let span = pairs.iter().map(|p| p.0).fold(0.0, f64::max);
    if span < force_floor || span <= 0.0 {
        return Err(MechError::DegenerateForceRange { span, floor: force_floor });
    }
    let sxx: f64 = pairs.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pairs.iter().map(|p| p.0 * p.1).sum();
    let di = sxy / sxx;
    let residual = (pairs.iter().map(|p| (p.1 - di * p.0).powi(2)).sum::<f64>() / pairs.len() as f64).sqrt();
    let per_frame_ratios = pairs.iter().filter(|p| p.0 != 0.0).map(|p| p.1 / p.0).collect();
    Ok(DeformationIndex { di, residual, points: pairs.len(), reference_frame: reference.frame_index, per_frame_ratios })
}

pub fn di_ratio(hard: &DeformationIndex, soft: &DeformationIndex) -> Result<f64, MechError> {
    if soft.di == 0.0 {
        return Err(MechError::DivisionByZeroDI);
    }
    Ok(hard.di / soft.di)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechprops::SequenceSample;
    use proptest::prelude::*;

    fn seq(points: &[(f64, f64)]) -> FrameSequence {
        FrameSequence::new(
            points
                .iter()
                .enumerate()
                .map(|(k, &(force, pixel_sum))| SequenceSample { frame_index: k as u64, force, pixel_sum })
                .collect(),
            (1.0, 10.0),
        )
    }

    fn di_of(v: f64) -> DeformationIndex {
        DeformationIndex { di: v, residual: 0.0, points: 2, reference_frame: 0, per_frame_ratios: vec![] }
    }

    #[test]
    fn exact_line() {
        let s = seq(&[(2.0, 100.0), (3.0, 150.0), (5.5, 275.0), (9.0, 450.0)]);
        let d = estimate_di(&s, 0.1).unwrap();
        assert!((d.di - 50.0).abs() < 1e-12 && d.residual < 1e-9);
        assert_eq!(d.points, 3);
    }

    #[test]
    fn flat_force_is_degenerate() {
        let s = seq(&[(5.0, 100.0), (5.01, 120.0), (5.0, 90.0)]);
        assert!(matches!(estimate_di(&s, 0.15), Err(MechError::DegenerateForceRange { .. })));
        assert!(matches!(estimate_di(&seq(&[(5.0, 1.0)]), 0.1), Err(MechError::TooFewFrames(1))));
    }

    #[test]
    fn hard_soft_ratios_from_slopes() {
        let r = |h: f64, s: f64| di_ratio(&di_of(h), &di_of(s)).unwrap();
        assert!((r(21.1e3, 20.2e3) - 1.04).abs() < 0.005);
        assert!((r(14.8e3, 5.35e3) - 2.77).abs() < 0.005);
        assert!((r(9.65e3, 3.78e3) - 2.55).abs() < 0.005);
        assert_eq!(di_ratio(&di_of(1.0), &di_of(0.0)), Err(MechError::DivisionByZeroDI));
    }

    proptest! {
        #[test]
        fn offset_invariant_and_linear(
            pts in proptest::collection::vec((1.0f64..4.0, 0.0f64..1e5), 3..20),
            c in -0.5f64..0.5, s in 0.1f64..10.0,
        ) {
            let base = seq(&pts);
            prop_assume!(estimate_di(&base, 0.01).is_ok());
            let d0 = estimate_di(&base, 0.01).unwrap().di;
            let shifted: Vec<_> = pts.iter().map(|&(f, i)| (f + c + 1.0, i)).collect();
            let d1 = estimate_di(&FrameSequence { window: (1.0 + c + 1.0, 4.0 + c + 1.0), ..seq(&shifted) }, 0.01).unwrap().di;
            prop_assert!((d1 - d0).abs() <= 1e-6 * d0.abs().max(1.0));
            let scaled: Vec<_> = pts.iter().map(|&(f, i)| (f, s * i)).collect();
            let d2 = estimate_di(&seq(&scaled), 0.01).unwrap().di;
            prop_assert!((d2 - s * d0).abs() <= 1e-9 * (s * d0).abs().max(1.0));
        }
    }
}

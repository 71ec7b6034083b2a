//! Forward model of an optical tactile imaging probe pressing into an
//! elastomer phantom with embedded inclusions.
//!
//! The model is deliberately phenomenological. Each inclusion under the
//! sensing window adds a Gaussian intensity bump whose amplitude grows
//! linearly with the applied force, saturates with the inclusion's stiffness
//! contrast against the background, grows with the inclusion's size and
//! decays with burial depth. Contact force is a linear spring whose rate is
//! raised by stiff material under the footprint.
//!
//! All randomness is drawn from a single seeded generator owned by
//! [`TactileSim`], so a seed plus a command sequence reproduces the frame
//! stream bit for bit.

mod io;
mod model;
mod simulator;

pub use io::{read_pgm, read_sequence_csv, write_pgm, write_sequence_csv, SequenceRow};
pub use model::{
    applied_force, contact_force, effective_stiffness, render_frame, step_probe, stiffness_contrast,
};
pub use simulator::TactileSim;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Vec3, Xy};

/// Full scale of the force sensor.
pub const SENSOR_RANGE_N: f64 = 50.0;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("target ({x:.3}, {y:.3}) mm lies outside the ROI [0, {rx}] x [0, {ry}]")]
    OutOfRoi { x: f64, y: f64, rx: f64, ry: f64 },
    #[error("invalid phantom: {0}")]
    InvalidPhantom(String),
    #[error("invalid sensor config: {0}")]
    InvalidSensor(String),
    #[error("frame io: {0}")]
    Io(String),
}

/// Ground truth for one embedded inclusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionSpec {
    /// Centre in the ROI frame, millimetres.
    pub center: Vec3,
    /// Diameter in millimetres.
    pub diameter: f64,
    /// Young's modulus in kPa.
    pub elasticity: f64,
}

impl InclusionSpec {
    pub fn new(center: Vec3, diameter: f64, elasticity: f64) -> Self {
        Self { center, diameter, elasticity }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    /// ROI extent (R_x, R_y) in millimetres.
    pub extent: Xy,
    pub surface_z: f64,
    /// Thickness of the inclusion layer in millimetres.
    pub inclusion_layer_depth: f64,
    pub inclusions: Vec<InclusionSpec>,
    /// Background elastomer modulus, kPa.
    pub background_stiffness: f64,
}

/// Hard inclusion of the validation experiments: 18.9 mm, 628 kPa.
pub const HARD_DIAMETER: f64 = 18.9;
pub const HARD_ELASTICITY: f64 = 628.0;
/// Soft inclusion of the validation experiments: 15.3 mm, 94.4 kPa.
pub const SOFT_DIAMETER: f64 = 15.3;
pub const SOFT_ELASTICITY: f64 = 94.4;

impl PhantomSpec {
    pub const DEFAULT_BACKGROUND_KPA: f64 = 23.0;

    /// The two-inclusion interrogation phantom: 165.1 x 215.9 mm, 12 mm
    /// inclusion layer, hard inclusion at (44.5, 51.5, -6) and soft at
    /// (40.0, 118.5, -6).
    pub fn dual_inclusion() -> Self {
        Self {
            extent: Xy::new(165.1, 215.9),
            surface_z: 0.0,
            inclusion_layer_depth: 12.0,
            inclusions: vec![
                InclusionSpec::new(Vec3::new(44.50, 51.50, -6.0), HARD_DIAMETER, HARD_ELASTICITY),
                InclusionSpec::new(Vec3::new(40.00, 118.50, -6.0), SOFT_DIAMETER, SOFT_ELASTICITY),
            ],
            background_stiffness: Self::DEFAULT_BACKGROUND_KPA,
        }
    }

    /// A 100 x 100 mm block with one inclusion at its centre, buried at
    /// z = -6 under a layer of the given depth.
    pub fn single_inclusion(diameter: f64, elasticity: f64, layer_depth: f64) -> Self {
        Self {
            extent: Xy::new(100.0, 100.0),
            surface_z: 0.0,
            inclusion_layer_depth: layer_depth,
            inclusions: vec![InclusionSpec::new(Vec3::new(50.0, 50.0, -6.0), diameter, elasticity)],
            background_stiffness: Self::DEFAULT_BACKGROUND_KPA,
        }
    }

    pub fn empty(extent: Xy) -> Self {
        Self {
            extent,
            surface_z: 0.0,
            inclusion_layer_depth: 6.0,
            inclusions: Vec::new(),
            background_stiffness: Self::DEFAULT_BACKGROUND_KPA,
        }
    }

    pub fn contains_xy(&self, p: Xy) -> bool {
        (0.0..=self.extent.x).contains(&p.x) && (0.0..=self.extent.y).contains(&p.y)
    }

    /// Distance from the surface to the inclusion used for attenuation:
    /// the inclusion's own burial plus the covering layer.
    pub fn attenuation_depth(&self, inc: &InclusionSpec) -> f64 {
        (self.surface_z - inc.center.z).max(0.0) + self.inclusion_layer_depth
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidPhantom(m));
        if !(self.extent.x > 0.0 && self.extent.y > 0.0) {
            return bad(format!("extent must be positive, got {:?}", self.extent));
        }
        if !(self.background_stiffness > 0.0) {
            return bad("background stiffness must be positive".into());
        }
        if !(self.inclusion_layer_depth >= 0.0) || !self.surface_z.is_finite() {
            return bad("layer depth must be non-negative and surface finite".into());
        }
        for (i, inc) in self.inclusions.iter().enumerate() {
            if !inc.center.is_finite() {
                return bad(format!("inclusion {i}: non-finite centre"));
            }
            if !(inc.diameter > 0.0) {
                return bad(format!("inclusion {i}: diameter must be positive"));
            }
            if !(inc.elasticity > 0.0) {
                return bad(format!("inclusion {i}: elasticity must be positive"));
            }
            if inc.center.z > self.surface_z {
                return bad(format!("inclusion {i}: centre above the surface"));
            }
            if !self.contains_xy(inc.center.xy()) {
                return bad(format!("inclusion {i}: centre outside the ROI"));
            }
        }
        for (i, a) in self.inclusions.iter().enumerate() {
            for (j, b) in self.inclusions.iter().enumerate().skip(i + 1) {
                let d = a.center - b.center;
                let dist = (d.x * d.x + d.y * d.y + d.z * d.z).sqrt();
                if dist < 0.5 * (a.diameter + b.diameter) {
                    return bad(format!("inclusions {i} and {j} overlap"));
                }
            }
        }
        Ok(())
    }
}

/// Axis-aligned mapping between the ROI frame (mm) and the robot base
/// frame (m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiTransform {
    /// ROI origin expressed in the base frame, metres.
    pub origin_base: Vec3,
    /// Sign of each ROI axis along the matching base axis (+1 or -1).
    pub axis_signs: [f64; 3],
}

impl Default for RoiTransform {
    fn default() -> Self {
        Self { origin_base: Vec3::new(0.6762, -0.1431, 0.1729), axis_signs: [1.0, 1.0, 1.0] }
    }
}

impl RoiTransform {
    pub fn roi_to_base(&self, p: Vec3) -> Vec3 {
        let s = self.axis_signs;
        Vec3::new(
            self.origin_base.x + s[0] * p.x / 1000.0,
            self.origin_base.y + s[1] * p.y / 1000.0,
            self.origin_base.z + s[2] * p.z / 1000.0,
        )
    }

    pub fn base_to_roi(&self, p: Vec3) -> Vec3 {
        let s = self.axis_signs;
        Vec3::new(
            s[0] * (p.x - self.origin_base.x) * 1000.0,
            s[1] * (p.y - self.origin_base.y) * 1000.0,
            s[2] * (p.z - self.origin_base.z) * 1000.0,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeState {
    pub commanded: Vec3,
    pub actual: Vec3,
}

impl ProbeState {
    pub fn at(p: Vec3) -> Self {
        Self { commanded: p, actual: p }
    }

    /// Indentation of the probe tip below the phantom surface.
    pub fn contact_depth(&self, surface_z: f64) -> f64 {
        (surface_z - self.actual.z).max(0.0)
    }
}

/// Constants of the intensity forward model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityModel {
    /// Peak counts per newton for a reference-sized, fully contrasted,
    /// unattenuated inclusion.
    pub gain: f64,
    /// Bump standard deviation as a fraction of inclusion diameter.
    pub width_factor: f64,
    /// Attenuation length of the covering elastomer, mm.
    pub depth_decay_mm: f64,
    /// Diameter at which the size factor is 1, mm.
    pub size_ref_mm: f64,
    /// Exponent of the size factor on the amplitude.
    pub size_exponent: f64,
}

impl Default for IntensityModel {
    fn default() -> Self {
        Self { gain: 24.0, width_factor: 0.14, depth_decay_mm: 20.0, size_ref_mm: 15.0, size_exponent: 2.0 }
    }
}

/// Linear contact spring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactModel {
    /// Spring rate over plain background, N/mm.
    pub background_rate: f64,
    /// Added rate per kPa of inclusion modulus at full footprint overlap, N/mm/kPa.
    pub inclusion_rate_per_kpa: f64,
}

impl Default for ContactModel {
    fn default() -> Self {
        Self { background_rate: 1.2, inclusion_rate_per_kpa: 0.002 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub width: usize,
    pub height: usize,
    pub mm_per_pixel: f64,
    pub force_noise_sd: f64,
    pub intensity_noise_sd: f64,
    /// Bound on |actual - commanded| per horizontal axis, mm.
    pub pos_noise_bound: f64,
    /// Per-move jitter part of the positional noise; the rest of the bound
    /// is a fixed per-run bias.
    pub pos_repeatability: f64,
    /// Safety limit on applied force, N.
    pub max_force: f64,
    pub rng_seed: u64,
    pub intensity: IntensityModel,
    pub contact: ContactModel,
}

impl SensorConfig {
    /// 1280 x 1024 camera at 0.03 mm/px (70 px = 2.1 mm).
    pub fn full() -> Self {
        Self { width: 1280, height: 1024, mm_per_pixel: 0.03, ..Self::reduced() }
    }

    /// 320 x 256 at 0.12 mm/px; same physical window as [`full`](Self::full).
    pub fn reduced() -> Self {
        Self {
            width: 320,
            height: 256,
            mm_per_pixel: 0.12,
            force_noise_sd: 0.05,
            intensity_noise_sd: 2.0,
            pos_noise_bound: 0.0,
            pos_repeatability: 1.0,
            max_force: 10.0,
            rng_seed: 0,
            intensity: IntensityModel::default(),
            contact: ContactModel::default(),
        }
    }

    pub fn without_noise(mut self) -> Self {
        self.force_noise_sd = 0.0;
        self.intensity_noise_sd = 0.0;
        self.pos_noise_bound = 0.0;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn with_position_noise(mut self, bound: f64) -> Self {
        self.pos_noise_bound = bound;
        self
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Sensing window footprint (width, height) in millimetres.
    pub fn window_mm(&self) -> Xy {
        Xy::new(self.width as f64 * self.mm_per_pixel, self.height as f64 * self.mm_per_pixel)
    }

    /// Continuous pixel coordinates of the optical centre.
    pub fn image_center(&self) -> (f64, f64) {
        ((self.width as f64 - 1.0) / 2.0, (self.height as f64 - 1.0) / 2.0)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidSensor(m.to_string()));
        if self.width == 0 || self.height == 0 {
            return bad("image dimensions must be non-zero");
        }
        if !(self.mm_per_pixel > 0.0) {
            return bad("mm_per_pixel must be positive");
        }
        if !(self.max_force > 0.0 && self.max_force <= SENSOR_RANGE_N) {
            return bad("max_force must lie in (0, 50] N");
        }
        if !(self.force_noise_sd >= 0.0 && self.intensity_noise_sd >= 0.0) {
            return bad("noise levels must be non-negative");
        }
        if !(self.pos_noise_bound >= 0.0 && self.pos_repeatability >= 0.0) {
            return bad("positional noise must be non-negative");
        }
        let im = &self.intensity;
        if !(im.gain >= 0.0 && im.width_factor > 0.0 && im.depth_decay_mm > 0.0 && im.size_ref_mm > 0.0) {
            return bad("intensity model constants out of range");
        }
        if !(self.contact.background_rate > 0.0 && self.contact.inclusion_rate_per_kpa >= 0.0) {
            return bad("contact model constants out of range");
        }
        Ok(())
    }

    /// Mean and variance of one background pixel: a zero-mean Gaussian
    /// rounded to an integer and clamped to [0, 255].
    pub fn background_pixel_moments(&self) -> (f64, f64) {
        let sd = self.intensity_noise_sd;
        if sd == 0.0 {
            return (0.0, 0.0);
        }
        let cdf = |x: f64| 0.5 * (1.0 + erf(x / (sd * std::f64::consts::SQRT_2)));
        let (mut m1, mut m2) = (0.0, 0.0);
        for k in 1..=255 {
            let hi = if k == 255 { 1.0 } else { cdf(k as f64 + 0.5) };
            let p = hi - cdf(k as f64 - 0.5);
            m1 += k as f64 * p;
            m2 += (k * k) as f64 * p;
        }
        (m1, m2 - m1 * m1)
    }

    /// Upper bound on the pixel sum of a frame with no inclusion signal:
    /// expected background plus six standard deviations.
    pub fn noise_floor(&self) -> f64 {
        let (m, v) = self.background_pixel_moments();
        let n = self.pixel_count() as f64;
        n * m + 6.0 * (n * v).sqrt()
    }
}

/// Abramowitz-Stegun 7.1.26, |error| < 1.5e-7.
fn erf(x: f64) -> f64 {
    let t = 1.0 / (1.0 + 0.327_591_1 * x.abs());
    let y = 1.0
        - (((((1.061_405_429 * t - 1.453_152_027) * t) + 1.421_413_741) * t - 0.284_496_736) * t
            + 0.254_829_592)
            * t
            * (-x * x).exp();
    y.copysign(x)
}

/// One tactile image together with the force and pose it was taken at.
#[derive(Debug, Clone, PartialEq)]
pub struct TactileFrame {
    pub width: usize,
    pub height: usize,
    /// Row-major 8-bit intensities; column index runs along +X, row along +Y.
    pub pixels: Vec<u8>,
    /// Measured normal force, N.
    pub applied_force: f64,
    /// Robot-reported (commanded) probe pose in the ROI frame.
    pub probe_pose: Vec3,
    pub frame_index: u64,
}

impl TactileFrame {
    pub fn blank(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; width * height],
            applied_force: 0.0,
            probe_pose: Vec3::default(),
            frame_index: 0,
        }
    }

    pub fn pixel_sum(&self) -> u64 {
        self.pixels.iter().map(|&p| p as u64).sum()
    }

    pub fn get(&self, u: usize, v: usize) -> u8 {
        self.pixels[v * self.width + u]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roi_round_trip() {
        let t = RoiTransform { axis_signs: [-1.0, 1.0, -1.0], ..Default::default() };
        for p in [Vec3::new(0.0, 0.0, 0.0), Vec3::new(165.1, 215.9, 25.0), Vec3::new(38.25, 113.25, -6.0)] {
            let back = t.base_to_roi(t.roi_to_base(p));
            assert!((back - p).x.abs() < 1e-9 && (back - p).y.abs() < 1e-9 && (back - p).z.abs() < 1e-9);
        }
        let o = RoiTransform::default().roi_to_base(Vec3::default());
        assert_eq!(o, Vec3::new(0.6762, -0.1431, 0.1729));
    }

    #[test]
    fn presets_validate() {
        PhantomSpec::dual_inclusion().validate().unwrap();
        PhantomSpec::single_inclusion(HARD_DIAMETER, HARD_ELASTICITY, 6.0).validate().unwrap();
        SensorConfig::full().validate().unwrap();
        SensorConfig::reduced().validate().unwrap();
    }

    #[test]
    fn phantom_rejects_bad_geometry() {
        let mut p = PhantomSpec::dual_inclusion();
        p.inclusions[1].center = Vec3::new(45.0, 55.0, -6.0);
        assert!(matches!(p.validate(), Err(SimError::InvalidPhantom(_))));
        let mut p = PhantomSpec::dual_inclusion();
        p.inclusions[0].center.x = 170.0;
        assert!(p.validate().is_err());
        let mut p = PhantomSpec::dual_inclusion();
        p.inclusions[0].center.z = 1.0;
        assert!(p.validate().is_err());
        let mut p = PhantomSpec::dual_inclusion();
        p.inclusions[0].elasticity = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn sensor_force_limit_capped_at_range() {
        let mut s = SensorConfig::reduced();
        s.max_force = 60.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn erf_reference_values() {
        assert!((erf(0.5) - 0.520_499_877_8).abs() < 2e-7);
        assert!((erf(-1.5) + 0.966_105_146_5).abs() < 2e-7);
    }

    #[test]
    fn background_moments_match_sampling() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let cfg = SensorConfig::reduced();
        let (m, v) = cfg.background_pixel_moments();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = Normal::new(0.0, cfg.intensity_noise_sd).unwrap();
        let draws: Vec<f64> = (0..200_000).map(|_| n.sample(&mut rng).round().clamp(0.0, 255.0)).collect();
        let sm = draws.iter().sum::<f64>() / draws.len() as f64;
        let sv = draws.iter().map(|d| (d - sm).powi(2)).sum::<f64>() / draws.len() as f64;
        assert!((sm - m).abs() < 0.01, "{sm} vs {m}");
        assert!((sv - v).abs() < 0.02, "{sv} vs {v}");
    }
}

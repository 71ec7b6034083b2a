use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::agent::{EnvConfig, SacConfig, TrainConfig};
use crate::geom::Xy;
use crate::interrogation::{FineConfig, PressConfig, RoiSpec, DEFAULT_MERGE_THRESHOLD_MM};
use crate::mechprops::RiskWeights;
use crate::sim::{PhantomSpec, SensorConfig, HARD_DIAMETER, HARD_ELASTICITY, SOFT_DIAMETER, SOFT_ELASTICITY};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Full,
    #[default]
    Reduced,
}

impl std::str::FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "full" => Ok(Profile::Full),
            "reduced" => Ok(Profile::Reduced),
            other => Err(format!("unknown profile {other:?} (expected full or reduced)")),
        }
    }
}

/// Noise and limits applied on top of the chosen camera profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSection {
    pub profile: Profile,
    /// Half-width of the per-run XY bias, mm. Zero disables positional noise.
    pub position_noise_mm: f64,
    pub force_noise_sd: f64,
    pub intensity_noise_sd: f64,
    pub max_force: f64,
}

impl Default for SensorSection {
    fn default() -> Self {
        let r = SensorConfig::reduced();
        Self {
            profile: Profile::Reduced,
            position_noise_mm: 5.0,
            force_noise_sd: r.force_noise_sd,
            intensity_noise_sd: r.intensity_noise_sd,
            max_force: r.max_force,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterrogationSection {
    pub roi: RoiSpec,
    pub grid_dx_mm: f64,
    pub grid_dy_mm: f64,
    pub press: PressConfig,
    /// Median-filtered pixel level above which a pixel counts as signal.
    pub detect_threshold: f64,
    /// Recentering stops once the centroid is this close to the image
    /// centre, mm (converted to pixels for the active profile).
    pub offset_threshold_mm: f64,
    pub max_fine_iters: u32,
    pub merge_threshold_mm: f64,
    /// Step budget for each characterization press.
    pub max_acquire_steps: usize,
}

impl Default for InterrogationSection {
    fn default() -> Self {
        Self {
            roi: RoiSpec::dual_inclusion(),
            grid_dx_mm: 15.0,
            grid_dy_mm: 15.0,
            press: PressConfig::default(),
            detect_threshold: 4.5,
            offset_threshold_mm: 2.1,
            max_fine_iters: 20,
            merge_threshold_mm: DEFAULT_MERGE_THRESHOLD_MM,
            max_acquire_steps: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    pub sac: SacConfig,
    pub env: EnvConfig,
    pub episodes: usize,
    pub warmup_steps: usize,
    pub updates_per_step: usize,
    pub start_height_min: f64,
    /// Training press locations; empty means every inclusion centre of the
    /// phantom.
    pub targets: Vec<Xy>,
    pub target_jitter_mm: f64,
}

impl Default for AgentSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            sac: t.sac,
            env: EnvConfig::default(),
            episodes: t.episodes,
            warmup_steps: t.warmup_steps,
            updates_per_step: t.updates_per_step,
            start_height_min: t.start_height_min,
            targets: Vec::new(),
            target_jitter_mm: t.target_jitter_mm,
        }
    }
}

/// Scripted presses over single-inclusion blocks used to fit the size
/// surface. Every size is pressed at every elasticity and force.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    pub sizes_mm: Vec<f64>,
    pub elasticities_kpa: Vec<f64>,
    pub layer_depth_mm: f64,
    pub forces_n: Vec<f64>,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self {
            sizes_mm: vec![12.0, 14.0, 17.0, 20.0, 22.0],
            elasticities_kpa: vec![SOFT_ELASTICITY, HARD_ELASTICITY],
            layer_depth_mm: 6.0,
            forces_n: (1..=10).map(f64::from).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacterizeTarget {
    pub name: String,
    pub diameter_mm: f64,
    pub elasticity_kpa: f64,
    pub layer_depth_mm: f64,
}

impl CharacterizeTarget {
    fn new(name: &str, diameter_mm: f64, elasticity_kpa: f64, layer_depth_mm: f64) -> Self {
        Self { name: name.into(), diameter_mm, elasticity_kpa, layer_depth_mm }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CharacterizeSection {
    pub targets: Vec<CharacterizeTarget>,
}

impl Default for CharacterizeSection {
    fn default() -> Self {
        Self {
            targets: vec![
                CharacterizeTarget::new("soft", SOFT_DIAMETER, SOFT_ELASTICITY, 6.0),
                CharacterizeTarget::new("hard", HARD_DIAMETER, HARD_ELASTICITY, 6.0),
                CharacterizeTarget::new("hard_deep", HARD_DIAMETER, HARD_ELASTICITY, 12.0),
            ],
        }
    }
}

/// Risk weights; `di_max` defaults to the full-swing DI of the active
/// profile and force window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskSection {
    pub w1: f64,
    pub w2: f64,
    pub d_max_mm: f64,
    pub di_max: Option<f64>,
}

impl Default for RiskSection {
    fn default() -> Self {
        Self { w1: 0.5, w2: 0.5, d_max_mm: 21.0, di_max: None }
    }
}

/// One experiment. Every field except `seed` may be omitted from the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub seed: u64,
    #[serde(default = "PhantomSpec::dual_inclusion")]
    pub phantom: PhantomSpec,
    #[serde(default)]
    pub sensor: SensorSection,
    #[serde(default)]
    pub interrogation: InterrogationSection,
    #[serde(default)]
    pub agent: AgentSection,
    #[serde(default)]
    pub calibration: CalibrationSection,
    #[serde(default)]
    pub characterize: CharacterizeSection,
    /// Force window (lo, hi) in N within which frames are recorded.
    #[serde(default = "default_window")]
    pub window: (f64, f64),
    /// Slopes are rejected when the window's force span is below this, N.
    #[serde(default = "default_force_floor")]
    pub force_floor_n: f64,
    #[serde(default)]
    pub risk: RiskSection,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

fn default_window() -> (f64, f64) {
    (1.0, 10.0)
}

fn default_force_floor() -> f64 {
    0.05
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            phantom: PhantomSpec::dual_inclusion(),
            sensor: SensorSection::default(),
            interrogation: InterrogationSection::default(),
            agent: AgentSection::default(),
            calibration: CalibrationSection::default(),
            characterize: CharacterizeSection::default(),
            window: default_window(),
            force_floor_n: default_force_floor(),
            risk: RiskSection::default(),
            output_dir: default_output_dir(),
        }
    }
}

/// Derives an independent seed for one consumer of randomness.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

impl ExperimentConfig {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| {
            HarnessError::Config(format!("{}:{}:{}: {e}", origin.display(), e.line(), e.column()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical JSON form. The output directory is
    /// excluded so that relocating a run does not change its identity.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        hex::encode(Sha256::digest(serde_json::to_vec(&c).expect("config serializes")))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        self.phantom.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.base_sensor().validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        let s = &self.sensor;
        if !(s.position_noise_mm >= 0.0 && s.position_noise_mm.is_finite()) {
            return bad("sensor.position_noise_mm must be non-negative".into());
        }
        let it = &self.interrogation;
        it.roi.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        let positive = [
            ("interrogation.grid_dx_mm", it.grid_dx_mm),
            ("interrogation.grid_dy_mm", it.grid_dy_mm),
            ("interrogation.press.force", it.press.force),
            ("interrogation.press.step_mm", it.press.step_mm),
            ("interrogation.press.max_depth_mm", it.press.max_depth_mm),
            ("interrogation.detect_threshold", it.detect_threshold),
            ("interrogation.offset_threshold_mm", it.offset_threshold_mm),
            ("interrogation.merge_threshold_mm", it.merge_threshold_mm),
            ("force_floor_n", self.force_floor_n),
            ("risk.d_max_mm", self.risk.d_max_mm),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if it.max_fine_iters == 0 || it.max_acquire_steps == 0 {
            return bad("interrogation.max_fine_iters and max_acquire_steps must be at least 1".into());
        }
        if it.press.travel_z <= self.phantom.surface_z {
            return bad("interrogation.press.travel_z must lie above the phantom surface".into());
        }
        let (lo, hi) = self.window;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return bad(format!("window must satisfy 0 < lo < hi, got ({lo}, {hi})"));
        }
        if let Some(d) = self.risk.di_max {
            if !(d > 0.0) {
                return bad(format!("risk.di_max must be positive, got {d}"));
            }
        }
        self.risk_weights().validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.agent.sac.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.agent.env.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.agent.updates_per_step == 0 {
            return bad("agent.updates_per_step must be at least 1".into());
        }
        if !(self.agent.target_jitter_mm >= 0.0 && self.agent.start_height_min.is_finite()) {
            return bad("agent.target_jitter_mm must be non-negative".into());
        }
        let cal = &self.calibration;
        if !(cal.layer_depth_mm >= 0.0 && cal.layer_depth_mm.is_finite()) {
            return bad("calibration.layer_depth_mm must be non-negative".into());
        }
        if cal.sizes_mm.iter().chain(&cal.elasticities_kpa).chain(&cal.forces_n).any(|v| !(*v > 0.0 && v.is_finite())) {
            return bad("calibration sizes, elasticities and forces must be positive".into());
        }
        for t in &self.characterize.targets {
            if !(t.diameter_mm > 0.0 && t.elasticity_kpa > 0.0 && t.layer_depth_mm >= 0.0) {
                return bad(format!("characterize target {:?} has non-positive parameters", t.name));
            }
        }
        Ok(())
    }

    /// Profile geometry with the configured noise levels and no positional
    /// noise; the seed is left at zero.
    pub fn base_sensor(&self) -> SensorConfig {
        let base = match self.sensor.profile {
            Profile::Full => SensorConfig::full(),
            Profile::Reduced => SensorConfig::reduced(),
        };
        SensorConfig {
            force_noise_sd: self.sensor.force_noise_sd,
            intensity_noise_sd: self.sensor.intensity_noise_sd,
            max_force: self.sensor.max_force,
            ..base
        }
    }

    /// Sensor for one randomness consumer, including positional noise.
    pub fn sensor_for(&self, label: &str) -> SensorConfig {
        self.base_sensor()
            .with_position_noise(self.sensor.position_noise_mm)
            .with_seed(derive_seed(self.seed, label))
    }

    pub fn fine_config(&self) -> FineConfig {
        let it = &self.interrogation;
        FineConfig {
            press: it.press.clone(),
            offset_threshold_px: it.offset_threshold_mm / self.base_sensor().mm_per_pixel,
            max_iters: it.max_fine_iters,
        }
    }

    pub fn risk_weights(&self) -> RiskWeights {
        let s = self.base_sensor();
        let mut w = RiskWeights::defaults(self.risk.d_max_mm, s.pixel_count(), self.window);
        w.w1 = self.risk.w1;
        w.w2 = self.risk.w2;
        if let Some(d) = self.risk.di_max {
            w.di_max = d;
        }
        w
    }

    pub fn train_config(&self) -> TrainConfig {
        let a = &self.agent;
        let targets = if a.targets.is_empty() {
            self.phantom.inclusions.iter().map(|i| i.center.xy()).collect()
        } else {
            a.targets.clone()
        };
        TrainConfig {
            episodes: a.episodes,
            sac: a.sac.clone(),
            warmup_steps: a.warmup_steps,
            updates_per_step: a.updates_per_step,
            start_height_min: a.start_height_min,
            targets,
            target_jitter_mm: a.target_jitter_mm,
            seed: derive_seed(self.seed, "agent"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let back = ExperimentConfig::from_json(&c.to_json(), Path::new("x.json")).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.digest(), c.digest());
        let moved = ExperimentConfig { output_dir: "elsewhere".into(), ..c.clone() };
        assert_eq!(moved.digest(), c.digest());
        assert_ne!(ExperimentConfig { seed: 1, ..c.clone() }.digest(), c.digest());
    }

    #[test]
    fn minimal_file_only_needs_a_seed() {
        let c = ExperimentConfig::from_json(r#"{"seed": 7}"#, Path::new("m.json")).unwrap();
        assert_eq!(c, ExperimentConfig { seed: 7, ..ExperimentConfig::default() });
        let e = ExperimentConfig::from_json("{}", Path::new("m.json")).unwrap_err();
        assert!(e.to_string().contains("seed"), "{e}");
        // nested sections may be partial, but not misspelled
        let c = ExperimentConfig::from_json(r#"{"seed": 7, "agent": {"sac": {"batch_size": 8}}}"#, Path::new("m.json"))
            .unwrap();
        assert_eq!(c.agent.sac.batch_size, 8);
        assert_eq!(c.agent.sac.hidden, SacConfig::default().hidden);
        assert!(ExperimentConfig::from_json(r#"{"seed": 7, "agent": {"sac": {"batchsize": 8}}}"#, Path::new("m.json")).is_err());
    }

    #[test]
    fn parse_errors_carry_path_and_line() {
        let e = ExperimentConfig::from_json("{\n\"seed\": 1,\n\"bogus\": 2}", Path::new("cfg.json")).unwrap_err();
        let m = e.to_string();
        assert!(m.contains("cfg.json:3:"), "{m}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let mut c = ExperimentConfig::default();
        c.interrogation.grid_dx_mm = 0.0;
        assert!(matches!(c.validate(), Err(HarnessError::Config(_))));
        let mut c = ExperimentConfig::default();
        c.window = (5.0, 2.0);
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.schema_version = 9;
        assert!(c.validate().is_err());
    }

    #[test]
    fn derived_seeds_differ_by_label_and_seed() {
        assert_eq!(derive_seed(1, "a"), derive_seed(1, "a"));
        assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
        assert_ne!(derive_seed(1, "a"), derive_seed(2, "a"));
    }

    #[test]
    fn fine_threshold_follows_profile() {
        let mut c = ExperimentConfig::default();
        c.sensor.profile = Profile::Full;
        assert!((c.fine_config().offset_threshold_px - 70.0).abs() < 1e-9);
        c.sensor.profile = Profile::Reduced;
        assert!((c.fine_config().offset_threshold_px - 17.5).abs() < 1e-9);
    }

    #[test]
    fn training_targets_default_to_inclusions() {
        let c = ExperimentConfig::default();
        let t = c.train_config().targets;
        assert_eq!(t, vec![Xy::new(44.5, 51.5), Xy::new(40.0, 118.5)]);
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{applied_force, contact_force, render_frame, step_probe};
use super::{PhantomSpec, ProbeState, SensorConfig, SimError, TactileFrame};
use crate::geom::{Vec3, Xy};

/// Height above the surface the probe drops to before a force-controlled
/// press begins.
const HOVER_MM: f64 = 1.0;

/// Stateful simulator: one phantom, one probe, one random stream.
///
/// Not `Sync`; a simulator may be moved between threads but is driven by
/// one at a time.
#[derive(Debug, Clone)]
pub struct TactileSim {
    phantom: PhantomSpec,
    cfg: SensorConfig,
    rng: ChaCha8Rng,
    probe: ProbeState,
    bias: Xy,
    next_frame: u64,
}

impl TactileSim {
    /// Creates the simulator with the probe parked 25 mm above the centre of
    /// the phantom. The per-run positional bias is drawn here.
    pub fn new(phantom: PhantomSpec, cfg: SensorConfig) -> Result<Self, SimError> {
        phantom.validate()?;
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        let b = (cfg.pos_noise_bound - cfg.pos_repeatability.min(cfg.pos_noise_bound)).max(0.0);
        let bias = if b > 0.0 {
            Xy::new(rng.random_range(-b..=b), rng.random_range(-b..=b))
        } else {
            Xy::default()
        };
        let park = Vec3::new(phantom.extent.x / 2.0, phantom.extent.y / 2.0, phantom.surface_z + 25.0);
        let probe = ProbeState { commanded: park, actual: Vec3::new(park.x + bias.x, park.y + bias.y, park.z) };
        Ok(Self { phantom, cfg, rng, probe, bias, next_frame: 0 })
    }

    pub fn phantom(&self) -> &PhantomSpec {
        &self.phantom
    }

    pub fn config(&self) -> &SensorConfig {
        &self.cfg
    }

    pub fn probe(&self) -> &ProbeState {
        &self.probe
    }

    pub fn bias(&self) -> Xy {
        self.bias
    }

    pub fn step(&mut self, delta: Vec3) -> Result<ProbeState, SimError> {
        self.probe = step_probe(&self.probe, delta, self.phantom.extent, &self.cfg, self.bias, &mut self.rng)?;
        Ok(self.probe)
    }

    pub fn move_to(&mut self, target: Vec3) -> Result<ProbeState, SimError> {
        self.step(target - self.probe.commanded)
    }

    /// Lifts the probe vertically to `z` without lateral motion.
    pub fn retract_to(&mut self, z: f64) -> Result<ProbeState, SimError> {
        let c = self.probe.commanded;
        self.move_to(Vec3::new(c.x, c.y, z))
    }

    pub fn read_force(&mut self) -> f64 {
        applied_force(&self.probe, &self.phantom, &self.cfg, &mut self.rng)
    }

    /// Noise-free spring force at the current pose.
    pub fn true_force(&self) -> f64 {
        contact_force(&self.probe, &self.phantom, &self.cfg)
    }

    pub fn capture(&mut self) -> TactileFrame {
        let mut f = render_frame(&self.probe, &self.phantom, &self.cfg, &mut self.rng);
        f.frame_index = self.next_frame;
        self.next_frame += 1;
        f
    }

    /// Scripted force-controlled press at the current XY: drop to just
    /// above the surface, then descend in `step_mm` increments until the
    /// sensor reads at least `target` N or the indentation reaches
    /// `max_depth_mm`. Returns the last force reading.
    pub fn press_to(&mut self, target: f64, step_mm: f64, max_depth_mm: f64) -> Result<f64, SimError> {
        let surface = self.phantom.surface_z;
        if self.probe.commanded.z > surface + HOVER_MM {
            self.retract_to(surface + HOVER_MM)?;
        }
        let mut f = self.read_force();
        while f < target && self.probe.commanded.z - step_mm >= surface - max_depth_mm {
            self.step(Vec3::new(0.0, 0.0, -step_mm))?;
            f = self.read_force();
        }
        Ok(f)
    }
}

use serde::{Deserialize, Serialize};

use super::{Action, AgentError};
use crate::geom::{Vec3, Xy};
use crate::sim::{TactileFrame, TactileSim};

/// Box used to map positions into [-1, 1]^3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObsBounds {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl Default for ObsBounds {
    fn default() -> Self {
        Self { lo: Vec3::new(0.0, 0.0, -1.0), hi: Vec3::new(1.0, 1.0, 1.0) }
    }
}

impl ObsBounds {
    pub fn normalize(&self, p: Vec3) -> [f64; 3] {
        let n = |v: f64, lo: f64, hi: f64| 2.0 * (v - lo) / (hi - lo) - 1.0;
        [n(p.x, self.lo.x, self.hi.x), n(p.y, self.lo.y, self.hi.y), n(p.z, self.lo.z, self.hi.z)]
    }

    pub fn denormalize(&self, q: [f64; 3]) -> Vec3 {
        let d = |v: f64, lo: f64, hi: f64| lo + (v + 1.0) * (hi - lo) / 2.0;
        Vec3::new(d(q[0], self.lo.x, self.hi.x), d(q[1], self.lo.y, self.hi.y), d(q[2], self.lo.z, self.hi.z))
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if self.hi.x > self.lo.x && self.hi.y > self.lo.y && self.hi.z > self.lo.z && self.lo.is_finite() && self.hi.is_finite() {
            Ok(())
        } else {
            Err(AgentError::InvalidConfig(format!("degenerate observation bounds {self:?}")))
        }
    }
}

/// End-effector position and its network-facing normalised copy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvObservation {
    pub position: Vec3,
    pub normalized: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Z displacement per action, mm.
    pub step_mm: f64,
    /// Reset height above the phantom surface, mm.
    pub z_start: f64,
    /// Lowest reachable height relative to the surface, mm.
    pub z_floor: f64,
    pub max_steps: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { step_mm: 1.0, z_start: 25.0, z_floor: -15.0, max_steps: 100 }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if !(self.step_mm > 0.0 && self.z_start > self.z_floor && self.max_steps > 0) {
            return Err(AgentError::InvalidConfig(format!(
                "need step_mm > 0, z_start > z_floor and max_steps > 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub obs: EnvObservation,
    pub reward: f64,
    /// Safety stop: the force limit was exceeded.
    pub done: bool,
    /// Step budget used up.
    pub truncated: bool,
    pub frame: TactileFrame,
}

/// Z-axis pressing task over a fixed XY location of a simulated phantom.
#[derive(Debug, Clone)]
pub struct TactileEnv {
    sim: TactileSim,
    cfg: EnvConfig,
    target: Xy,
    bounds: ObsBounds,
    steps: usize,
}

impl TactileEnv {
    pub fn new(sim: TactileSim, target: Xy, cfg: EnvConfig) -> Result<Self, AgentError> {
        cfg.validate()?;
        if !sim.phantom().contains_xy(target) {
            return Err(AgentError::InvalidConfig(format!("target {target:?} outside the phantom")));
        }
        let sf = sim.phantom().surface_z;
        let e = sim.phantom().extent;
        let bounds = ObsBounds { lo: Vec3::new(0.0, 0.0, sf + cfg.z_floor), hi: Vec3::new(e.x, e.y, sf + cfg.z_start) };
        Ok(Self { sim, cfg, target, bounds, steps: 0 })
    }

    pub fn sim(&self) -> &TactileSim {
        &self.sim
    }

    pub fn sim_mut(&mut self) -> &mut TactileSim {
        &mut self.sim
    }

    pub fn into_sim(self) -> TactileSim {
        self.sim
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn target(&self) -> Xy {
        self.target
    }

    pub fn set_target(&mut self, target: Xy) {
        self.target = target;
    }

    /// Bounds covering the phantom extent and the reachable Z range.
    pub fn obs_bounds(&self) -> ObsBounds {
        self.bounds
    }

    fn observe(&self) -> EnvObservation {
        let p = self.sim.probe().commanded;
        EnvObservation { position: p, normalized: self.bounds.normalize(p) }
    }

    /// Lifts the probe, moves over the target and descends to `height` mm
    /// above the surface.
    pub fn reset(&mut self, height: f64) -> Result<EnvObservation, AgentError> {
        let s = self.sim.phantom().surface_z;
        let h = height.clamp(self.cfg.z_floor, self.cfg.z_start);
        self.sim.retract_to(s + self.cfg.z_start)?;
        self.sim.move_to(self.target.with_z(s + self.cfg.z_start))?;
        self.sim.move_to(self.target.with_z(s + h))?;
        self.steps = 0;
        Ok(self.observe())
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult, AgentError> {
        let s = self.sim.phantom().surface_z;
        let z = self.sim.probe().commanded.z;
        let dz = match action {
            Action::Up => self.cfg.step_mm.min(s + self.cfg.z_start - z),
            Action::Down => -self.cfg.step_mm.min(z - (s + self.cfg.z_floor)),
        };
        self.sim.step(Vec3::new(0.0, 0.0, dz))?;
        self.steps += 1;
        let frame = self.sim.capture();
        let done = frame.applied_force > self.sim.config().max_force;
        let reward = if done { 0.0 } else { frame.pixel_sum() as f64 / (frame.width * frame.height) as f64 };
        Ok(StepResult {
            obs: self.observe(),
            reward,
            done,
            truncated: !done && self.steps >= self.cfg.max_steps,
            frame,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{PhantomSpec, SensorConfig, HARD_DIAMETER, HARD_ELASTICITY};
    use proptest::prelude::*;

    fn env() -> TactileEnv {
        let sim = TactileSim::new(
            PhantomSpec::single_inclusion(HARD_DIAMETER, HARD_ELASTICITY, 6.0),
            SensorConfig::reduced().with_seed(1),
        )
        .unwrap();
        TactileEnv::new(sim, Xy::new(50.0, 50.0), EnvConfig::default()).unwrap()
    }

    #[test]
    fn pressing_down_ends_on_safety_stop() {
        let mut e = env();
        let o = e.reset(25.0).unwrap();
        assert_eq!(o.normalized[2], 1.0);
        let mut last = None;
        for _ in 0..60 {
            let r = e.step(Action::Down).unwrap();
            let stop = r.done;
            last = Some(r);
            if stop {
                break;
            }
        }
        let r = last.unwrap();
        assert!(r.done && r.reward == 0.0 && r.frame.applied_force > 10.0);
        assert!(r.frame.applied_force < 10.0 + 1.6);
    }

    #[test]
    fn up_is_capped_at_start_height() {
        let mut e = env();
        e.reset(25.0).unwrap();
        let r = e.step(Action::Up).unwrap();
        assert_eq!(r.obs.position.z, 25.0);
        assert!(r.reward < 2.0);
    }

    #[test]
    fn truncates_at_budget() {
        let sim = TactileSim::new(PhantomSpec::single_inclusion(HARD_DIAMETER, HARD_ELASTICITY, 6.0), SensorConfig::reduced()).unwrap();
        let mut e = TactileEnv::new(sim, Xy::new(50.0, 50.0), EnvConfig { max_steps: 3, ..EnvConfig::default() }).unwrap();
        e.reset(25.0).unwrap();
        let flags: Vec<bool> = (0..3).map(|_| e.step(Action::Up).unwrap().truncated).collect();
        assert_eq!(flags, vec![false, false, true]);
    }

    proptest! {
        #[test]
        fn normalisation_inverts(x in 0.0f64..100.0, y in 0.0f64..100.0, z in -15.0f64..25.0) {
            let b = ObsBounds { lo: Vec3::new(0.0, 0.0, -15.0), hi: Vec3::new(100.0, 100.0, 25.0) };
            let p = Vec3::new(x, y, z);
            let q = b.normalize(p);
            prop_assert!(q.iter().all(|v| (-1.0..=1.0).contains(v)));
            let back = b.denormalize(q);
            prop_assert!((back - p).xy().distance(&Xy::default()) < 1e-9 && (back.z - z).abs() < 1e-9);
        }
    }
}

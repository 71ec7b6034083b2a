//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tactile_core::agent::{Action, Transition};
use tactile_core::sim::{PhantomSpec, SensorConfig, TactileFrame, TactileSim};
use tactile_core::Xy;

/// Simulator pressed to 5 N over the hard inclusion of the dual phantom.
pub fn pressed_sim(cfg: SensorConfig) -> TactileSim {
    let mut sim = TactileSim::new(PhantomSpec::dual_inclusion(), cfg.with_seed(1)).expect("valid fixture");
    sim.move_to(Xy::new(44.5, 51.5).with_z(5.0)).expect("inside ROI");
    sim.press_to(5.0, 0.05, 15.0).expect("press");
    sim
}

pub fn pressed_frame(cfg: SensorConfig) -> TactileFrame {
    pressed_sim(cfg).capture()
}

pub fn random_batch(n: usize, seed: u64) -> Vec<Transition> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut v = || [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let (obs, next_obs) = (v(), v());
            Transition {
                obs,
                next_obs,
                action: if rng.random::<bool>() { Action::Up } else { Action::Down },
                reward: rng.random_range(0.0..5.0),
                done: rng.random::<f64>() < 0.1,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_usable() {
        let f = pressed_frame(SensorConfig::reduced());
        assert!(f.applied_force > 4.0);
        assert_eq!(random_batch(8, 0).len(), 8);
    }
}

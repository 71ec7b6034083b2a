use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{update_step, Action, AgentError, AgentModel, ReplayBuffer, SacConfig, TactileEnv, Transition};
use crate::geom::Xy;
use crate::sim::TactileFrame;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub episodes: usize,
    pub sac: SacConfig,
    /// Steps of uniformly random actions before learning starts.
    pub warmup_steps: usize,
    /// Gradient updates per environment step once learning has started.
    pub updates_per_step: usize,
    /// Episode start heights are drawn on the step grid from this height up
    /// to the environment's start height, mm above the surface.
    pub start_height_min: f64,
    /// Locations trained over; empty means the environment's target.
    pub targets: Vec<Xy>,
    /// Uniform XY jitter applied to the chosen target each episode, mm.
    pub target_jitter_mm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 300,
            sac: SacConfig::default(),
            warmup_steps: 500,
            updates_per_step: 1,
            start_height_min: 1.0,
            targets: Vec::new(),
            target_jitter_mm: 8.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub steps: usize,
    pub cumulative_reward: f64,
}

/// Trains a fresh model on `env`. The environment's simulator keeps its own
/// random stream; the agent's stream is seeded from `cfg.seed`.
pub fn train(env: &mut TactileEnv, cfg: &TrainConfig) -> Result<(AgentModel, Vec<EpisodeRecord>), AgentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bounds = env.obs_bounds();
    let mut model = AgentModel::new(cfg.sac.clone(), bounds, &mut rng)?;
    let mut buffer = ReplayBuffer::new(cfg.sac.buffer_capacity);
    let targets = if cfg.targets.is_empty() { vec![env.target()] } else { cfg.targets.clone() };
    let extent = env.sim().phantom().extent;
    let (step, top) = (env.config().step_mm, env.config().z_start);
    let levels = ((top - cfg.start_height_min.min(top)) / step).floor() as usize;
    let mut trace = Vec::with_capacity(cfg.episodes);
    let mut total = 0usize;
    for episode in 0..cfg.episodes {
        let base = targets[rng.random_range(0..targets.len())];
        let j = cfg.target_jitter_mm;
        let target = if j > 0.0 {
            Xy::new(
                (base.x + rng.random_range(-j..=j)).clamp(0.0, extent.x),
                (base.y + rng.random_range(-j..=j)).clamp(0.0, extent.y),
            )
        } else {
            base
        };
        env.set_target(target);
        let height = top - step * rng.random_range(0..=levels) as f64;
        let mut obs = bounds.normalize(env.reset(height)?.position);
        let (mut steps, mut cum) = (0, 0.0);
        loop {
            let action = if total < cfg.warmup_steps {
                if rng.random::<bool>() {
                    Action::Up
                } else {
                    Action::Down
                }
            } else {
                model.sample_action(&obs, &mut rng)
            };
            let r = env.step(action)?;
            let next = bounds.normalize(r.obs.position);
            buffer.push(Transition { obs, action, reward: r.reward, next_obs: next, done: r.done });
            cum += r.reward;
            steps += 1;
            total += 1;
            if total >= cfg.warmup_steps && buffer.len() >= cfg.sac.batch_size {
                for _ in 0..cfg.updates_per_step {
                    let batch = buffer.sample(&mut rng, cfg.sac.batch_size);
                    update_step(&mut model, &batch)?;
                }
            }
            obs = next;
            if r.done || r.truncated {
                break;
            }
        }
        trace.push(EpisodeRecord { episode, steps, cumulative_reward: cum });
    }
    Ok((model, trace))
}

/// CSV with columns episode, steps, cumulative_reward.
pub fn write_reward_trace(path: &Path, trace: &[EpisodeRecord]) -> std::io::Result<()> {
    let mut out = Vec::new();
    writeln!(out, "episode,steps,cumulative_reward")?;
    for r in trace {
        writeln!(out, "{},{},{}", r.episode, r.steps, r.cumulative_reward)?;
    }
    std::fs::write(path, out)
}

#[derive(Debug, Clone)]
pub struct Acquisition {
    /// Frames whose force fell inside the window, in capture order.
    pub frames: Vec<TactileFrame>,
    /// Environment steps taken.
    pub steps: usize,
    /// Largest force read during the press, N.
    pub peak_force: f64,
}

/// Presses with the greedy policy from the reset height over the
/// environment's target and records the in-window frames. The press ends at
/// the first upward action after recording has begun, at the safety stop, or
/// after `max_steps`.
pub fn acquire_sequence(
    env: &mut TactileEnv,
    model: &AgentModel,
    window: (f64, f64),
    max_steps: usize,
) -> Result<Acquisition, AgentError> {
    let top = env.config().z_start;
    let mut pos = env.reset(top)?.position;
    let mut frames = Vec::new();
    let mut peak: f64 = 0.0;
    let mut steps = 0;
    while steps < max_steps {
        let a = model.greedy_action(&model.obs_bounds.normalize(pos));
        if a == Action::Up && !frames.is_empty() {
            break;
        }
        let r = env.step(a)?;
        steps += 1;
        peak = peak.max(r.frame.applied_force);
        if r.done {
            break;
        }
        let f = r.frame.applied_force;
        if f >= window.0 && f <= window.1 {
            frames.push(r.frame);
        }
        pos = r.obs.position;
    }
    let surface = env.sim().phantom().surface_z;
    env.sim_mut().retract_to(surface + top)?;
    if frames.is_empty() {
        return Err(AgentError::NoContact { lo: window.0, hi: window.1, steps });
    }
    Ok(Acquisition { frames, steps, peak_force: peak })
}

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Adam, Mlp};
use super::replay::Transition;
use super::{Action, AgentError, ObsBounds};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacConfig {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Entropy the temperature is tuned towards, nats.
    pub target_entropy: f64,
    pub initial_alpha: f64,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            gamma: 0.99,
            tau: 0.005,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            alpha_lr: 3e-4,
            batch_size: 64,
            buffer_capacity: 50_000,
            target_entropy: 0.5 * std::f64::consts::LN_2,
            initial_alpha: 1.0,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: String| Err(AgentError::InvalidConfig(m));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad(format!("hidden layer sizes must be positive, got {:?}", self.hidden));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau {} outside (0, 1]", self.tau));
        }
        if ![self.actor_lr, self.critic_lr, self.alpha_lr, self.initial_alpha].iter().all(|&v| v > 0.0 && v.is_finite()) {
            return bad("learning rates and initial alpha must be positive".into());
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad(format!("need 0 < batch_size ({}) <= buffer_capacity ({})", self.batch_size, self.buffer_capacity));
        }
        if !(self.target_entropy.is_finite() && self.target_entropy <= std::f64::consts::LN_2) {
            return bad(format!("target entropy {} must be finite and at most ln 2", self.target_entropy));
        }
        Ok(())
    }

    fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![3];
        s.extend(&self.hidden);
        s.push(2);
        s
    }
}

/// Actor, twin critics with their targets, temperature and optimiser state.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentModel {
    pub cfg: SacConfig,
    pub obs_bounds: ObsBounds,
    pub actor: Mlp,
    pub q1: Mlp,
    pub q2: Mlp,
    pub q1_target: Mlp,
    pub q2_target: Mlp,
    pub log_alpha: f64,
    opt: Optimizers,
}

#[derive(Debug, Clone, PartialEq)]
struct Optimizers {
    actor: Adam,
    q1: Adam,
    q2: Adam,
    alpha: Adam,
}

impl Optimizers {
    fn new(cfg: &SacConfig, actor: &Mlp, q: &Mlp) -> Self {
        Self {
            actor: Adam::new(actor.n_params(), cfg.actor_lr),
            q1: Adam::new(q.n_params(), cfg.critic_lr),
            q2: Adam::new(q.n_params(), cfg.critic_lr),
            alpha: Adam::new(1, cfg.alpha_lr),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha_loss: f64,
    pub alpha: f64,
    pub entropy: f64,
}

impl AgentModel {
    /// Fresh model; the actor's output layer starts at zero so the initial
    /// policy is uniform.
    pub fn new<R: Rng + ?Sized>(cfg: SacConfig, obs_bounds: ObsBounds, rng: &mut R) -> Result<Self, AgentError> {
        cfg.validate()?;
        let sizes = cfg.layer_sizes();
        let mut actor = Mlp::new(&sizes, rng);
        actor.zero_output_layer();
        let q1 = Mlp::new(&sizes, rng);
        let q2 = Mlp::new(&sizes, rng);
        let log_alpha = cfg.initial_alpha.ln();
        Ok(Self::from_parts(cfg, obs_bounds, actor, q1.clone(), q2.clone(), q1, q2, log_alpha))
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        cfg: SacConfig,
        obs_bounds: ObsBounds,
        actor: Mlp,
        q1: Mlp,
        q2: Mlp,
        q1_target: Mlp,
        q2_target: Mlp,
        log_alpha: f64,
    ) -> Self {
        let opt = Optimizers::new(&cfg, &actor, &q1);
        Self { cfg, obs_bounds, actor, q1, q2, q1_target, q2_target, log_alpha, opt }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    /// Greedy action: the more probable one, UP on ties.
    pub fn greedy_action(&self, obs: &[f64; 3]) -> Action {
        let p = policy_distribution(self, obs);
        if p[1] > p[0] {
            Action::Down
        } else {
            Action::Up
        }
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, obs: &[f64; 3], rng: &mut R) -> Action {
        let p = policy_distribution(self, obs);
        if rng.random::<f64>() < p[0] {
            Action::Up
        } else {
            Action::Down
        }
    }
}

/// Numerically stable softmax and log-softmax of two logits.
pub fn softmax2(z: &[f64]) -> ([f64; 2], [f64; 2]) {
    let m = z[0].max(z[1]);
    let e = [(z[0] - m).exp(), (z[1] - m).exp()];
    let s = e[0] + e[1];
    let lse = m + s.ln();
    ([e[0] / s, e[1] / s], [z[0] - lse, z[1] - lse])
}

/// (p_up, p_down) for a normalised observation.
pub fn policy_distribution(model: &AgentModel, obs: &[f64; 3]) -> [f64; 2] {
    softmax2(&model.actor.forward(obs)).0
}

pub fn entropy(p: &[f64; 2], logp: &[f64; 2]) -> f64 {
    -(p[0] * logp[0] + p[1] * logp[1])
}

/// Soft Bellman targets using the target critics and the current actor.
pub fn critic_targets(model: &AgentModel, batch: &[Transition]) -> Vec<f64> {
    let alpha = model.alpha();
    batch
        .iter()
        .map(|t| {
            if t.done || model.cfg.gamma == 0.0 {
                return t.reward;
            }
            let (p, logp) = softmax2(&model.actor.forward(&t.next_obs));
            let a = model.q1_target.forward(&t.next_obs);
            let b = model.q2_target.forward(&t.next_obs);
            let v: f64 = (0..2).map(|k| p[k] * (a[k].min(b[k]) - alpha * logp[k])).sum();
            t.reward + model.cfg.gamma * v
        })
        .collect()
}

/// Mean squared error of Q(s, a) against `targets`, with its gradient.
pub fn critic_loss_grad(critic: &Mlp, batch: &[Transition], targets: &[f64]) -> (f64, Vec<f64>) {
    let n = batch.len() as f64;
    let mut grad = vec![0.0; critic.n_params()];
    let mut loss = 0.0;
    for (t, y) in batch.iter().zip(targets) {
        let cache = critic.forward_cached(&t.obs);
        let a = t.action.index();
        let err = cache.output()[a] - y;
        loss += err * err / n;
        let mut g = [0.0; 2];
        g[a] = 2.0 * err / n;
        critic.backward(&cache, &g, &mut grad);
    }
    (loss, grad)
}

/// Mean over the batch of sum_a pi(a|s) (alpha ln pi(a|s) - min Q(s, a)),
/// with its gradient in the actor's parameters. Also returns the mean
/// policy entropy.
pub fn actor_loss_grad(actor: &Mlp, q1: &Mlp, q2: &Mlp, alpha: f64, batch: &[Transition]) -> (f64, Vec<f64>, f64) {
    let n = batch.len() as f64;
    let mut grad = vec![0.0; actor.n_params()];
    let (mut loss, mut ent) = (0.0, 0.0);
    for t in batch {
        let cache = actor.forward_cached(&t.obs);
        let (p, logp) = softmax2(cache.output());
        let (a, b) = (q1.forward(&t.obs), q2.forward(&t.obs));
        let g = [alpha * logp[0] - a[0].min(b[0]), alpha * logp[1] - a[1].min(b[1])];
        let mean_g = p[0] * g[0] + p[1] * g[1];
        loss += mean_g / n;
        ent += entropy(&p, &logp) / n;
        let dz = [p[0] * (g[0] - mean_g) / n, p[1] * (g[1] - mean_g) / n];
        actor.backward(&cache, &dz, &mut grad);
    }
    (loss, grad, ent)
}

/// alpha * (H - target_entropy) averaged over the batch, and its derivative
/// in log alpha.
pub fn alpha_loss_grad(log_alpha: f64, actor: &Mlp, batch: &[Transition], target_entropy: f64) -> (f64, f64) {
    let n = batch.len() as f64;
    let gap: f64 = batch
        .iter()
        .map(|t| {
            let (p, logp) = softmax2(&actor.forward(&t.obs));
            entropy(&p, &logp) - target_entropy
        })
        .sum::<f64>()
        / n;
    let alpha = log_alpha.exp();
    (alpha * gap, alpha * gap)
}

/// target <- (1 - tau) target + tau online.
pub fn polyak(target: &mut Mlp, online: &Mlp, tau: f64) {
    for (t, o) in target.params_mut().iter_mut().zip(online.params()) {
        *t = (1.0 - tau) * *t + tau * o;
    }
}

fn finite(name: &'static str, v: f64) -> Result<f64, AgentError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(AgentError::NonFiniteLoss { loss: name, value: v })
    }
}

/// One gradient step on both critics, the actor and the temperature,
/// followed by Polyak averaging of the target critics.
pub fn update_step(model: &mut AgentModel, batch: &[Transition]) -> Result<LossReport, AgentError> {
    if batch.is_empty() {
        return Err(AgentError::InvalidConfig("empty batch".into()));
    }
    let y = critic_targets(model, batch);
    let (l1, g1) = critic_loss_grad(&model.q1, batch, &y);
    let (l2, g2) = critic_loss_grad(&model.q2, batch, &y);
    let critic_loss = finite("critic", 0.5 * (l1 + l2))?;
    if !g1.iter().chain(&g2).all(|g| g.is_finite()) {
        return Err(AgentError::NonFiniteLoss { loss: "critic gradient", value: f64::NAN });
    }
    model.opt.q1.step(model.q1.params_mut(), &g1);
    model.opt.q2.step(model.q2.params_mut(), &g2);

    let alpha = model.alpha();
    let (actor_loss, ga, ent) = actor_loss_grad(&model.actor, &model.q1, &model.q2, alpha, batch);
    let actor_loss = finite("actor", actor_loss)?;
    let gl = alpha * (ent - model.cfg.target_entropy);
    let alpha_loss = finite("alpha", gl)?;
    model.opt.actor.step(model.actor.params_mut(), &ga);
    let mut la = [model.log_alpha];
    model.opt.alpha.step(&mut la, &[gl]);
    model.log_alpha = la[0];

    polyak(&mut model.q1_target, &model.q1, model.cfg.tau);
    polyak(&mut model.q2_target, &model.q2, model.cfg.tau);
    Ok(LossReport { critic_loss, actor_loss, alpha_loss, alpha: model.alpha(), entropy: ent })
}

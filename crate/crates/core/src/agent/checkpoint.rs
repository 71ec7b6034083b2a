//! Binary checkpoint: magic, format version, hyperparameters, observation
//! bounds, temperature, then five networks (actor, Q1, Q2 and their two
//! targets) as layer sizes followed by little-endian f64 parameters.
//! Optimiser state is not stored.

use std::path::Path;

use super::{AgentError, AgentModel, Mlp, ObsBounds, SacConfig};
use crate::geom::Vec3;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TSAC";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_u32(b: &mut Vec<u8>, v: u32) {
    b.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(b: &mut Vec<u8>, v: u64) {
    b.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(b: &mut Vec<u8>, v: f64) {
    b.extend_from_slice(&v.to_le_bytes());
}

fn put_net(b: &mut Vec<u8>, m: &Mlp) {
    put_u32(b, m.sizes().len() as u32);
    for &s in m.sizes() {
        put_u32(b, s as u32);
    }
    put_u64(b, m.n_params() as u64);
    for &p in m.params() {
        put_f64(b, p);
    }
}

pub fn encode(model: &AgentModel) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut b, CHECKPOINT_VERSION);
    let c = &model.cfg;
    put_u32(&mut b, c.hidden.len() as u32);
    for &h in &c.hidden {
        put_u32(&mut b, h as u32);
    }
    for v in [c.gamma, c.tau, c.actor_lr, c.critic_lr, c.alpha_lr] {
        put_f64(&mut b, v);
    }
    put_u64(&mut b, c.batch_size as u64);
    put_u64(&mut b, c.buffer_capacity as u64);
    put_f64(&mut b, c.target_entropy);
    put_f64(&mut b, c.initial_alpha);
    let o = &model.obs_bounds;
    for v in [o.lo.x, o.lo.y, o.lo.z, o.hi.x, o.hi.y, o.hi.z] {
        put_f64(&mut b, v);
    }
    put_f64(&mut b, model.log_alpha);
    for net in [&model.actor, &model.q1, &model.q2, &model.q1_target, &model.q2_target] {
        put_net(&mut b, net);
    }
    b
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], AgentError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len()).ok_or_else(|| {
            AgentError::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, AgentError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, AgentError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, AgentError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn count(&mut self, what: &str, max: u64) -> Result<usize, AgentError> {
        let n = self.u64()?;
        if n > max {
            return Err(AgentError::Checkpoint(format!("implausible {what} count {n}")));
        }
        Ok(n as usize)
    }

    fn net(&mut self) -> Result<Mlp, AgentError> {
        let k = self.u32()? as usize;
        if !(2..=16).contains(&k) {
            return Err(AgentError::Checkpoint(format!("implausible layer count {k}")));
        }
        let sizes = (0..k).map(|_| self.u32().map(|s| s as usize)).collect::<Result<Vec<_>, _>>()?;
        let n = self.count("parameter", (self.data.len() / 8) as u64)?;
        let params = (0..n).map(|_| self.f64()).collect::<Result<Vec<_>, _>>()?;
        Mlp::from_params(&sizes, params)
            .ok_or_else(|| AgentError::Checkpoint(format!("parameter count does not match layers {sizes:?}")))
    }
}

pub fn decode(data: &[u8]) -> Result<AgentModel, AgentError> {
    let mut r = Reader { data, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(AgentError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(AgentError::Checkpoint(format!("unsupported version {version}")));
    }
    let nh = r.u32()? as usize;
    if nh > 16 {
        return Err(AgentError::Checkpoint(format!("implausible hidden layer count {nh}")));
    }
    let hidden = (0..nh).map(|_| r.u32().map(|s| s as usize)).collect::<Result<Vec<_>, _>>()?;
    let (gamma, tau, actor_lr, critic_lr, alpha_lr) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?, r.f64()?);
    let batch_size = r.u64()? as usize;
    let buffer_capacity = r.u64()? as usize;
    let (target_entropy, initial_alpha) = (r.f64()?, r.f64()?);
    let cfg = SacConfig {
        hidden,
        gamma,
        tau,
        actor_lr,
        critic_lr,
        alpha_lr,
        batch_size,
        buffer_capacity,
        target_entropy,
        initial_alpha,
    };
    cfg.validate().map_err(|e| AgentError::Checkpoint(e.to_string()))?;
    let v: Vec<f64> = (0..6).map(|_| r.f64()).collect::<Result<_, _>>()?;
    let obs_bounds = ObsBounds { lo: Vec3::new(v[0], v[1], v[2]), hi: Vec3::new(v[3], v[4], v[5]) };
    obs_bounds.validate().map_err(|e| AgentError::Checkpoint(e.to_string()))?;
    let log_alpha = r.f64()?;
    let nets = (0..5).map(|_| r.net()).collect::<Result<Vec<_>, _>>()?;
    if r.pos != data.len() {
        return Err(AgentError::Checkpoint(format!("{} trailing bytes", data.len() - r.pos)));
    }
    let mut it = nets.into_iter();
    let mut next = || it.next().expect("five networks");
    let (actor, q1, q2, q1t, q2t) = (next(), next(), next(), next(), next());
    let expect = {
        let mut s = vec![3];
        s.extend(&cfg.hidden);
        s.push(2);
        s
    };
    if [&actor, &q1, &q2, &q1t, &q2t].iter().any(|n| n.sizes() != expect.as_slice()) {
        return Err(AgentError::Checkpoint(format!("network shapes differ from {expect:?}")));
    }
    Ok(AgentModel::from_parts(cfg, obs_bounds, actor, q1, q2, q1t, q2t, log_alpha))
}

pub fn save_checkpoint(path: &Path, model: &AgentModel) -> Result<(), AgentError> {
    std::fs::write(path, encode(model)).map_err(|e| AgentError::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint(path: &Path) -> Result<AgentModel, AgentError> {
    let data = std::fs::read(path).map_err(|e| AgentError::Checkpoint(format!("{}: {e}", path.display())))?;
    decode(&data).map_err(|e| match e {
        AgentError::Checkpoint(m) => AgentError::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> AgentModel {
        let cfg = SacConfig { hidden: vec![5, 3], ..SacConfig::default() };
        let mut m = AgentModel::new(cfg, ObsBounds::default(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        m.log_alpha = -1.25;
        m
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tsac");
        let m = model();
        save_checkpoint(&path, &m).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(encode(&back), encode(&m));
        assert_eq!(back.actor, m.actor);
        assert_eq!(back.log_alpha, -1.25);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = encode(&model());
        assert!(decode(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(decode(&v2).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode(&extra).is_err());
    }
}

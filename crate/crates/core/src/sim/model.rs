use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{InclusionSpec, PhantomSpec, ProbeState, SensorConfig, SimError, TactileFrame, SENSOR_RANGE_N};
use crate::geom::{Vec3, Xy};

/// Grid resolution used to estimate how much of the footprint an inclusion
/// covers.
const FOOTPRINT_SAMPLES: (usize, usize) = (32, 26);

/// Saturating stiffness contrast E / (E + E_background), in (0, 1).
pub fn stiffness_contrast(elasticity: f64, background: f64) -> f64 {
    elasticity / (elasticity + background)
}

fn attenuation(phantom: &PhantomSpec, inc: &InclusionSpec, cfg: &SensorConfig) -> f64 {
    (-phantom.attenuation_depth(inc) / cfg.intensity.depth_decay_mm).exp()
}

/// Fraction of the sensing window, centred at `at`, covered by the
/// inclusion's horizontal cross-section.
fn footprint_overlap(at: Xy, inc: &InclusionSpec, cfg: &SensorConfig) -> f64 {
    let win = cfg.window_mm();
    let (nx, ny) = FOOTPRINT_SAMPLES;
    let r2 = (inc.diameter / 2.0).powi(2);
    let mut inside = 0usize;
    for j in 0..ny {
        let y = at.y + ((j as f64 + 0.5) / ny as f64 - 0.5) * win.y;
        let dy = y - inc.center.y;
        for i in 0..nx {
            let x = at.x + ((i as f64 + 0.5) / nx as f64 - 0.5) * win.x;
            let dx = x - inc.center.x;
            if dx * dx + dy * dy <= r2 {
                inside += 1;
            }
        }
    }
    inside as f64 / (nx * ny) as f64
}

/// Contact spring rate (N/mm) for a probe whose window is centred at `at`.
pub fn effective_stiffness(at: Xy, phantom: &PhantomSpec, cfg: &SensorConfig) -> f64 {
    let c = &cfg.contact;
    phantom.inclusions.iter().fold(c.background_rate, |k, inc| {
        let w = footprint_overlap(at, inc, cfg);
        k + w * c.inclusion_rate_per_kpa * inc.elasticity * attenuation(phantom, inc, cfg)
    })
}

/// Noise-free normal force, clamped to the sensor range.
pub fn contact_force(probe: &ProbeState, phantom: &PhantomSpec, cfg: &SensorConfig) -> f64 {
    let depth = probe.contact_depth(phantom.surface_z);
    if depth <= 0.0 {
        return 0.0;
    }
    (effective_stiffness(probe.actual.xy(), phantom, cfg) * depth).clamp(0.0, SENSOR_RANGE_N)
}

/// Force as read by the sensor: spring force plus Gaussian noise, clamped
/// to [0, 50] N.
pub fn applied_force<R: Rng + ?Sized>(
    probe: &ProbeState,
    phantom: &PhantomSpec,
    cfg: &SensorConfig,
    rng: &mut R,
) -> f64 {
    let f = contact_force(probe, phantom, cfg);
    let noise = if cfg.force_noise_sd > 0.0 {
        Normal::new(0.0, cfg.force_noise_sd).expect("validated sd").sample(rng)
    } else {
        0.0
    };
    (f + noise).clamp(0.0, SENSOR_RANGE_N)
}

/// Renders the tactile image seen at `probe` and reads the force sensor.
/// The returned frame has `frame_index` 0; [`TactileSim`](super::TactileSim)
/// numbers its frames.
pub fn render_frame<R: Rng + ?Sized>(
    probe: &ProbeState,
    phantom: &PhantomSpec,
    cfg: &SensorConfig,
    rng: &mut R,
) -> TactileFrame {
    let force = contact_force(probe, phantom, cfg);
    let measured = applied_force(probe, phantom, cfg, rng);
    let (w, h) = (cfg.width, cfg.height);
    let mut signal = vec![0.0f64; w * h];
    if force > 0.0 {
        accumulate_bumps(&mut signal, probe.actual.xy(), force, phantom, cfg);
    }
    let noise = (cfg.intensity_noise_sd > 0.0)
        .then(|| Normal::new(0.0, cfg.intensity_noise_sd).expect("validated sd"));
    let pixels = signal
        .into_iter()
        .map(|s| {
            let n = noise.as_ref().map_or(0.0, |d| d.sample(rng));
            (s + n).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    TactileFrame { width: w, height: h, pixels, applied_force: measured, probe_pose: probe.commanded, frame_index: 0 }
}

fn accumulate_bumps(signal: &mut [f64], at: Xy, force: f64, phantom: &PhantomSpec, cfg: &SensorConfig) {
    let im = &cfg.intensity;
    let (w, h) = (cfg.width, cfg.height);
    let (cu, cv) = cfg.image_center();
    for inc in &phantom.inclusions {
        let amp = im.gain
            * force
            * stiffness_contrast(inc.elasticity, phantom.background_stiffness)
            * attenuation(phantom, inc, cfg)
            * (inc.diameter / im.size_ref_mm).powf(im.size_exponent);
        if amp <= 0.0 {
            continue;
        }
        let sigma = im.width_factor * inc.diameter / cfg.mm_per_pixel;
        // bump centre in pixel coordinates
        let bu = cu + (inc.center.x - at.x) / cfg.mm_per_pixel;
        let bv = cv + (inc.center.y - at.y) / cfg.mm_per_pixel;
        // beyond this radius the bump is below 1e-4 counts
        let reach = sigma * (2.0 * (amp / 1e-4).max(1.0).ln()).sqrt();
        let u0 = (bu - reach).floor().max(0.0) as usize;
        let u1 = ((bu + reach).ceil().min(w as f64 - 1.0)).max(-1.0);
        let v0 = (bv - reach).floor().max(0.0) as usize;
        let v1 = ((bv + reach).ceil().min(h as f64 - 1.0)).max(-1.0);
        if u1 < 0.0 || v1 < 0.0 || u0 >= w || v0 >= h {
            continue;
        }
        let (u1, v1) = (u1 as usize, v1 as usize);
        let inv = 1.0 / (2.0 * sigma * sigma);
        let ex: Vec<f64> = (u0..=u1).map(|u| (-(u as f64 - bu).powi(2) * inv).exp()).collect();
        for v in v0..=v1 {
            let ey = amp * (-(v as f64 - bv).powi(2) * inv).exp();
            let row = &mut signal[v * w + u0..=v * w + u1];
            for (s, e) in row.iter_mut().zip(&ex) {
                *s += ey * e;
            }
        }
    }
}

/// Moves the probe by `command` (mm). The commanded pose is updated
/// exactly; the actual horizontal position carries the run's fixed `bias`
/// plus fresh uniform jitter. Z is exact.
pub fn step_probe<R: Rng + ?Sized>(
    state: &ProbeState,
    command: Vec3,
    extent: Xy,
    cfg: &SensorConfig,
    bias: Xy,
    rng: &mut R,
) -> Result<ProbeState, SimError> {
    let target = state.commanded + command;
    if !(0.0..=extent.x).contains(&target.x) || !(0.0..=extent.y).contains(&target.y) {
        return Err(SimError::OutOfRoi { x: target.x, y: target.y, rx: extent.x, ry: extent.y });
    }
    let jitter = cfg.pos_repeatability.min(cfg.pos_noise_bound);
    let (jx, jy) = if jitter > 0.0 {
        (rng.random_range(-jitter..=jitter), rng.random_range(-jitter..=jitter))
    } else {
        (0.0, 0.0)
    };
    let actual = Vec3::new(target.x + bias.x + jx, target.y + bias.y + jy, target.z);
    Ok(ProbeState { commanded: target, actual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{HARD_DIAMETER, HARD_ELASTICITY, SOFT_ELASTICITY};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn over_center(phantom: &PhantomSpec, depth: f64) -> ProbeState {
        let c = phantom.inclusions[0].center;
        ProbeState::at(Vec3::new(c.x, c.y, phantom.surface_z - depth))
    }

    fn quiet() -> SensorConfig {
        SensorConfig::reduced().without_noise()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    fn intensity_centroid(f: &TactileFrame) -> (f64, f64) {
        let (mut s, mut su, mut sv) = (0.0, 0.0, 0.0);
        for v in 0..f.height {
            for u in 0..f.width {
                let p = f.get(u, v) as f64;
                s += p;
                su += p * u as f64;
                sv += p * v as f64;
            }
        }
        (su / s, sv / s)
    }

    #[test]
    fn no_contact_no_force() {
        let p = PhantomSpec::single_inclusion(HARD_DIAMETER, HARD_ELASTICITY, 6.0);
        let probe = over_center(&p, 0.0);
        assert_eq!(applied_force(&probe, &p, &quiet(), &mut rng()), 0.0);
        let hover = ProbeState::at(Vec3::new(50.0, 50.0, 3.0));
        assert_eq!(applied_force(&hover, &p, &quiet(), &mut rng()), 0.0);
    }

    #[test]
    fn stiffer_inclusion_pushes_back_harder() {
        let hard = PhantomSpec::single_inclusion(HARD_DIAMETER, HARD_ELASTICITY, 6.0);
        let mut soft = hard.clone();
        soft.inclusions[0].elasticity = SOFT_ELASTICITY;
        let cfg = quiet();
        let fh = applied_force(&over_center(&hard, 2.0), &hard, &cfg, &mut rng());
        let fs = applied_force(&over_center(&soft, 2.0), &soft, &cfg, &mut rng());
        assert!(fh > fs, "{fh} <= {fs}");
    }

    #[test]
    fn force_saturates_at_sensor_range() {
        let p = PhantomSpec::empty(Xy::new(100.0, 100.0));
        let cfg = quiet();
        let depth = 60.0 / cfg.contact.background_rate;
        let probe = ProbeState::at(Vec3::new(50.0, 50.0, -depth));
        assert_eq!(applied_force(&probe, &p, &cfg, &mut rng()), 50.0);
    }

    #[test]
    fn force_noise_never_negative() {
        let p = PhantomSpec::empty(Xy::new(100.0, 100.0));
        let mut cfg = SensorConfig::reduced();
        cfg.force_noise_sd = 1.0;
        let probe = ProbeState::at(Vec3::new(50.0, 50.0, 1.0));
        let mut r = rng();
        assert!((0..1000).all(|_| applied_force(&probe, &p, &cfg, &mut r) >= 0.0));
    }

    #[test]
    fn out_of_contact_frame_is_empty() {
        let p = PhantomSpec::single_inclusion(HARD_DIAMETER, HARD_ELASTICITY, 6.0);
        let f = render_frame(&over_center(&p, 0.0), &p, &quiet(), &mut rng());
        assert_eq!(f.pixel_sum(), 0);
    }

    #[test]
    fn centered_bump_has_centered_centroid() {
        let p = PhantomSpec::single_inclusion(HARD_DIAMETER, HARD_ELASTICITY, 6.0);
        let cfg = quiet();
        let f = render_frame(&over_center(&p, 3.0), &p, &cfg, &mut rng());
        let (u, v) = intensity_centroid(&f);
        let (cu, cv) = cfg.image_center();
        assert!((u - cu).abs() < 0.5 && (v - cv).abs() < 0.5, "({u},{v}) vs ({cu},{cv})");
    }

    #[test]
    fn harder_inclusion_is_brighter_at_same_force() {
        let hard = PhantomSpec::single_inclusion(HARD_DIAMETER, HARD_ELASTICITY, 6.0);
        let mut soft = hard.clone();
        soft.inclusions[0].elasticity = SOFT_ELASTICITY;
        // render at equal force: pick depths that give 5 N on each
        let cfg = quiet();
        let probe_at = |ph: &PhantomSpec| {
            let k = effective_stiffness(ph.inclusions[0].center.xy(), ph, &cfg);
            over_center(ph, 5.0 / k)
        };
        let ih = render_frame(&probe_at(&hard), &hard, &cfg, &mut rng());
        let is = render_frame(&probe_at(&soft), &soft, &cfg, &mut rng());
        assert!((ih.applied_force - 5.0).abs() < 1e-9);
        assert!(ih.pixel_sum() > is.pixel_sum());
    }

    #[test]
    fn step_probe_composes_and_bounds_noise() {
        let cfg = quiet();
        let ext = Xy::new(100.0, 100.0);
        let s0 = ProbeState::at(Vec3::new(50.0, 50.0, 25.0));
        let mut r = rng();
        let s1 = step_probe(&s0, Vec3::new(0.0, 0.0, -1.0), ext, &cfg, Xy::default(), &mut r).unwrap();
        let s2 = step_probe(&s1, Vec3::new(0.0, 0.0, -1.0), ext, &cfg, Xy::default(), &mut r).unwrap();
        assert_eq!(s2.commanded.z, 23.0);
        assert_eq!(s2.actual, s2.commanded);

        let noisy = cfg.clone().with_position_noise(5.0);
        let bias = Xy::new(4.0, -4.0);
        let mut s = s0;
        for _ in 0..10_000 {
            s = step_probe(&s, Vec3::default(), ext, &noisy, bias, &mut r).unwrap();
            assert!((s.actual.x - s.commanded.x).abs() <= 5.0);
            assert!((s.actual.y - s.commanded.y).abs() <= 5.0);
            assert_eq!(s.actual.z, s.commanded.z);
        }
    }

    #[test]
    fn step_probe_rejects_leaving_roi() {
        let cfg = quiet();
        let s0 = ProbeState::at(Vec3::new(1.0, 50.0, 25.0));
        let err = step_probe(&s0, Vec3::new(-2.0, 0.0, 0.0), Xy::new(100.0, 100.0), &cfg, Xy::default(), &mut rng());
        assert!(matches!(err, Err(SimError::OutOfRoi { .. })));
    }
}

//! Pipeline-level checks that do not need a trained agent. A fixed policy
//! that always presses down stands in for the learned one: it descends
//! until the safety stop, recording every in-window frame on the way.

use std::path::Path;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tactile_core::agent::{AgentModel, ObsBounds, SacConfig};
use tactile_core::harness::*;
use tactile_core::mechprops::CalibrationSurface;
use tactile_core::sim::{read_sequence_csv, PhantomSpec};

fn always_down() -> AgentModel {
    let cfg = SacConfig { hidden: vec![4], ..SacConfig::default() };
    let mut m = AgentModel::new(cfg, ObsBounds::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let n = m.actor.n_params();
    // output layer is zero; raise the DOWN bias
    m.actor.params_mut()[n - 1] = 1.0;
    m
}

fn quick_cfg(seed: u64, out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig { seed, output_dir: out.to_path_buf(), ..ExperimentConfig::default() };
    c.calibration.sizes_mm = vec![12.0, 16.0, 20.0, 22.0];
    c.calibration.forces_n = vec![1.5, 3.0, 4.5, 6.0, 7.5, 9.0];
    c
}

fn surface(cfg: &ExperimentConfig) -> CalibrationSurface {
    run_calibrate(cfg).unwrap().surface
}

#[test]
fn interrogation_report_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_cfg(17, dir.path());
    let s = surface(&cfg);
    let m = always_down();
    let a = run_interrogate(&cfg, &m, &s).unwrap();
    let b = run_interrogate(&cfg, &m, &s).unwrap();
    assert_ne!(a.dir, b.dir);
    let (ra, rb) = (std::fs::read(a.report_path()).unwrap(), std::fs::read(b.report_path()).unwrap());
    assert_eq!(ra, rb);
    // a relocated output directory does not change the report either
    let other = tempfile::tempdir().unwrap();
    let c = run_interrogate(&ExperimentConfig { output_dir: other.path().into(), ..cfg.clone() }, &m, &s).unwrap();
    assert_eq!(std::fs::read(c.report_path()).unwrap(), ra);
    assert_eq!(a.report.merged.len(), 2);
}

#[test]
fn reported_frames_exist_and_match() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_cfg(3, dir.path());
    let s = surface(&cfg);
    let out = run_characterize(&cfg, &always_down(), &s).unwrap();
    let r = ExperimentReport::load(&out.report_path()).unwrap();
    let n = verify_frames(&out.dir, &r).unwrap();
    assert!(n >= 3 * 4, "expected several frames per target, got {n}");
    for inc in &r.inclusions {
        let seq = inc.sequence.as_ref().unwrap();
        let rows = read_sequence_csv(&out.dir.join(&seq.csv)).unwrap();
        assert_eq!(rows.len(), seq.frames.len());
        for (row, f) in rows.iter().zip(&seq.frames) {
            assert_eq!((row.frame_index, row.pixel_sum), (f.frame_index, f.pixel_sum));
        }
        assert!(inc.estimated_size_mm.is_some() && inc.di.is_some() && inc.risk_score.is_some(), "{inc:?}");
    }
    // the copied surface reproduces the reported sizes from the frame sums
    let s2 = load_surface(&out.dir.join(SURFACE_FILE)).unwrap();
    for inc in &r.inclusions {
        for (f, est) in inc.sequence.as_ref().unwrap().frames.iter().zip(&inc.size_per_frame) {
            assert!((s2.evaluate(f.force, f.pixel_sum as f64) - est).abs() < 1e-5);
        }
    }
    assert!(out.dir.join(TIMINGS_FILE).exists() && out.dir.join(CONFIG_FILE).exists());
}

#[test]
fn tampered_frame_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick_cfg(4, dir.path());
    cfg.characterize.targets.truncate(1);
    let out = run_characterize(&cfg, &always_down(), &surface(&cfg)).unwrap();
    let f = &out.report.inclusions[0].sequence.as_ref().unwrap().frames[0];
    let p = out.dir.join(&f.file);
    let mut bytes = std::fs::read(&p).unwrap();
    let last = bytes.len() - 1;
    bytes[last] = bytes[last].wrapping_add(1);
    std::fs::write(&p, bytes).unwrap();
    assert!(matches!(verify_frames(&out.dir, &out.report), Err(HarnessError::CorruptReport(_))));
}

#[test]
fn empty_phantom_interrogation_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick_cfg(1, dir.path());
    cfg.phantom = PhantomSpec::empty(cfg.phantom.extent);
    let out = run_interrogate(&cfg, &always_down(), &surface(&cfg)).unwrap();
    assert!(out.report.coarse.as_ref().unwrap().candidates.is_empty());
    assert!(out.report.inclusions.is_empty() && out.report.failures.is_empty());
    assert_eq!(report_exit_code(&out.report), 0);
}

#[test]
fn zero_episode_training_gives_uniform_policy() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick_cfg(1, dir.path());
    cfg.agent.episodes = 0;
    let out = run_train(&cfg).unwrap();
    assert!(out.trace.is_empty());
    let m = load_model(&out.dir.join(MODEL_FILE)).unwrap();
    assert_eq!(m.actor.forward(&[0.1, 0.2, 0.3]), vec![0.0, 0.0]);
}

#[test]
fn calibration_including_test_sizes_gives_finite_surface() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick_cfg(2, dir.path());
    cfg.calibration.sizes_mm = vec![12.0, 15.3, 18.9, 22.0];
    let s = surface(&cfg);
    assert_eq!(s.coefficients.len(), 6);
    assert!(s.is_finite());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, failure_persistence: None, ..ProptestConfig::default() })]

    /// Randomized configs either complete or fail with a typed error; some
    /// draws are deliberately invalid.
    #[test]
    fn fuzzed_configs_never_panic(
        seed in any::<u64>(),
        dx in 12.0f64..70.0,
        dy in 12.0f64..70.0,
        detect in -1.0f64..40.0,
        offset_mm in 0.2f64..5.0,
        merge in -1.0f64..20.0,
        iters in 0u32..6,
        lo in 0.2f64..6.0,
        span in -1.0f64..10.0,
        noise in 0.0f64..8.0,
        press in 0.5f64..12.0,
    ) {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = quick_cfg(seed, dir.path());
        let it = &mut cfg.interrogation;
        it.grid_dx_mm = dx;
        it.grid_dy_mm = dy;
        it.detect_threshold = detect;
        it.offset_threshold_mm = offset_mm;
        it.merge_threshold_mm = merge;
        it.max_fine_iters = iters;
        it.press.force = press;
        cfg.window = (lo, lo + span);
        cfg.sensor.position_noise_mm = noise;
        let s = CalibrationSurface::constant(15.0);
        match run_interrogate(&cfg, &always_down(), &s) {
            Ok(out) => {
                let code = report_exit_code(&out.report);
                prop_assert!([0, 3, 4].contains(&code));
                prop_assert!(out.report_path().exists());
            }
            Err(e) => prop_assert!([2, 3, 4].contains(&e.exit_code()), "{e}"),
        }
    }
}

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tactile_bench::{pressed_frame, pressed_sim, random_batch};
use tactile_core::agent::{update_step, AgentModel, ObsBounds, SacConfig};
use tactile_core::interrogation::{detect_regions, DetectConfig};
use tactile_core::sim::SensorConfig;

fn render(c: &mut Criterion) {
    let mut g = c.benchmark_group("render");
    for (name, cfg) in [("reduced", SensorConfig::reduced()), ("full", SensorConfig::full())] {
        let mut sim = pressed_sim(cfg);
        g.bench_function(name, |b| b.iter(|| black_box(sim.capture())));
    }
    g.finish();
}

fn detect(c: &mut Criterion) {
    let mut g = c.benchmark_group("detect");
    for (name, cfg) in [("reduced", SensorConfig::reduced()), ("full", SensorConfig::full())] {
        let frame = pressed_frame(cfg.clone());
        let dc = DetectConfig::for_sensor(&cfg, 4.5);
        g.bench_function(name, |b| b.iter(|| black_box(detect_regions(&frame, &dc, cfg.mm_per_pixel))));
    }
    g.finish();
}

fn sac_update(c: &mut Criterion) {
    let cfg = SacConfig::default();
    let batch = random_batch(cfg.batch_size, 3);
    let mut model = AgentModel::new(cfg, ObsBounds::default(), &mut ChaCha8Rng::seed_from_u64(2)).expect("valid");
    c.bench_function("update_step/batch64", |b| b.iter(|| black_box(update_step(&mut model, &batch).expect("finite"))));
}

criterion_group!(benches, render, detect, sac_update);
criterion_main!(benches);

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use super::config::ExperimentConfig;
use super::report::{
    ExperimentReport, Failure, FailureKind, FineTrace, FrameRef, GroundTruth, InclusionReport, ReportKind,
    SequenceArtifact, REPORT_SCHEMA_VERSION,
};
use super::HarnessError;
use crate::agent::{
    acquire_sequence, load_checkpoint, save_checkpoint, train, write_reward_trace, AgentError, AgentModel,
    EpisodeRecord, TactileEnv,
};
use crate::geom::Xy;
use crate::interrogation::{
    coarse_interrogate, localization_error, merge_candidates, plan_grid, refine_location_traced, DetectConfig,
    InterrogationError,
};
use crate::mechprops::{
    estimate_di, estimate_size, fit_size_surface, risk_score, size_error, CalibrationSample, CalibrationSurface,
    FrameSequence, MechError,
};
use crate::sim::{write_pgm, write_sequence_csv, PhantomSpec, TactileFrame, TactileSim};

pub const CONFIG_FILE: &str = "config.json";
pub const SURFACE_FILE: &str = "surface.json";
pub const MODEL_FILE: &str = "model.tsac";
pub const TRACE_FILE: &str = "reward_trace.csv";
pub const REPORT_FILE: &str = "report.json";
pub const TIMINGS_FILE: &str = "timings.json";
pub const SAMPLES_FILE: &str = "calibration_samples.csv";

/// Creates `<root>/<phase>-<unix seconds>-s<seed>`, adding a numeric
/// suffix when that name is taken. Existing directories are never reused.
pub fn create_run_dir(root: &Path, phase: &str, seed: u64) -> Result<PathBuf, HarnessError> {
    std::fs::create_dir_all(root).map_err(|e| HarnessError::io(root, e))?;
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let base = format!("{phase}-{secs}-s{seed}");
    for k in 0u32.. {
        let name = if k == 0 { base.clone() } else { format!("{base}-{k}") };
        let dir = root.join(name);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(HarnessError::io(&dir, e)),
        }
    }
    unreachable!("u32 suffixes exhausted")
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    std::fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

struct Timings(BTreeMap<String, f64>);

impl Timings {
    fn new() -> Self {
        Self(BTreeMap::new())
    }

    fn record(&mut self, name: &str, since: Instant) {
        self.0.insert(format!("{name}_s"), since.elapsed().as_secs_f64());
    }

    fn save(&self, dir: &Path) -> Result<(), HarnessError> {
        write_file(&dir.join(TIMINGS_FILE), serde_json::to_vec_pretty(&self.0).expect("map serializes"))
    }
}

fn start_run(cfg: &ExperimentConfig, phase: &str) -> Result<PathBuf, HarnessError> {
    cfg.validate()?;
    let dir = create_run_dir(&cfg.output_dir, phase, cfg.seed)?;
    write_file(&dir.join(CONFIG_FILE), cfg.to_json())?;
    Ok(dir)
}

#[derive(Debug)]
pub struct CalibrateOutcome {
    pub dir: PathBuf,
    pub surface: CalibrationSurface,
}

/// Scripted presses of every calibration inclusion at every listed force.
/// Positional noise is off: the block is pressed over its centre.
pub fn calibration_samples(cfg: &ExperimentConfig) -> Result<Vec<CalibrationSample>, HarnessError> {
    let cal = &cfg.calibration;
    let press = &cfg.interrogation.press;
    let mut out = Vec::new();
    for &d in &cal.sizes_mm {
        for &e in &cal.elasticities_kpa {
            let phantom = PhantomSpec::single_inclusion(d, e, cal.layer_depth_mm);
            let centre = phantom.inclusions[0].center.xy();
            let sensor = cfg.base_sensor().with_seed(super::derive_seed(cfg.seed, &format!("calibrate/{d}/{e}")));
            let mut sim = TactileSim::new(phantom, sensor)?;
            sim.move_to(centre.with_z(press.travel_z))?;
            let mut forces = cal.forces_n.clone();
            forces.sort_by(f64::total_cmp);
            for f in forces {
                sim.press_to(f, press.step_mm, press.max_depth_mm)?;
                let frame = sim.capture();
                out.push(CalibrationSample {
                    force: frame.applied_force,
                    pixel_sum: frame.pixel_sum() as f64,
                    diameter: d,
                });
            }
        }
    }
    Ok(out)
}

pub fn run_calibrate(cfg: &ExperimentConfig) -> Result<CalibrateOutcome, HarnessError> {
    let t0 = Instant::now();
    let dir = start_run(cfg, "calibrate")?;
    let mut timings = Timings::new();
    let samples = calibration_samples(cfg)?;
    // With a single size the pixel sum tracks force alone, so the monomials
    // collapse onto 1, F, F^2, F^3 and size is unidentifiable.
    if samples.iter().all(|s| s.diameter == samples[0].diameter) {
        return Err(MechError::RankDeficient { rank: 4, samples: samples.len() }.into());
    }
    let mut csv = String::from("force_N,pixel_sum,diameter_mm\n");
    for s in &samples {
        csv.push_str(&format!("{},{},{}\n", s.force, s.pixel_sum, s.diameter));
    }
    write_file(&dir.join(SAMPLES_FILE), csv)?;
    let surface = fit_size_surface(&samples)?;
    surface.save_json(&dir.join(SURFACE_FILE))?;
    timings.record("total", t0);
    timings.save(&dir)?;
    Ok(CalibrateOutcome { dir, surface })
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub dir: PathBuf,
    pub model: AgentModel,
    pub trace: Vec<EpisodeRecord>,
}

/// Training environment: the configured phantom under noisy sensing, aimed
/// at the first training target.
pub fn training_env(cfg: &ExperimentConfig) -> Result<TactileEnv, HarnessError> {
    let sim = TactileSim::new(cfg.phantom.clone(), cfg.sensor_for("train/sim"))?;
    let target = cfg
        .train_config()
        .targets
        .first()
        .copied()
        .unwrap_or(Xy::new(cfg.phantom.extent.x / 2.0, cfg.phantom.extent.y / 2.0));
    Ok(TactileEnv::new(sim, target, cfg.agent.env.clone())?)
}

/// Trains without writing anything.
pub fn train_model(cfg: &ExperimentConfig) -> Result<(AgentModel, Vec<EpisodeRecord>), HarnessError> {
    cfg.validate()?;
    let mut env = training_env(cfg)?;
    Ok(train(&mut env, &cfg.train_config())?)
}

pub fn run_train(cfg: &ExperimentConfig) -> Result<TrainOutcome, HarnessError> {
    let t0 = Instant::now();
    let dir = start_run(cfg, "train")?;
    let mut timings = Timings::new();
    let (model, trace) = train_model(cfg)?;
    save_checkpoint(&dir.join(MODEL_FILE), &model)?;
    let p = dir.join(TRACE_FILE);
    write_reward_trace(&p, &trace).map_err(|e| HarnessError::io(&p, e))?;
    timings.record("total", t0);
    timings.save(&dir)?;
    Ok(TrainOutcome { dir, model, trace })
}

pub fn load_model(path: &Path) -> Result<AgentModel, HarnessError> {
    Ok(load_checkpoint(path)?)
}

pub fn load_surface(path: &Path) -> Result<CalibrationSurface, HarnessError> {
    Ok(CalibrationSurface::load_json(path)?)
}

#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub report: ExperimentReport,
}

impl RunOutcome {
    pub fn report_path(&self) -> PathBuf {
        self.dir.join(REPORT_FILE)
    }
}

fn classify_interrogation(e: &InterrogationError) -> FailureKind {
    match e {
        InterrogationError::LostTarget { .. } => FailureKind::TargetLost,
        InterrogationError::NonConvergent { .. } => FailureKind::NonConvergent,
        _ => FailureKind::Numeric,
    }
}

fn persist_sequence(
    run: &Path,
    sub: &str,
    frames: &[TactileFrame],
    steps: usize,
    peak_force: f64,
) -> Result<SequenceArtifact, HarnessError> {
    let rel = format!("frames/{sub}");
    let dir = run.join(&rel);
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    let mut refs = Vec::with_capacity(frames.len());
    for f in frames {
        let name = format!("frame_{:05}.pgm", f.frame_index);
        write_pgm(&dir.join(&name), f)?;
        refs.push(FrameRef {
            file: format!("{rel}/{name}"),
            frame_index: f.frame_index,
            force: f.applied_force,
            pixel_sum: f.pixel_sum(),
        });
    }
    write_sequence_csv(&dir.join("sequence.csv"), frames)?;
    Ok(SequenceArtifact { csv: format!("{rel}/sequence.csv"), steps, peak_force, frames: refs })
}

/// Presses over `inc.location` with the agent and fills in the mechanical
/// properties. Failures are stored on the row and returned for the
/// report's failure list.
fn characterize_one(
    env: &mut TactileEnv,
    model: &AgentModel,
    surface: &CalibrationSurface,
    cfg: &ExperimentConfig,
    run: &Path,
    inc: &mut InclusionReport,
) -> Result<Option<Failure>, HarnessError> {
    let fail = |inc: &mut InclusionReport, kind, message: String| {
        inc.error = Some(message.clone());
        Ok(Some(Failure { stage: format!("characterize/{}", inc.label), kind, message }))
    };
    env.set_target(inc.location);
    let acq = match acquire_sequence(env, model, cfg.window, cfg.interrogation.max_acquire_steps) {
        Ok(a) => a,
        Err(e @ AgentError::NoContact { .. }) => return fail(inc, FailureKind::NoContact, e.to_string()),
        Err(e) => return Err(e.into()),
    };
    inc.sequence = Some(persist_sequence(run, &inc.label, &acq.frames, acq.steps, acq.peak_force)?);
    let seq = FrameSequence::from_frames(&acq.frames, cfg.window);
    match estimate_size(&seq, surface) {
        Ok(s) => {
            inc.estimated_size_mm = Some(s.d_mm);
            inc.size_per_frame = s.per_frame;
            inc.size_error_pct = inc.truth.as_ref().map(|t| size_error(t.diameter, s.d_mm));
        }
        Err(e) => return fail(inc, FailureKind::Numeric, e.to_string()),
    }
    match estimate_di(&seq, cfg.force_floor_n) {
        Ok(d) => {
            inc.di = Some(d.di);
            inc.di_residual = Some(d.residual);
            inc.di_per_frame = d.per_frame_ratios;
        }
        Err(e) => return fail(inc, FailureKind::Numeric, e.to_string()),
    }
    let (d, di) = (inc.estimated_size_mm.expect("set above"), inc.di.expect("set above"));
    inc.risk_score = Some(risk_score(d, di, &cfg.risk_weights()));
    Ok(None)
}

fn base_report(cfg: &ExperimentConfig, kind: ReportKind) -> ExperimentReport {
    ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        kind,
        seed: cfg.seed,
        config_digest: cfg.digest(),
        profile: cfg.sensor.profile,
        window: cfg.window,
        risk_weights: cfg.risk_weights(),
        surface_file: SURFACE_FILE.into(),
        coarse: None,
        fine: Vec::new(),
        merged: Vec::new(),
        inclusions: Vec::new(),
        failures: Vec::new(),
    }
}

fn finish_run(
    dir: PathBuf,
    report: ExperimentReport,
    surface: &CalibrationSurface,
    timings: Timings,
) -> Result<RunOutcome, HarnessError> {
    surface.save_json(&dir.join(SURFACE_FILE))?;
    report.save(&dir.join(REPORT_FILE))?;
    timings.save(&dir)?;
    Ok(RunOutcome { dir, report })
}

fn nearest_truth(phantom: &PhantomSpec, at: Xy) -> Option<GroundTruth> {
    phantom
        .inclusions
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.center.xy().distance(&at).total_cmp(&b.1.center.xy().distance(&at)))
        .map(|(index, i)| GroundTruth { index, center: i.center, diameter: i.diameter, elasticity: i.elasticity })
}

/// Coarse scan, recentering and merging over the configured phantom, then
/// an agent press on every merged inclusion. Candidates that are lost or do
/// not converge are recorded and skipped.
pub fn run_interrogate(
    cfg: &ExperimentConfig,
    model: &AgentModel,
    surface: &CalibrationSurface,
) -> Result<RunOutcome, HarnessError> {
    let t0 = Instant::now();
    let dir = start_run(cfg, "interrogate")?;
    let mut timings = Timings::new();
    let mut report = base_report(cfg, ReportKind::Interrogation);
    let it = &cfg.interrogation;
    let mut sim = TactileSim::new(cfg.phantom.clone(), cfg.sensor_for("interrogate/sim"))?;
    let detect = DetectConfig::for_sensor(sim.config(), it.detect_threshold);

    let t = Instant::now();
    let plan = plan_grid(&it.roi, it.grid_dx_mm, it.grid_dy_mm)?;
    let coarse = coarse_interrogate(&mut sim, &plan, &it.press, &detect)?;
    timings.record("coarse", t);

    let t = Instant::now();
    let fine = cfg.fine_config();
    let mut refined = Vec::new();
    for c in &coarse.candidates {
        let (res, steps) = refine_location_traced(&mut sim, c, &fine, &detect);
        let trace = match res {
            Ok(r) => {
                refined.push(r);
                FineTrace { start: c.xy, refined: Some(r), error: None, steps }
            }
            Err(e) => {
                let kind = classify_interrogation(&e);
                if kind == FailureKind::Numeric {
                    return Err(e.into());
                }
                report.failures.push(Failure {
                    stage: format!("fine/({:.3}, {:.3})", c.xy.x, c.xy.y),
                    kind,
                    message: e.to_string(),
                });
                FineTrace { start: c.xy, refined: None, error: Some(e.to_string()), steps }
            }
        };
        report.fine.push(trace);
    }
    report.merged = merge_candidates(&refined, it.merge_threshold_mm);
    report.coarse = Some(coarse);
    timings.record("fine", t);

    let t = Instant::now();
    let travel = it.press.travel_z;
    sim.retract_to(travel)?;
    let start = report.merged.first().map_or(Xy::default(), |m| m.xy);
    let mut env = TactileEnv::new(sim, start, cfg.agent.env.clone())?;
    for (k, m) in report.merged.iter().enumerate() {
        let truth = nearest_truth(&cfg.phantom, m.xy);
        let mut inc = InclusionReport::new(format!("inclusion_{}", k + 1), m.xy, truth);
        inc.localization_error_mm = inc.truth.as_ref().map(|g| localization_error(m.xy, g.center.xy()));
        if let Some(f) = characterize_one(&mut env, model, surface, cfg, &dir, &mut inc)? {
            report.failures.push(f);
        }
        report.inclusions.push(inc);
    }
    timings.record("characterize", t);
    timings.record("total", t0);
    finish_run(dir, report, surface, timings)
}

/// Agent presses over each configured single-inclusion block.
pub fn run_characterize(
    cfg: &ExperimentConfig,
    model: &AgentModel,
    surface: &CalibrationSurface,
) -> Result<RunOutcome, HarnessError> {
    let t0 = Instant::now();
    let dir = start_run(cfg, "characterize")?;
    let mut timings = Timings::new();
    let mut report = base_report(cfg, ReportKind::Characterization);
    for t in &cfg.characterize.targets {
        let phantom = PhantomSpec::single_inclusion(t.diameter_mm, t.elasticity_kpa, t.layer_depth_mm);
        let c = phantom.inclusions[0].center;
        let truth = GroundTruth { index: 0, center: c, diameter: t.diameter_mm, elasticity: t.elasticity_kpa };
        let sim = TactileSim::new(phantom, cfg.sensor_for(&format!("characterize/{}", t.name)))?;
        let mut env = TactileEnv::new(sim, c.xy(), cfg.agent.env.clone())?;
        let mut inc = InclusionReport::new(t.name.clone(), c.xy(), Some(truth));
        if let Some(f) = characterize_one(&mut env, model, surface, cfg, &dir, &mut inc)? {
            report.failures.push(f);
        }
        report.inclusions.push(inc);
    }
    timings.record("total", t0);
    finish_run(dir, report, surface, timings)
}

/// Exit status for a finished run: 4 when any target was lost, failed to
/// converge or was never contacted, 3 for other numeric failures, else 0.
pub fn report_exit_code(report: &ExperimentReport) -> i32 {
    let kinds: Vec<FailureKind> = report.failures.iter().map(|f| f.kind).collect();
    if kinds.iter().any(|k| matches!(k, FailureKind::TargetLost | FailureKind::NonConvergent | FailureKind::NoContact)) {
        4
    } else if kinds.contains(&FailureKind::Numeric) {
        3
    } else {
        0
    }
}

/// Re-reads every frame a report references and checks its pixel sum.
/// Returns the number of frames checked.
pub fn verify_frames(run_dir: &Path, report: &ExperimentReport) -> Result<usize, HarnessError> {
    let mut n = 0;
    for inc in &report.inclusions {
        let Some(seq) = &inc.sequence else { continue };
        for f in &seq.frames {
            let path = run_dir.join(&f.file);
            let frame = crate::sim::read_pgm(&path)?;
            if frame.pixel_sum() != f.pixel_sum {
                return Err(HarnessError::CorruptReport(format!(
                    "{}: pixel sum {} differs from reported {}",
                    path.display(),
                    frame.pixel_sum(),
                    f.pixel_sum
                )));
            }
            n += 1;
        }
    }
    Ok(n)
}


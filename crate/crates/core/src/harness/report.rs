use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::Profile;
use super::HarnessError;
use crate::geom::{Vec3, Xy};
use crate::interrogation::{CandidateLocation, CoarseResult, FineStep};
use crate::mechprops::{size_error, RiskWeights};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Decimal places kept for every float written to a report.
pub const REPORT_DECIMALS: i32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Interrogation,
    Characterization,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    TargetLost,
    NonConvergent,
    NoContact,
    Numeric,
}

/// A per-candidate or per-inclusion failure that did not stop the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: String,
    pub kind: FailureKind,
    pub message: String,
}

/// One persisted frame, path relative to the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRef {
    pub file: String,
    pub frame_index: u64,
    pub force: f64,
    pub pixel_sum: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceArtifact {
    pub csv: String,
    pub steps: usize,
    pub peak_force: f64,
    pub frames: Vec<FrameRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub index: usize,
    pub center: Vec3,
    pub diameter: f64,
    pub elasticity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionReport {
    pub label: String,
    pub location: Xy,
    pub truth: Option<GroundTruth>,
    pub localization_error_mm: Option<f64>,
    pub sequence: Option<SequenceArtifact>,
    pub estimated_size_mm: Option<f64>,
    pub size_per_frame: Vec<f64>,
    pub size_error_pct: Option<f64>,
    pub di: Option<f64>,
    pub di_residual: Option<f64>,
    pub di_per_frame: Vec<f64>,
    pub risk_score: Option<f64>,
    pub error: Option<String>,
}

impl InclusionReport {
    pub fn new(label: String, location: Xy, truth: Option<GroundTruth>) -> Self {
        Self {
            label,
            location,
            truth,
            localization_error_mm: None,
            sequence: None,
            estimated_size_mm: None,
            size_per_frame: Vec::new(),
            size_error_pct: None,
            di: None,
            di_residual: None,
            di_per_frame: Vec::new(),
            risk_score: None,
            error: None,
        }
    }
}

/// Refinement of one coarse candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTrace {
    pub start: Xy,
    pub refined: Option<CandidateLocation>,
    pub error: Option<String>,
    pub steps: Vec<FineStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub kind: ReportKind,
    pub seed: u64,
    pub config_digest: String,
    pub profile: Profile,
    pub window: (f64, f64),
    pub risk_weights: RiskWeights,
    pub surface_file: String,
    pub coarse: Option<CoarseResult>,
    pub fine: Vec<FineTrace>,
    pub merged: Vec<CandidateLocation>,
    pub inclusions: Vec<InclusionReport>,
    pub failures: Vec<Failure>,
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            let s = 10f64.powi(REPORT_DECIMALS);
            let r = (x * s).round() / s;
            // -0.0 and 0.0 must render identically
            let r = if r == 0.0 { 0.0 } else { r };
            if let Some(m) = serde_json::Number::from_f64(r) {
                *n = m;
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_floats),
        Value::Object(o) => o.values_mut().for_each(round_floats),
        _ => {}
    }
}

impl ExperimentReport {
    /// Pretty JSON with every float rounded to [`REPORT_DECIMALS`] places.
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut v = serde_json::to_value(self).expect("report serializes");
        round_floats(&mut v);
        let mut out = serde_json::to_vec_pretty(&v).expect("value serializes");
        out.push(b'\n');
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        std::fs::write(path, self.to_json_bytes()).map_err(|e| HarnessError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let r: Self = serde_json::from_str(&text).map_err(|e| {
            HarnessError::CorruptReport(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))
        })?;
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(HarnessError::CorruptReport(format!(
                "{}: report schema_version {} is not supported",
                path.display(),
                r.schema_version
            )));
        }
        Ok(r)
    }
}

pub const TABLE_COLUMNS: [&str; 6] = ["Target", "True Size", "Estimated Size", "Size Error", "DI", "Risk Score"];

struct Row {
    target: String,
    true_size: Option<f64>,
    est: Option<f64>,
    err: Option<f64>,
    di: Option<f64>,
    risk: Option<f64>,
}

fn rows(report: &ExperimentReport) -> Vec<Row> {
    report
        .inclusions
        .iter()
        .map(|i| {
            let true_size = i.truth.as_ref().map(|t| t.diameter);
            let err = match (true_size, i.estimated_size_mm) {
                (Some(t), Some(e)) => Some(size_error(t, e)),
                _ => None,
            };
            Row { target: i.label.clone(), true_size, est: i.estimated_size_mm, err, di: i.di, risk: i.risk_score }
        })
        .collect()
}

fn cell(v: Option<f64>, decimals: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.decimals$}"))
}

/// Aligned text table: sizes in mm, size error in percent, DI in
/// thousands of counts per newton.
pub fn render_table(report: &ExperimentReport) -> String {
    let header = [
        TABLE_COLUMNS[0].to_string(),
        format!("{} (mm)", TABLE_COLUMNS[1]),
        format!("{} (mm)", TABLE_COLUMNS[2]),
        format!("{} (%)", TABLE_COLUMNS[3]),
        format!("{} (x10^3)", TABLE_COLUMNS[4]),
        TABLE_COLUMNS[5].to_string(),
    ];
    let body: Vec<[String; 6]> = rows(report)
        .into_iter()
        .map(|r| {
            [
                r.target,
                cell(r.true_size, 2),
                cell(r.est, 2),
                cell(r.err, 2),
                cell(r.di.map(|d| d / 1e3), 2),
                cell(r.risk, 3),
            ]
        })
        .collect();
    let mut widths = header.each_ref().map(|h| h.len());
    for r in &body {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[String; 6]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(k, (c, w))| if k == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        writeln!(out, "{}", parts.join("  ").trim_end()).expect("string write");
    };
    line(&mut out, &header);
    let rule = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
    writeln!(out, "{}", "-".repeat(rule)).expect("string write");
    for r in &body {
        line(&mut out, r);
    }
    if report.kind == ReportKind::Interrogation {
        for i in &report.inclusions {
            if let Some(e) = i.localization_error_mm {
                writeln!(out, "{}: located at ({:.2}, {:.2}) mm, error {:.2} mm", i.label, i.location.x, i.location.y, e)
                    .expect("string write");
            }
        }
    }
    for f in &report.failures {
        writeln!(out, "failure [{}] {:?}: {}", f.stage, f.kind, f.message).expect("string write");
    }
    writeln!(out, "Manual-operator comparison: not reproducible in simulation.").expect("string write");
    out
}

/// The same table as CSV with unrounded values; empty cells for missing
/// results.
pub fn render_csv(report: &ExperimentReport) -> String {
    let mut out = String::new();
    writeln!(out, "target,true_size_mm,estimated_size_mm,size_error_pct,di,risk_score").expect("string write");
    let f = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    for r in rows(report) {
        writeln!(out, "{},{},{},{},{},{}", r.target, f(r.true_size), f(r.est), f(r.err), f(r.di), f(r.risk))
            .expect("string write");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentReport {
        let mut inc = InclusionReport::new(
            "inclusion_1".into(),
            Xy::new(44.1, 51.9),
            Some(GroundTruth { index: 0, center: Vec3::new(44.5, 51.5, -6.0), diameter: 18.9, elasticity: 628.0 }),
        );
        inc.estimated_size_mm = Some(20.2);
        inc.size_error_pct = Some(size_error(18.9, 20.2));
        inc.di = Some(63_628.123_456_789);
        inc.risk_score = Some(0.431_234_567_8);
        inc.localization_error_mm = Some(0.565_685_424_9);
        ExperimentReport {
            schema_version: REPORT_SCHEMA_VERSION,
            kind: ReportKind::Interrogation,
            seed: 3,
            config_digest: "ab".into(),
            profile: Profile::Reduced,
            window: (1.0, 10.0),
            risk_weights: RiskWeights::defaults(21.0, 100, (1.0, 10.0)),
            surface_file: "surface.json".into(),
            coarse: None,
            fine: Vec::new(),
            merged: Vec::new(),
            inclusions: vec![inc, InclusionReport::new("inclusion_2".into(), Xy::new(1.0, 2.0), None)],
            failures: Vec::new(),
        }
    }

    #[test]
    fn floats_are_rounded_to_six_places() {
        let text = String::from_utf8(sample().to_json_bytes()).unwrap();
        assert!(text.contains("63628.123457"), "{text}");
        assert!(text.contains("0.431235"));
        assert!(!text.contains("0.4312345"));
    }

    #[test]
    fn json_round_trip_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        let r = sample();
        r.save(&p).unwrap();
        let back = ExperimentReport::load(&p).unwrap();
        assert_eq!(back.to_json_bytes(), r.to_json_bytes());
    }

    #[test]
    fn corrupt_report_is_diagnosed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        std::fs::write(&p, "{\"schema_version\": 1,\n \"kind\": 5}").unwrap();
        let e = ExperimentReport::load(&p).unwrap_err();
        assert!(matches!(e, HarnessError::CorruptReport(_)), "{e}");
        assert!(e.to_string().contains(":2:"), "{e}");
    }

    #[test]
    fn table_has_one_row_per_inclusion() {
        let t = render_table(&sample());
        let lines: Vec<&str> = t.lines().collect();
        for c in TABLE_COLUMNS {
            assert!(lines[0].contains(c), "{c} missing from {}", lines[0]);
        }
        assert!(lines[2].starts_with("inclusion_1") && lines[2].contains("6.88") && lines[2].contains("63.63"));
        assert!(lines[3].starts_with("inclusion_2") && lines[3].contains('-'));
        assert!(t.contains("not reproducible"));
    }

    #[test]
    fn size_error_recomputes_from_raw_columns() {
        let csv = render_csv(&sample());
        let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        let (t, e, err): (f64, f64, f64) = (row[1].parse().unwrap(), row[2].parse().unwrap(), row[3].parse().unwrap());
        let recomputed = (e - t).abs() / t * 100.0;
        assert_eq!(format!("{recomputed:.2}"), format!("{err:.2}"));
        assert!(render_table(&sample()).contains(&format!("{recomputed:.2}")));
    }
}

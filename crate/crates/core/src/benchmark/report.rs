//! Submission bundle layout (version [`REPORT_VERSION`]):
//!
//! | file | content |
//! |------|---------|
//! | `metrics.json` | the report without per-sample records |
//! | `predictions.csv` | `id,group,family,model_name,true_<t>...,pred_<t>...` |
//! | `boxplot_<target>.json` | RPE box statistics per group for one target |
//! | `metadata.json` | predictor description, hardware, timing, constraints |
//! | `tables.csv` | one row per (group, target) metric cell |

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::evaluate::{InferenceTiming, MetricsReport, PredictionRecord, PredictorInfo, REPORT_VERSION};
use super::metrics::R2;
use super::boxplot::BoxStats;
use crate::arch::Family;
use crate::sample::GroupTag;
use crate::targets::{Target, TargetVector};

pub const BUNDLE_FILES: [&str; 4] = ["metrics.json", "predictions.csv", "metadata.json", "tables.csv"];

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("bundle version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BundleError + '_ {
    move |source| BundleError::Io { path: path.to_path_buf(), source }
}

fn fmt_err(path: &Path, reason: impl std::fmt::Display) -> BundleError {
    BundleError::Format { path: path.to_path_buf(), reason: reason.to_string() }
}

#[derive(Serialize)]
struct Metadata<'a> {
    version: u32,
    predictor: &'a PredictorInfo,
    hardware: &'a str,
    timing: &'a Option<InferenceTiming>,
    quartile_method: &'a str,
    n_samples: usize,
}

#[derive(Serialize)]
struct BoxplotFile<'a> {
    version: u32,
    target: Target,
    quartile_method: &'a str,
    groups: Vec<BoxplotGroup<'a>>,
}

#[derive(Serialize)]
struct BoxplotGroup<'a> {
    group: &'a str,
    n: usize,
    #[serde(flatten)]
    stats: &'a BoxStats,
}

#[derive(Serialize, Deserialize)]
struct PredictionRow {
    id: String,
    group: GroupTag,
    family: Family,
    model_name: String,
    true_bram: f64,
    true_dsp: f64,
    true_ff: f64,
    true_lut: f64,
    true_cycles: f64,
    true_ii: f64,
    pred_bram: f64,
    pred_dsp: f64,
    pred_ff: f64,
    pred_lut: f64,
    pred_cycles: f64,
    pred_ii: f64,
}

impl PredictionRow {
    fn from_record(r: &PredictionRecord) -> Self {
        let (t, p) = (r.truth, r.predicted);
        Self {
            id: r.id.clone(),
            group: r.group,
            family: r.family,
            model_name: r.model_name.clone(),
            true_bram: t.bram,
            true_dsp: t.dsp,
            true_ff: t.ff,
            true_lut: t.lut,
            true_cycles: t.cycles,
            true_ii: t.ii,
            pred_bram: p.bram,
            pred_dsp: p.dsp,
            pred_ff: p.ff,
            pred_lut: p.lut,
            pred_cycles: p.cycles,
            pred_ii: p.ii,
        }
    }

    fn into_record(self) -> PredictionRecord {
        PredictionRecord {
            id: self.id,
            group: self.group,
            family: self.family,
            model_name: self.model_name,
            truth: TargetVector {
                bram: self.true_bram,
                dsp: self.true_dsp,
                ff: self.true_ff,
                lut: self.true_lut,
                cycles: self.true_cycles,
                ii: self.true_ii,
            },
            predicted: TargetVector {
                bram: self.pred_bram,
                dsp: self.pred_dsp,
                ff: self.pred_ff,
                lut: self.pred_lut,
                cycles: self.pred_cycles,
                ii: self.pred_ii,
            },
        }
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), BundleError> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn json_bytes<T: Serialize>(path: &Path, v: &T) -> Result<Vec<u8>, BundleError> {
    let mut b = serde_json::to_vec_pretty(v).map_err(|e| fmt_err(path, e))?;
    b.push(b'\n');
    Ok(b)
}

/// Write the bundle into `out` (created if missing). Returns the written paths.
pub fn render_submission(r: &MetricsReport, out: &Path) -> Result<Vec<PathBuf>, BundleError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut written = Vec::new();

    let path = out.join("metrics.json");
    let summary = MetricsReport { records: Vec::new(), ..r.clone() };
    write(&path, &json_bytes(&path, &summary)?)?;
    written.push(path);

    let path = out.join("predictions.csv");
    let mut w = csv::Writer::from_writer(Vec::new());
    for rec in &r.records {
        w.serialize(PredictionRow::from_record(rec)).map_err(|e| fmt_err(&path, e))?;
    }
    if r.records.is_empty() {
        w.write_record(PREDICTION_HEADER).map_err(|e| fmt_err(&path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| fmt_err(&path, e))?;
    write(&path, &bytes)?;
    written.push(path);

    for t in Target::ALL {
        let path = out.join(format!("boxplot_{}.json", t.as_str()));
        let file = BoxplotFile {
            version: REPORT_VERSION,
            target: t,
            quartile_method: &r.quartile_method,
            groups: r
                .groups
                .iter()
                .map(|g| BoxplotGroup { group: &g.name, n: g.n, stats: &g.cell(t).rpe })
                .collect(),
        };
        write(&path, &json_bytes(&path, &file)?)?;
        written.push(path);
    }

    let path = out.join("metadata.json");
    let meta = Metadata {
        version: REPORT_VERSION,
        predictor: &r.predictor,
        hardware: &r.hardware,
        timing: &r.timing,
        quartile_method: &r.quartile_method,
        n_samples: r.n_samples,
    };
    write(&path, &json_bytes(&path, &meta)?)?;
    written.push(path);

    let path = out.join("tables.csv");
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["group", "n", "target", "r2", "smape", "rmse", "rpe_median", "rpe_q1", "rpe_q3"])
        .map_err(|e| fmt_err(&path, e))?;
    for g in &r.groups {
        for c in &g.cells {
            let r2 = match c.metrics.r2 {
                R2::Score(v) => v.to_string(),
                R2::Skipped => "skipped".into(),
            };
            w.write_record([
                g.name.clone(),
                g.n.to_string(),
                c.target.as_str().to_string(),
                r2,
                c.metrics.smape.to_string(),
                c.metrics.rmse.to_string(),
                c.rpe.median.to_string(),
                c.rpe.q1.to_string(),
                c.rpe.q3.to_string(),
            ])
            .map_err(|e| fmt_err(&path, e))?;
        }
    }
    let bytes = w.into_inner().map_err(|e| fmt_err(&path, e))?;
    write(&path, &bytes)?;
    written.push(path);

    Ok(written)
}

const PREDICTION_HEADER: [&str; 16] = [
    "id", "group", "family", "model_name", "true_bram", "true_dsp", "true_ff", "true_lut", "true_cycles", "true_ii",
    "pred_bram", "pred_dsp", "pred_ff", "pred_lut", "pred_cycles", "pred_ii",
];

/// Reassemble a full report (records included) from a rendered bundle.
pub fn load_bundle(dir: &Path) -> Result<MetricsReport, BundleError> {
    let path = dir.join("metrics.json");
    let raw = fs::read(&path).map_err(io_err(&path))?;
    let mut report: MetricsReport = serde_json::from_slice(&raw).map_err(|e| fmt_err(&path, e))?;
    if report.version != REPORT_VERSION {
        return Err(BundleError::Version { found: report.version, expected: REPORT_VERSION });
    }
    let path = dir.join("predictions.csv");
    let raw = fs::read(&path).map_err(io_err(&path))?;
    let mut records = Vec::new();
    for row in csv::Reader::from_reader(raw.as_slice()).deserialize::<PredictionRow>() {
        records.push(row.map_err(|e| fmt_err(&path, e))?.into_record());
    }
    report.records = records;
    Ok(report)
}

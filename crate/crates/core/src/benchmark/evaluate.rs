use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::boxplot::{boxplot_stats, BoxStats, QUARTILE_METHOD};
use super::metrics::{rpe, MetricError, MetricTriple};
use crate::arch::Family;
use crate::dataset::{Dataset, Split};
use crate::exec::Exec;
use crate::sample::{GroupTag, Sample};
use crate::targets::{Target, TargetVector};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Error)]
#[error("{0}")]
pub struct PredictError(pub String);

impl PredictError {
    pub fn new(msg: impl std::fmt::Display) -> Self {
        Self(msg.to_string())
    }
}

/// Descriptive metadata that travels with every report.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PredictorInfo {
    pub name: String,
    pub kind: String,
    #[serde(default)]
    pub checkpoint_hash: Option<String>,
    /// Architecture and training hyperparameters.
    #[serde(default)]
    pub description: String,
    /// Extra training data, precision settings or other constraints.
    #[serde(default)]
    pub constraints: Vec<String>,
}

/// Anything that maps a sample to six raw-unit predictions.
pub trait Predictor: Sync {
    fn info(&self) -> PredictorInfo;
    fn predict_sample(&self, sample: &Sample) -> Result<TargetVector, PredictError>;
}

/// Predictions supplied by an external estimator as CSV with header
/// `id,bram,dsp,ff,lut,cycles,ii`.
#[derive(Debug, Clone)]
pub struct PredictionFile {
    pub info: PredictorInfo,
    rows: BTreeMap<String, TargetVector>,
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    id: String,
    bram: f64,
    dsp: f64,
    ff: f64,
    lut: f64,
    cycles: f64,
    ii: f64,
}

impl PredictionFile {
    pub fn from_csv_reader<R: std::io::Read>(reader: R, info: PredictorInfo) -> Result<Self, PredictError> {
        let mut rows = BTreeMap::new();
        for rec in csv::Reader::from_reader(reader).deserialize::<CsvRow>() {
            let r = rec.map_err(PredictError::new)?;
            let t = TargetVector { bram: r.bram, dsp: r.dsp, ff: r.ff, lut: r.lut, cycles: r.cycles, ii: r.ii };
            if rows.insert(r.id.clone(), t).is_some() {
                return Err(PredictError(format!("duplicate prediction for `{}`", r.id)));
            }
        }
        Ok(Self { info, rows })
    }

    pub fn from_csv(path: &Path) -> Result<Self, PredictError> {
        let f = std::fs::File::open(path).map_err(|e| PredictError(format!("{}: {e}", path.display())))?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("external").to_string();
        Self::from_csv_reader(f, PredictorInfo { name, kind: "prediction-file".into(), ..Default::default() })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

impl Predictor for PredictionFile {
    fn info(&self) -> PredictorInfo {
        self.info.clone()
    }

    fn predict_sample(&self, s: &Sample) -> Result<TargetVector, PredictError> {
        self.rows
            .get(&s.meta.id)
            .copied()
            .ok_or_else(|| PredictError(format!("no prediction for sample `{}`", s.meta.id)))
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction failed for `{id}`: {source}")]
    Prediction { id: String, source: PredictError },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("dataset is empty")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    All,
    Family,
    Tag,
    ExemplarModel,
}

/// Which group families to report in addition to `all`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSelection {
    pub family: bool,
    pub tag: bool,
    pub exemplar_model: bool,
}

impl Default for GroupSelection {
    fn default() -> Self {
        Self { family: true, tag: true, exemplar_model: true }
    }
}

impl std::str::FromStr for GroupSelection {
    type Err = String;

    /// Comma list drawn from `family`, `tag`, `exemplar`, or `all`/`none`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut g = GroupSelection { family: false, tag: false, exemplar_model: false };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "all" => g = GroupSelection::default(),
                "none" => {}
                "family" => g.family = true,
                "tag" => g.tag = true,
                "exemplar" => g.exemplar_model = true,
                other => return Err(format!("unknown group set `{other}`")),
            }
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub groups: GroupSelection,
    /// Record wall-clock inference time (makes reports run-dependent).
    pub record_timing: bool,
    pub exec: Exec,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { groups: GroupSelection::default(), record_timing: true, exec: Exec::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceTiming {
    pub total_ms: f64,
    pub per_sample_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub target: Target,
    #[serde(flatten)]
    pub metrics: MetricTriple,
    pub rpe: BoxStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub name: String,
    pub kind: GroupKind,
    pub n: usize,
    /// One cell per target, in [`Target::ALL`] order.
    pub cells: Vec<Cell>,
}

impl GroupReport {
    pub fn cell(&self, t: Target) -> &Cell {
        &self.cells[t.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub group: GroupTag,
    pub family: Family,
    pub model_name: String,
    pub truth: TargetVector,
    pub predicted: TargetVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub version: u32,
    pub predictor: PredictorInfo,
    pub split: Split,
    pub n_samples: usize,
    pub timing: Option<InferenceTiming>,
    pub hardware: String,
    pub quartile_method: String,
    pub groups: Vec<GroupReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub records: Vec<PredictionRecord>,
}

impl MetricsReport {
    pub fn group(&self, name: &str) -> Option<&GroupReport> {
        self.groups.iter().find(|g| g.name == name)
    }
}

/// Best-effort description of the evaluating machine.
pub fn hardware_description() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| std::env::consts::ARCH.to_string());
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!("{cpu}; {threads} hardware threads; {}", std::env::consts::OS)
}

pub fn evaluate(predictor: &dyn Predictor, ds: &Dataset) -> Result<MetricsReport, EvalError> {
    evaluate_with(predictor, ds, &EvalOptions::default())
}

pub fn evaluate_with(predictor: &dyn Predictor, ds: &Dataset, opts: &EvalOptions) -> Result<MetricsReport, EvalError> {
    if ds.is_empty() {
        return Err(EvalError::Empty);
    }
    let start = Instant::now();
    let preds = opts.exec.map(ds.samples(), |s| predictor.predict_sample(s));
    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;

    let mut records = Vec::with_capacity(ds.len());
    for (s, p) in ds.iter().zip(preds) {
        let predicted = p.map_err(|e| EvalError::Prediction { id: s.meta.id.clone(), source: e })?;
        records.push(PredictionRecord {
            id: s.meta.id.clone(),
            group: s.group,
            family: s.architecture.family(),
            model_name: s.meta.model_name.clone(),
            truth: s.targets(),
            predicted,
        });
    }

    let mut members: BTreeMap<(GroupKind, String), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        members.entry((GroupKind::All, "all".into())).or_default().push(i);
        if opts.groups.family {
            members.entry((GroupKind::Family, r.family.as_str().into())).or_default().push(i);
        }
        if opts.groups.tag && r.group != GroupTag::Unknown {
            members.entry((GroupKind::Tag, format!("tag:{}", r.group.as_str()))).or_default().push(i);
        }
        if opts.groups.exemplar_model && r.group == GroupTag::Exemplar {
            members.entry((GroupKind::ExemplarModel, format!("exemplar:{}", r.model_name))).or_default().push(i);
        }
    }
    let groups = opts.exec.map(&members.into_iter().collect::<Vec<_>>(), |((kind, name), idx)| {
        group_report(name, *kind, idx, &records)
    });
    let groups = groups.into_iter().collect::<Result<Vec<_>, _>>()?;

    Ok(MetricsReport {
        version: REPORT_VERSION,
        predictor: predictor.info(),
        split: ds.split,
        n_samples: records.len(),
        timing: opts.record_timing.then(|| InferenceTiming {
            total_ms: elapsed_ms,
            per_sample_ms: elapsed_ms / records.len() as f64,
        }),
        hardware: hardware_description(),
        quartile_method: QUARTILE_METHOD.into(),
        groups,
        records,
    })
}

fn group_report(name: &str, kind: GroupKind, idx: &[usize], records: &[PredictionRecord]) -> Result<GroupReport, EvalError> {
    let mut cells = Vec::with_capacity(6);
    for t in Target::ALL {
        let y: Vec<f64> = idx.iter().map(|&i| records[i].truth.get(t)).collect();
        let yhat: Vec<f64> = idx.iter().map(|&i| records[i].predicted.get(t)).collect();
        let metrics = MetricTriple::compute(&y, &yhat)?;
        let errs = rpe(&y, &yhat)?;
        let rpe = boxplot_stats(&errs).ok_or(EvalError::Empty)?;
        cells.push(Cell { target: t, metrics, rpe });
    }
    Ok(GroupReport { name: name.to_string(), kind, n: idx.len(), cells })
}

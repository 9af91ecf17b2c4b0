//! Dataset ingestion: a directory of one-record-per-file JSON, or a JSON
//! Lines archive. Subset membership ([`GroupTag`]) is inferred from the
//! directory layout (`<root>/<group>/<id>.json`) or from archive wrappers
//! of the form `{"group": "...", "record": {...}}`.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::exec::Exec;
use crate::sample::{self, GroupTag, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    #[default]
    Train,
    Validation,
    Test,
    ExemplarTest,
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            "exemplar_test" | "exemplar" => Ok(Split::ExemplarTest),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("no samples could be loaded from {0}")]
    EmptyDataset(PathBuf),
    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Immutable, id-ordered collection of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: Split,
    samples: Vec<Sample>,
}

impl Dataset {
    /// Sorts by id; rejects duplicate ids.
    pub fn new(split: Split, mut samples: Vec<Sample>) -> Result<Self, DatasetError> {
        samples.sort_by(|a, b| a.meta.id.cmp(&b.meta.id));
        if let Some(w) = samples.windows(2).find(|w| w[0].meta.id == w[1].meta.id) {
            return Err(DatasetError::DuplicateId(w[0].meta.id.clone()));
        }
        Ok(Self { split, samples })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sample> {
        self.samples.iter()
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    /// Subset by predicate, keeping order.
    pub fn filter(&self, keep: impl Fn(&Sample) -> bool) -> Dataset {
        Dataset { split: self.split, samples: self.samples.iter().filter(|s| keep(s)).cloned().collect() }
    }

    /// Writes `<dir>/<group>/<id>.json`, one canonical record per file.
    pub fn write_dir(&self, dir: &Path) -> Result<(), DatasetError> {
        for s in &self.samples {
            let sub = dir.join(s.group.as_str());
            fs::create_dir_all(&sub).map_err(|e| io_err(&sub, e))?;
            let path = sub.join(format!("{}.json", s.meta.id));
            fs::write(&path, sample::to_json(s) + "\n").map_err(|e| io_err(&path, e))?;
        }
        Ok(())
    }

    /// Writes a JSON Lines archive of `{"group", "record"}` wrappers.
    pub fn write_archive(&self, path: &Path) -> Result<(), DatasetError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(|e| io_err(path, e))?);
        for s in &self.samples {
            let line = serde_json::json!({"group": s.group.as_str(), "record": sample::to_value(s)});
            writeln!(f, "{line}").map_err(|e| io_err(path, e))?;
        }
        f.flush().map_err(|e| io_err(path, e))
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a Sample;
    type IntoIter = std::slice::Iter<'a, Sample>;

    fn into_iter(self) -> Self::IntoIter {
        self.samples.iter()
    }
}

fn io_err(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadFailure {
    /// File path, with `:line` for archive entries.
    pub location: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub dataset: Dataset,
    pub failures: Vec<LoadFailure>,
}

/// Loads every parseable sample, logging failures.
pub fn load_dataset(path: &Path, split: Split) -> Result<Dataset, DatasetError> {
    let loaded = load_dataset_detailed(path, split, Exec::default())?;
    for f in &loaded.failures {
        tracing::warn!(location = %f.location, "skipped record: {}", f.reason);
    }
    Ok(loaded.dataset)
}

enum Unit {
    File { path: PathBuf, group: GroupTag },
    Line { location: String, text: String, group: GroupTag },
}

pub fn load_dataset_detailed(path: &Path, split: Split, exec: Exec) -> Result<LoadedDataset, DatasetError> {
    let mut units = Vec::new();
    if path.is_dir() {
        collect_dir(path, GroupTag::Unknown, &mut units)?;
    } else {
        let group = group_from_name(path.file_stem()).unwrap_or_default();
        collect_file(path, group, &mut units)?;
    }

    let parsed: Vec<Result<Sample, LoadFailure>> = exec.map(&units, parse_unit);
    let mut failures = Vec::new();
    let mut samples = Vec::new();
    for p in parsed {
        match p {
            Ok(s) => samples.push(s),
            Err(f) => failures.push(f),
        }
    }
    samples.sort_by(|a, b| a.meta.id.cmp(&b.meta.id));
    let mut seen = HashSet::new();
    samples.retain(|s| {
        let fresh = seen.insert(s.meta.id.clone());
        if !fresh {
            failures.push(LoadFailure { location: s.meta.id.clone(), reason: "duplicate sample id".into() });
        }
        fresh
    });
    if samples.is_empty() {
        return Err(DatasetError::EmptyDataset(path.to_path_buf()));
    }
    failures.sort_by(|a, b| a.location.cmp(&b.location));
    let dataset = Dataset::new(split, samples)?;
    Ok(LoadedDataset { dataset, failures })
}

fn group_from_name(name: Option<&std::ffi::OsStr>) -> Option<GroupTag> {
    GroupTag::parse(name?.to_str()?)
}

fn collect_dir(dir: &Path, group: GroupTag, out: &mut Vec<Unit>) -> Result<(), DatasetError> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            let g = group_from_name(p.file_name()).unwrap_or(group);
            collect_dir(&p, g, out)?;
        } else {
            collect_file(&p, group, out)?;
        }
    }
    Ok(())
}

fn collect_file(path: &Path, group: GroupTag, out: &mut Vec<Unit>) -> Result<(), DatasetError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => out.push(Unit::File { path: path.to_path_buf(), group }),
        Some("jsonl") | Some("ndjson") => {
            let f = fs::File::open(path).map_err(|e| io_err(path, e))?;
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let text = line.map_err(|e| io_err(path, e))?;
                if text.trim().is_empty() {
                    continue;
                }
                out.push(Unit::Line { location: format!("{}:{}", path.display(), i + 1), text, group });
            }
        }
        _ => {}
    }
    Ok(())
}

fn parse_unit(u: &Unit) -> Result<Sample, LoadFailure> {
    match u {
        Unit::File { path, group } => {
            let location = path.display().to_string();
            let text = fs::read_to_string(path).map_err(|e| LoadFailure { location: location.clone(), reason: e.to_string() })?;
            let mut s = sample::parse_sample(&text).map_err(|e| LoadFailure { location, reason: e.to_string() })?;
            s.group = *group;
            Ok(s)
        }
        Unit::Line { location, text, group } => {
            let fail = |reason: String| LoadFailure { location: location.clone(), reason };
            let v: Value = serde_json::from_str(text).map_err(|e| fail(e.to_string()))?;
            let (record, group) = match v.get("record") {
                Some(r) => {
                    let g = v.get("group").and_then(Value::as_str).and_then(GroupTag::parse).unwrap_or(*group);
                    (r.clone(), g)
                }
                None => (v, *group),
            };
            let parsed = sample::parse_value(&record, &[&sample::NeutralAdapter, &sample::KerasAdapter])
                .map_err(|e| fail(e.to_string()))?;
            for w in &parsed.warnings {
                tracing::warn!(%location, "{w}");
            }
            let mut s = parsed.sample;
            s.group = group;
            Ok(s)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_dataset, FamilyMix};

    #[test]
    fn directory_round_trip_keeps_groups() {
        let ds = generate_dataset(3, 40, &FamilyMix::default());
        let dir = tempfile::tempdir().unwrap();
        ds.write_dir(dir.path()).unwrap();
        let back = load_dataset(dir.path(), Split::Train).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn archive_round_trip() {
        let ds = generate_dataset(4, 25, &FamilyMix::default()).with_split(Split::Test);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("all.jsonl");
        ds.write_archive(&path).unwrap();
        let back = load_dataset(&path, Split::Test).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_dataset(dir.path(), Split::Test), Err(DatasetError::EmptyDataset(_))));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let ds = generate_dataset(5, 2, &FamilyMix::default());
        let mut v = ds.samples().to_vec();
        v[1].meta.id = v[0].meta.id.clone();
        assert!(matches!(Dataset::new(Split::Train, v), Err(DatasetError::DuplicateId(_))));
    }
}

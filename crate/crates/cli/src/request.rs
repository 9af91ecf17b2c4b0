//! Estimate requests: parsing, checkpoint lookup and inference. Shared by
//! the HTTP service and the `estimate` subcommand so both paths produce
//! identical numbers.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use wahls_core::arch::NetworkArchitecture;
use wahls_core::config::HlsConfig;
use wahls_core::featurize::{bops, FeatureError};
use wahls_core::fixtures::exemplar;
use wahls_core::sample::{KerasAdapter, ModelConfigAdapter, NeutralAdapter};
use wahls_core::targets::TargetVector;
use wahls_core::validate::validate_design;
use wahls_surrogates::{read_checkpoint, CheckpointError, ModelKind, PredictionError, TrainedModel};

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRequest {
    pub architecture: NetworkArchitecture,
    pub hls_config: HlsConfig,
    pub model_kind: Option<ModelKind>,
    pub checkpoint: Option<String>,
}

/// Request failure, mapped onto an HTTP status.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RequestError {
    pub status: u16,
    pub kind: &'static str,
    pub message: String,
}

impl RequestError {
    pub fn schema(message: impl Into<String>) -> Self {
        Self { status: 400, kind: "schema", message: message.into() }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self { status: 404, kind: "unknown_checkpoint", message: message.into() }
    }

    fn unprocessable(kind: &'static str, message: impl Into<String>) -> Self {
        Self { status: 422, kind, message: message.into() }
    }
}

impl std::fmt::Display for RequestError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({}): {}", self.kind, self.status, self.message)
    }
}

impl std::error::Error for RequestError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub id: String,
    pub kind: ModelKind,
    pub checkpoint_hash: String,
    pub feature_layout_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_model_version: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResponse {
    pub predictions: TargetVector,
    pub model: ModelMeta,
    pub inference_ms: f64,
    pub bops: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    #[serde(flatten)]
    pub meta: ModelMeta,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

/// Architecture as a neutral layer list, a Keras `to_json` document, or the
/// name of an exemplar model.
pub fn parse_architecture(v: &Value) -> Result<NetworkArchitecture, RequestError> {
    if let Some(name) = v.as_str() {
        return exemplar(name).ok_or_else(|| RequestError::schema(format!("unknown exemplar `{name}`")));
    }
    let adapters: [&dyn ModelConfigAdapter; 2] = [&NeutralAdapter, &KerasAdapter];
    let adapter = adapters
        .into_iter()
        .find(|a| a.accepts(v))
        .ok_or_else(|| RequestError::schema("architecture is neither a layer list nor a Keras model"))?;
    adapter.to_architecture(v).map_err(|e| RequestError::schema(e.to_string()))
}

/// Fields missing from the object take their defaults; unknown fields are rejected.
pub fn parse_hls_config(v: &Value) -> Result<HlsConfig, RequestError> {
    let obj = v.as_object().ok_or_else(|| RequestError::schema("hls_config must be an object"))?;
    let Value::Object(mut merged) = serde_json::to_value(HlsConfig::default()).expect("config serializes") else {
        unreachable!()
    };
    for (k, val) in obj {
        if !merged.contains_key(k) && k != "layer_reuse_factors" {
            return Err(RequestError::schema(format!("unknown hls_config field `{k}`")));
        }
        merged.insert(k.clone(), val.clone());
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| RequestError::schema(format!("hls_config: {e}")))
}

pub fn parse_request(v: &Value) -> Result<EstimateRequest, RequestError> {
    let obj = v.as_object().ok_or_else(|| RequestError::schema("request must be a JSON object"))?;
    const KNOWN: [&str; 4] = ["architecture", "hls_config", "model_kind", "checkpoint"];
    if let Some(k) = obj.keys().find(|k| !KNOWN.contains(&k.as_str())) {
        return Err(RequestError::schema(format!("unknown field `{k}`")));
    }
    let field = |name: &str| obj.get(name).ok_or_else(|| RequestError::schema(format!("missing field `{name}`")));
    let architecture = parse_architecture(field("architecture")?)?;
    let hls_config = parse_hls_config(field("hls_config")?)?;
    let report = validate_design(&architecture, &hls_config);
    if !report.is_valid() {
        let detail = serde_json::to_string(&report.violations).expect("violations serialize");
        return Err(RequestError::schema(format!("design fails validation: {detail}")));
    }
    let model_kind = match obj.get("model_kind") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.parse().map_err(RequestError::schema)?),
        Some(_) => return Err(RequestError::schema("model_kind must be a string")),
    };
    let checkpoint = match obj.get("checkpoint") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(RequestError::schema("checkpoint must be a string")),
    };
    if model_kind.is_none() && checkpoint.is_none() {
        return Err(RequestError::schema("either model_kind or checkpoint is required"));
    }
    Ok(EstimateRequest { architecture, hls_config, model_kind, checkpoint })
}

#[derive(Debug)]
pub struct LoadedModel {
    pub meta: ModelMeta,
    pub path: Option<PathBuf>,
    pub model: TrainedModel,
}

impl LoadedModel {
    pub fn new(model: TrainedModel, path: Option<PathBuf>) -> Self {
        let hash = model.checkpoint_hash().to_string();
        let meta = ModelMeta {
            id: hash[..12].to_string(),
            kind: model.kind(),
            checkpoint_hash: hash,
            feature_layout_version: model.feature_layout_version(),
            cost_model_version: model.cost_model_version.clone(),
        };
        Self { meta, path, model }
    }

    pub fn catalog_entry(&self) -> CatalogEntry {
        CatalogEntry { meta: self.meta.clone(), description: self.model.describe(), path: self.path.clone() }
    }

    /// Runs one estimate; the request must already be validated.
    pub fn estimate(&self, req: &EstimateRequest) -> Result<EstimateResponse, RequestError> {
        let start = Instant::now();
        let predictions = self.model.predict(&req.architecture, &req.hls_config).map_err(|e| match e {
            PredictionError::Feature(f @ FeatureError::TooDeep { .. }) => RequestError::unprocessable("too_deep", f.to_string()),
            PredictionError::Feature(f) => RequestError::schema(f.to_string()),
            PredictionError::UnknownCategory(u) => RequestError::unprocessable("unknown_category", u.to_string()),
        })?;
        let inference_ms = start.elapsed().as_secs_f64() * 1e3;
        Ok(EstimateResponse {
            predictions,
            model: self.meta.clone(),
            inference_ms,
            bops: bops(&req.architecture, &req.hls_config),
        })
    }
}

/// The immutable set of checkpoints a service instance answers from.
#[derive(Debug, Default)]
pub struct Registry {
    models: Vec<Arc<LoadedModel>>,
}

impl Registry {
    pub fn new(models: Vec<LoadedModel>) -> Self {
        let mut models: Vec<Arc<LoadedModel>> = models.into_iter().map(Arc::new).collect();
        models.sort_by(|a, b| (a.meta.kind, &a.meta.id).cmp(&(b.meta.kind, &b.meta.id)));
        models.dedup_by(|a, b| a.meta.checkpoint_hash == b.meta.checkpoint_hash);
        Self { models }
    }

    /// Loads explicit checkpoint files plus every `*.ckpt` file in `dir`.
    pub fn load(paths: &[PathBuf], dir: Option<&Path>) -> anyhow::Result<Self> {
        let mut files: Vec<PathBuf> = paths.to_vec();
        if let Some(dir) = dir.filter(|d| d.is_dir()) {
            let mut found: Vec<PathBuf> = std::fs::read_dir(dir)
                .with_context(|| format!("listing {}", dir.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "ckpt"))
                .collect();
            found.sort();
            files.extend(found);
        }
        let models = files
            .into_iter()
            .map(|p| load_model(&p).map(|m| LoadedModel::new(m, Some(p))))
            .collect::<anyhow::Result<Vec<_>>>()?;
        Ok(Self::new(models))
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn catalog(&self) -> Vec<CatalogEntry> {
        self.models.iter().map(|m| m.catalog_entry()).collect()
    }

    /// Picks the requested checkpoint (by id or full hash), or the first one
    /// of the requested kind.
    pub fn resolve(&self, req: &EstimateRequest) -> Result<Arc<LoadedModel>, RequestError> {
        let found = match &req.checkpoint {
            Some(id) => self
                .models
                .iter()
                .find(|m| m.meta.id == *id || m.meta.checkpoint_hash == *id)
                .ok_or_else(|| RequestError::not_found(format!("no checkpoint `{id}`")))?,
            None => {
                let kind = req.model_kind.expect("parse_request requires kind or checkpoint");
                self.models
                    .iter()
                    .find(|m| m.meta.kind == kind)
                    .ok_or_else(|| RequestError::not_found(format!("no {kind} checkpoint loaded")))?
            }
        };
        if let Some(kind) = req.model_kind.filter(|k| *k != found.meta.kind) {
            return Err(RequestError::schema(format!("checkpoint `{}` is a {}, not a {kind}", found.meta.id, found.meta.kind)));
        }
        Ok(found.clone())
    }

    pub fn estimate_value(&self, v: &Value) -> Result<EstimateResponse, RequestError> {
        let req = parse_request(v)?;
        self.resolve(&req)?.estimate(&req)
    }
}

pub fn load_model(path: &Path) -> anyhow::Result<TrainedModel> {
    read_checkpoint(path).map_err(|e| {
        let tag = match &e {
            CheckpointError::VersionMismatch { .. } => "VersionMismatch",
            CheckpointError::CorruptCheckpoint(_) => "CorruptCheckpoint",
            CheckpointError::Io { .. } => "Io",
        };
        anyhow::anyhow!("cannot load checkpoint {}: {tag}: {e}", path.display())
    })
}

/// Builds a request object from separate architecture and config documents.
pub fn request_value(architecture: Value, hls_config: Value, checkpoint: Option<String>) -> Value {
    let mut m = Map::new();
    m.insert("architecture".into(), architecture);
    m.insert("hls_config".into(), hls_config);
    if let Some(c) = checkpoint {
        m.insert("checkpoint".into(), Value::String(c));
    }
    Value::Object(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn config_defaults_and_unknown_fields() {
        let c = parse_hls_config(&json!({"reuse_factor": 4, "strategy": "latency"})).unwrap();
        assert_eq!(c.reuse_factor, 4);
        assert_eq!(c.precision_total_bits, HlsConfig::default().precision_total_bits);
        assert_eq!(parse_hls_config(&json!({"reuse": 4})).unwrap_err().status, 400);
        assert_eq!(parse_hls_config(&json!({"reuse_factor": "x"})).unwrap_err().status, 400);
        assert_eq!(parse_hls_config(&json!([1])).unwrap_err().status, 400);
    }

    #[test]
    fn request_shape() {
        let ok = json!({"architecture": "Jet", "hls_config": {}, "model_kind": "gnn"});
        let r = parse_request(&ok).unwrap();
        assert_eq!(r.architecture, exemplar("jet").unwrap());
        assert_eq!(r.model_kind, Some(ModelKind::Gnn));
        for bad in [
            json!({"architecture": "Jet", "model_kind": "gnn"}),
            json!({"architecture": "Nope", "hls_config": {}, "model_kind": "gnn"}),
            json!({"architecture": "Jet", "hls_config": {}}),
            json!({"architecture": "Jet", "hls_config": {}, "model_kind": "cnn"}),
            json!({"architecture": "Jet", "hls_config": {"reuse_factor": 0}, "model_kind": "gnn"}),
            json!({"architecture": "Jet", "hls_config": {}, "model_kind": "gnn", "extra": 1}),
            json!([]),
        ] {
            assert_eq!(parse_request(&bad).unwrap_err().status, 400, "{bad}");
        }
    }
}

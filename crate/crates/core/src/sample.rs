//! The nine-field synthesis record and its JSON wire format.
//!
//! Wire layout (field names are fixed):
//!
//! ```text
//! meta_data, model_config, hls_config, resource_report, hls_resource_report,
//! latency_report, target_part, vivado_version, hls4ml_version
//! ```
//!
//! `model_config` uses the neutral layer-list schema (`{"name", "layers": [...]}`
//! with [`LayerSpec`] entries). Keras-style `{"class_name", "config"}` model
//! JSON is accepted through [`KerasAdapter`]; other encodings can be plugged
//! in with [`ModelConfigAdapter`]. `hls_config` is either the neutral form
//! written by [`to_json`] or an hls4ml configuration dictionary.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::arch::{Activation, ArchBuilder, LayerKind, LayerSpec, NetworkArchitecture, Padding};
use crate::config::{parse_precision, HlsConfig, IoType, Strategy};
use crate::targets::TargetVector;

pub const FIELD_NAMES: [&str; 9] = [
    "meta_data",
    "model_config",
    "hls_config",
    "resource_report",
    "hls_resource_report",
    "latency_report",
    "target_part",
    "vivado_version",
    "hls4ml_version",
];

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("malformed architecture: {0}")]
    MalformedArchitecture(String),
    #[error("invalid field `{field}`: {reason}")]
    InvalidField { field: String, reason: String },
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchemaWarning {
    UnknownField(String),
}

impl std::fmt::Display for SchemaWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SchemaWarning::UnknownField(name) => write!(f, "unrecognized top-level field `{name}` ignored"),
        }
    }
}

/// Subset provenance. Not part of the record; carried alongside it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub enum GroupTag {
    #[serde(rename = "2_20")]
    TwoTwenty,
    #[serde(rename = "2_layer")]
    TwoLayer,
    #[serde(rename = "3_layer")]
    ThreeLayer,
    #[serde(rename = "conv1d")]
    Conv1d,
    #[serde(rename = "conv2d")]
    Conv2d,
    #[serde(rename = "latency")]
    Latency,
    #[serde(rename = "resource")]
    Resource,
    #[serde(rename = "exemplar")]
    Exemplar,
    #[default]
    #[serde(rename = "unknown")]
    Unknown,
}

impl GroupTag {
    pub const ALL: [GroupTag; 9] = [
        GroupTag::TwoTwenty,
        GroupTag::TwoLayer,
        GroupTag::ThreeLayer,
        GroupTag::Conv1d,
        GroupTag::Conv2d,
        GroupTag::Latency,
        GroupTag::Resource,
        GroupTag::Exemplar,
        GroupTag::Unknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GroupTag::TwoTwenty => "2_20",
            GroupTag::TwoLayer => "2_layer",
            GroupTag::ThreeLayer => "3_layer",
            GroupTag::Conv1d => "conv1d",
            GroupTag::Conv2d => "conv2d",
            GroupTag::Latency => "latency",
            GroupTag::Resource => "resource",
            GroupTag::Exemplar => "exemplar",
            GroupTag::Unknown => "unknown",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        GroupTag::ALL.into_iter().find(|g| g.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaData {
    pub id: String,
    pub model_name: String,
    pub artifact_tarball_name: String,
    /// Set when labels come from the pseudo-synthesis cost model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_model_version: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ResourceReport {
    #[serde(alias = "BRAM", alias = "bram_18k", alias = "BRAM_18K")]
    pub bram: f64,
    #[serde(alias = "DSP", alias = "dsp48e", alias = "DSP48E")]
    pub dsp: f64,
    #[serde(alias = "FF")]
    pub ff: f64,
    #[serde(alias = "LUT")]
    pub lut: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencyReport {
    #[serde(alias = "cycles_max", alias = "latency_max", alias = "latency")]
    pub cycles: f64,
    #[serde(alias = "interval_max", alias = "II", alias = "interval")]
    pub ii: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub meta: MetaData,
    pub architecture: NetworkArchitecture,
    pub hls_config: HlsConfig,
    /// Post logic-synthesis counts (ground truth for the resource targets).
    pub resource_report: ResourceReport,
    /// Post-HLS estimates.
    pub hls_resource_report: ResourceReport,
    pub latency_report: LatencyReport,
    pub group: GroupTag,
}

impl Sample {
    pub fn id(&self) -> &str {
        &self.meta.id
    }

    pub fn targets(&self) -> TargetVector {
        let r = &self.resource_report;
        TargetVector {
            bram: r.bram,
            dsp: r.dsp,
            ff: r.ff,
            lut: r.lut,
            cycles: self.latency_report.cycles,
            ii: self.latency_report.ii,
        }
    }
}

/// Converts a framework-specific `model_config` value into the neutral
/// layer list.
pub trait ModelConfigAdapter {
    fn accepts(&self, model_config: &Value) -> bool;
    fn to_architecture(&self, model_config: &Value) -> Result<NetworkArchitecture, SchemaError>;
}

/// The neutral `{"name", "layers": [LayerSpec...]}` schema.
pub struct NeutralAdapter;

impl ModelConfigAdapter for NeutralAdapter {
    fn accepts(&self, v: &Value) -> bool {
        v.get("layers")
            .and_then(Value::as_array)
            .is_some_and(|ls| ls.iter().all(|l| l.get("kind").is_some()))
    }

    fn to_architecture(&self, v: &Value) -> Result<NetworkArchitecture, SchemaError> {
        let arch: NetworkArchitecture = serde_json::from_value(v.clone())
            .map_err(|e| SchemaError::MalformedArchitecture(e.to_string()))?;
        check_chain(&arch)?;
        Ok(arch)
    }
}

/// Keras / QKeras `model.to_json()` output (Sequential or Functional with a
/// linear layer chain).
pub struct KerasAdapter;

impl ModelConfigAdapter for KerasAdapter {
    fn accepts(&self, v: &Value) -> bool {
        keras_layers(v).is_some()
    }

    fn to_architecture(&self, v: &Value) -> Result<NetworkArchitecture, SchemaError> {
        let layers = keras_layers(v)
            .ok_or_else(|| SchemaError::MalformedArchitecture("no Keras layer list".into()))?;
        let name = v
            .pointer("/config/name")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        let mut builder: Option<ArchBuilder> = None;
        for (i, layer) in layers.iter().enumerate() {
            let class = layer.get("class_name").and_then(Value::as_str).unwrap_or_default();
            let cfg = layer.get("config").cloned().unwrap_or(Value::Null);
            let bad = |why: &str| SchemaError::MalformedArchitecture(format!("layer {i} ({class}): {why}"));
            if builder.is_none() {
                let shape = cfg
                    .get("batch_input_shape")
                    .or_else(|| cfg.get("batch_shape"))
                    .and_then(Value::as_array)
                    .ok_or_else(|| bad("first layer carries no input shape"))?;
                let dims: Vec<u64> = shape.iter().skip(1).filter_map(Value::as_u64).collect();
                builder = Some(match dims.as_slice() {
                    [n] => ArchBuilder::flat(*n),
                    [l, c] => ArchBuilder::seq(*l, *c),
                    [h, w, c] => ArchBuilder::image(*h, *w, *c),
                    _ => return Err(bad("unsupported input rank")),
                });
                if class == "InputLayer" {
                    continue;
                }
            }
            let b = builder.take().expect("builder initialised above");
            let spec = keras_layer_spec(class, &cfg, b.shape()).map_err(|e| bad(&e))?;
            builder = Some(match spec {
                Some(spec) => b.try_push(spec).ok_or_else(|| bad("shape does not chain"))?,
                None => b,
            });
        }
        let arch = builder
            .ok_or_else(|| SchemaError::MalformedArchitecture("empty layer list".into()))?
            .build(name);
        Ok(arch)
    }
}

fn keras_layers(v: &Value) -> Option<&Vec<Value>> {
    let layers = v
        .pointer("/config/layers")
        .or_else(|| v.get("layers"))
        .and_then(Value::as_array)?;
    layers.iter().all(|l| l.get("class_name").is_some()).then_some(layers)
}

fn keras_activation(s: &str) -> Activation {
    let s = s.to_ascii_lowercase();
    if s.contains("relu") {
        Activation::Relu
    } else if s.contains("tanh") {
        Activation::Tanh
    } else if s.contains("sigmoid") {
        Activation::Sigmoid
    } else if s.contains("softmax") {
        Activation::Softmax
    } else {
        Activation::Linear
    }
}

fn first_int(v: Option<&Value>) -> Option<u64> {
    match v? {
        Value::Number(n) => n.as_u64(),
        Value::Array(a) => a.first()?.as_u64(),
        _ => None,
    }
}

fn keras_layer_spec(class: &str, cfg: &Value, shape: [u64; 3]) -> Result<Option<LayerSpec>, String> {
    let act = cfg
        .get("activation")
        .and_then(Value::as_str)
        .map(keras_activation)
        .unwrap_or_default();
    let padding = match cfg.get("padding").and_then(Value::as_str) {
        Some("same") => Padding::Same,
        _ => Padding::Valid,
    };
    let base = |kind: LayerKind, units: u64| {
        let mut l = ArchBuilder::blank(kind, units);
        l.activation = act;
        l
    };
    let class = class.trim_start_matches('Q');
    let spec = match class {
        "Dense" => {
            let units = cfg.get("units").and_then(Value::as_u64).ok_or("missing units")?;
            base(LayerKind::Dense, units)
        }
        "Conv1D" | "Conv2D" => {
            let kind = if class == "Conv1D" { LayerKind::Conv1d } else { LayerKind::Conv2d };
            let filters = cfg.get("filters").and_then(Value::as_u64).ok_or("missing filters")?;
            let mut l = base(kind, filters);
            l.kernel_size = first_int(cfg.get("kernel_size")).ok_or("missing kernel_size")?;
            l.stride = first_int(cfg.get("strides")).unwrap_or(1);
            l.padding = padding;
            l
        }
        "MaxPooling1D" | "MaxPooling2D" | "AveragePooling1D" | "AveragePooling2D" => {
            let kind = match class {
                "MaxPooling1D" => LayerKind::MaxPool1d,
                "MaxPooling2D" => LayerKind::MaxPool2d,
                "AveragePooling1D" => LayerKind::AvgPool1d,
                _ => LayerKind::AvgPool2d,
            };
            let size = first_int(cfg.get("pool_size")).unwrap_or(2);
            let mut l = base(kind, crate::arch::channels_of(shape));
            l.kernel_size = size;
            l.stride = first_int(cfg.get("strides")).unwrap_or(size);
            l.padding = padding;
            l.activation = Activation::Linear;
            l
        }
        "Flatten" => base(LayerKind::Flatten, shape.iter().product()),
        "Activation" | "ReLU" | "Softmax" => {
            let mut l = base(LayerKind::Activation, crate::arch::channels_of(shape));
            l.activation = match class {
                "ReLU" => Activation::Relu,
                "Softmax" => Activation::Softmax,
                _ => act,
            };
            l
        }
        "BatchNormalization" => base(LayerKind::BatchNorm, crate::arch::channels_of(shape)),
        "Dropout" | "InputLayer" => return Ok(None),
        other => return Err(format!("unsupported layer class {other}")),
    };
    Ok(Some(spec))
}

/// Checks that every layer's output feeds the next layer's input.
pub fn check_chain(arch: &NetworkArchitecture) -> Result<(), SchemaError> {
    if arch.layers.is_empty() {
        return Err(SchemaError::MalformedArchitecture("empty layer list".into()));
    }
    for (i, pair) in arch.layers.windows(2).enumerate() {
        if pair[0].out_shape != pair[1].in_shape {
            return Err(SchemaError::MalformedArchitecture(format!(
                "layer {} output {:?} does not match layer {} input {:?}",
                i,
                pair[0].out_shape,
                i + 1,
                pair[1].in_shape
            )));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct WireHlsConfig<'a> {
    precision: String,
    reuse_factor: u64,
    strategy: Strategy,
    io_type: IoType,
    clock_period_ns: f64,
    #[serde(skip_serializing_if = "<[Option<u64>]>::is_empty")]
    layer_reuse_factors: &'a [Option<u64>],
}

#[derive(Serialize)]
struct WireRecord<'a> {
    meta_data: &'a MetaData,
    model_config: &'a NetworkArchitecture,
    hls_config: WireHlsConfig<'a>,
    resource_report: &'a ResourceReport,
    hls_resource_report: &'a ResourceReport,
    latency_report: &'a LatencyReport,
    target_part: &'a str,
    vivado_version: &'a str,
    hls4ml_version: &'a str,
}

fn wire(s: &Sample) -> WireRecord<'_> {
    let c = &s.hls_config;
    WireRecord {
        meta_data: &s.meta,
        model_config: &s.architecture,
        hls_config: WireHlsConfig {
            precision: c.precision_string(),
            reuse_factor: c.reuse_factor,
            strategy: c.strategy,
            io_type: c.io_type,
            clock_period_ns: c.clock_ns,
            layer_reuse_factors: &c.layer_reuse_factors,
        },
        resource_report: &s.resource_report,
        hls_resource_report: &s.hls_resource_report,
        latency_report: &s.latency_report,
        target_part: &c.target_part,
        vivado_version: &c.vivado_version,
        hls4ml_version: &c.hls4ml_version,
    }
}

/// Canonical single-line serialization with stable key order.
pub fn to_json(s: &Sample) -> String {
    serde_json::to_string(&wire(s)).expect("record serialization is infallible")
}

pub fn to_value(s: &Sample) -> Value {
    serde_json::to_value(wire(s)).expect("record serialization is infallible")
}

#[derive(Debug, Clone)]
pub struct ParsedSample {
    pub sample: Sample,
    pub warnings: Vec<SchemaWarning>,
}

/// Parses one record, logging any schema warnings.
pub fn parse_sample(raw: &str) -> Result<Sample, SchemaError> {
    let parsed = parse_sample_detailed(raw)?;
    for w in &parsed.warnings {
        tracing::warn!(id = %parsed.sample.meta.id, "{w}");
    }
    Ok(parsed.sample)
}

pub fn parse_sample_detailed(raw: &str) -> Result<ParsedSample, SchemaError> {
    let value: Value = serde_json::from_str(raw)?;
    parse_value(&value, &[&NeutralAdapter, &KerasAdapter])
}

/// Parses a record with an explicit adapter list (tried in order).
pub fn parse_value(value: &Value, adapters: &[&dyn ModelConfigAdapter]) -> Result<ParsedSample, SchemaError> {
    let obj = value.as_object().ok_or_else(|| SchemaError::InvalidField {
        field: "<root>".into(),
        reason: "record is not a JSON object".into(),
    })?;
    for name in FIELD_NAMES {
        if !obj.contains_key(name) {
            return Err(SchemaError::MissingField(name.to_string()));
        }
    }
    let warnings = obj
        .keys()
        .filter(|k| !FIELD_NAMES.contains(&k.as_str()))
        .map(|k| SchemaWarning::UnknownField(k.clone()))
        .collect();

    let meta: MetaData = field(obj, "meta_data")?;
    let mc = &obj["model_config"];
    let adapter = adapters
        .iter()
        .find(|a| a.accepts(mc))
        .ok_or_else(|| SchemaError::MalformedArchitecture("unrecognised model_config encoding".into()))?;
    let architecture = adapter.to_architecture(mc)?;

    let text = |name: &str| -> Result<String, SchemaError> {
        obj[name].as_str().map(str::to_string).ok_or_else(|| SchemaError::InvalidField {
            field: name.into(),
            reason: "expected a string".into(),
        })
    };
    let mut hls_config = parse_hls_config(&obj["hls_config"])?;
    hls_config.target_part = text("target_part")?;
    hls_config.vivado_version = text("vivado_version")?;
    hls_config.hls4ml_version = text("hls4ml_version")?;

    let sample = Sample {
        meta,
        architecture,
        hls_config,
        resource_report: field(obj, "resource_report")?,
        hls_resource_report: field(obj, "hls_resource_report")?,
        latency_report: field(obj, "latency_report")?,
        group: GroupTag::Unknown,
    };
    Ok(ParsedSample { sample, warnings })
}

fn field<T: serde::de::DeserializeOwned>(obj: &Map<String, Value>, name: &str) -> Result<T, SchemaError> {
    serde_json::from_value(obj[name].clone()).map_err(|e| SchemaError::InvalidField {
        field: name.into(),
        reason: e.to_string(),
    })
}

fn parse_hls_config(v: &Value) -> Result<HlsConfig, SchemaError> {
    let invalid = |reason: String| SchemaError::InvalidField { field: "hls_config".into(), reason };
    let lookup = |obj: &Value, keys: &[&str]| -> Option<Value> {
        keys.iter().find_map(|k| obj.get(*k).cloned())
    };
    // hls4ml dictionaries keep model-level settings under "Model".
    let model = v.get("Model").unwrap_or(v);

    let precision = lookup(model, &["precision", "Precision"]).ok_or_else(|| invalid("missing precision".into()))?;
    let precision = match &precision {
        Value::String(s) => s.clone(),
        Value::Object(m) => m
            .get("default")
            .or_else(|| m.get("weight"))
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| invalid("precision object has no default".into()))?,
        _ => return Err(invalid("precision must be a string".into())),
    };
    let (total, int) = parse_precision(&precision).ok_or_else(|| invalid(format!("bad precision `{precision}`")))?;
    let reuse = lookup(model, &["reuse_factor", "ReuseFactor"])
        .and_then(|r| r.as_u64())
        .ok_or_else(|| invalid("missing reuse_factor".into()))?;
    let strategy = lookup(model, &["strategy", "Strategy"])
        .and_then(|s| s.as_str().and_then(Strategy::parse))
        .unwrap_or(Strategy::Latency);
    let io_type = lookup(v, &["io_type", "IOType"])
        .and_then(|s| s.as_str().and_then(IoType::parse))
        .unwrap_or(IoType::IoParallel);
    let clock_ns = lookup(v, &["clock_period_ns", "ClockPeriod"])
        .and_then(|c| c.as_f64())
        .unwrap_or(5.0);
    let layer_reuse_factors = match v.get("layer_reuse_factors") {
        Some(l) => serde_json::from_value(l.clone()).map_err(|e| invalid(e.to_string()))?,
        None => Vec::new(),
    };
    Ok(HlsConfig {
        precision_total_bits: total,
        precision_int_bits: int,
        reuse_factor: reuse,
        strategy,
        io_type,
        clock_ns,
        layer_reuse_factors,
        ..HlsConfig::default()
    })
}

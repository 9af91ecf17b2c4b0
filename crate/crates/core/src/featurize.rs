//! Model-input encodings: per-layer feature vectors, the dataflow graph, the
//! padded token sequence and the aggregate (MLP) block, plus training-set
//! normalization and bit-operation counts.
//!
//! Per-layer slots (raw, before encoding):
//!
//! | slot  | content                         |
//! |-------|---------------------------------|
//! | 0..3  | input dims                      |
//! | 3..6  | output dims                     |
//! | 6     | precision total bits            |
//! | 7     | precision integer bits          |
//! | 8     | model-level target reuse factor |
//! | 9     | layer type code                 |
//! | 10    | activation code                 |
//! | 11    | units / filters                 |
//! | 12    | kernel size                     |
//! | 13    | stride                          |
//! | 14    | padding code                    |
//! | 15    | batch-norm flag                 |
//! | 16    | strategy code                   |
//! | 17    | I/O type code                   |
//!
//! Encoded node / token rows are `[13 numeric | one-hot layer, activation,
//! padding | one-hot strategy, I/O]`, [`NODE_WIDTH`] columns in total.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{Activation, LayerKind, LayerSpec, NetworkArchitecture, Padding};
use crate::config::{part_code, HlsConfig, IoType, Strategy, KNOWN_PARTS};
use crate::dataset::Dataset;
use crate::targets::TargetVector;

/// Bumped whenever any encoding below changes shape or meaning.
pub const FEATURE_LAYOUT_VERSION: u32 = 1;

pub const SLOT_COUNT: usize = 18;
pub const MAX_LAYERS: usize = 51;
/// CLS slot plus [`MAX_LAYERS`].
pub const SEQ_LEN: usize = MAX_LAYERS + 1;

pub const SLOT_NAMES: [&str; SLOT_COUNT] = [
    "in_dim0",
    "in_dim1",
    "in_dim2",
    "out_dim0",
    "out_dim1",
    "out_dim2",
    "precision_total_bits",
    "precision_int_bits",
    "reuse_factor",
    "layer_type_code",
    "activation_code",
    "filters",
    "kernel_size",
    "stride",
    "padding_code",
    "batchnorm_flag",
    "strategy_code",
    "io_type_code",
];

/// Raw slots that are copied into the numeric block, in order.
pub const NUMERIC_SLOTS: [usize; 13] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 11, 12, 13, 15];
/// Numeric-block columns that are log1p-compressed before standardization.
const LOG_NUMERIC: [bool; 13] = [true, true, true, true, true, true, false, false, true, true, true, true, false];

pub const NUMERIC_WIDTH: usize = NUMERIC_SLOTS.len();
pub const ONE_HOT_WIDTH: usize = LayerKind::ALL.len() + Activation::ALL.len() + Padding::ALL.len();
pub const GLOBAL_WIDTH: usize = Strategy::ALL.len() + IoType::ALL.len();
pub const NODE_WIDTH: usize = NUMERIC_WIDTH + ONE_HOT_WIDTH + GLOBAL_WIDTH;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FeatureError {
    #[error("architecture has {layers} layers; the sequence encoding holds at most {max}")]
    TooDeep { layers: usize, max: usize },
    #[error("architecture has no layers")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; SLOT_COUNT]);

pub fn layer_features(l: &LayerSpec, c: &HlsConfig) -> FeatureVector {
    let mut s = [0.0; SLOT_COUNT];
    for d in 0..3 {
        s[d] = l.in_shape[d] as f64;
        s[3 + d] = l.out_shape[d] as f64;
    }
    s[6] = c.precision_total_bits as f64;
    s[7] = c.precision_int_bits as f64;
    s[8] = c.reuse_factor as f64;
    s[9] = l.kind.code() as f64;
    s[10] = l.activation.code() as f64;
    s[11] = l.units as f64;
    let dense_like = !(l.kind.is_conv() || l.kind.is_pool());
    s[12] = if dense_like { 1.0 } else { l.kernel_size as f64 };
    s[13] = if dense_like { 1.0 } else { l.stride as f64 };
    s[14] = l.padding.code() as f64;
    s[15] = f64::from(u8::from(l.kind == LayerKind::BatchNorm));
    s[16] = c.strategy.code() as f64;
    s[17] = c.io_type.code() as f64;
    FeatureVector(s)
}

fn global_block(c: &HlsConfig) -> [f64; GLOBAL_WIDTH] {
    let mut g = [0.0; GLOBAL_WIDTH];
    g[c.strategy.code()] = 1.0;
    g[Strategy::ALL.len() + c.io_type.code()] = 1.0;
    g
}

/// Expands the 18 raw slots into an encoded row (numeric block unscaled).
pub fn encode_row(f: &FeatureVector) -> Vec<f64> {
    let s = &f.0;
    let mut row = Vec::with_capacity(NODE_WIDTH);
    row.extend(NUMERIC_SLOTS.iter().map(|&i| s[i]));
    let mut onehot = [0.0; ONE_HOT_WIDTH];
    onehot[s[9] as usize] = 1.0;
    onehot[LayerKind::ALL.len() + s[10] as usize] = 1.0;
    onehot[LayerKind::ALL.len() + Activation::ALL.len() + s[14] as usize] = 1.0;
    row.extend_from_slice(&onehot);
    let mut g = [0.0; GLOBAL_WIDTH];
    g[s[16] as usize] = 1.0;
    g[Strategy::ALL.len() + s[17] as usize] = 1.0;
    row.extend_from_slice(&g);
    row
}

fn encoded_rows(a: &NetworkArchitecture, c: &HlsConfig) -> Vec<Vec<f64>> {
    a.layers.iter().map(|l| encode_row(&layer_features(l, c))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGraph {
    /// One encoded row per layer, declaration order.
    pub nodes: Vec<Vec<f64>>,
    /// `(source, target)` pairs: sequential dataflow edges, then self-loops.
    pub edges: Vec<(usize, usize)>,
    pub global: Vec<f64>,
}

impl FeatureGraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> FeatureGraph {
        assert_eq!(perm.len(), self.nodes.len());
        let mut nodes = vec![Vec::new(); self.nodes.len()];
        for (i, row) in self.nodes.iter().enumerate() {
            nodes[perm[i]] = row.clone();
        }
        let edges = self.edges.iter().map(|&(s, t)| (perm[s], perm[t])).collect();
        FeatureGraph { nodes, edges, global: self.global.clone() }
    }
}

pub fn build_graph(a: &NetworkArchitecture, c: &HlsConfig) -> Result<FeatureGraph, FeatureError> {
    if a.layers.is_empty() {
        return Err(FeatureError::Empty);
    }
    let n = a.layers.len();
    let mut edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    edges.extend((0..n).map(|i| (i, i)));
    Ok(FeatureGraph { nodes: encoded_rows(a, c), edges, global: global_block(c).to_vec() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaddedSequence {
    /// [`SEQ_LEN`] rows; row 0 is the CLS slot (zeros, replaced by the model).
    pub tokens: Vec<Vec<f64>>,
    pub mask: Vec<bool>,
    /// CLS plus real layers.
    pub length: usize,
}

impl PaddedSequence {
    /// Drops padded rows past `rows`; masked rows carry no information.
    pub fn truncated(&self, rows: usize) -> PaddedSequence {
        let rows = rows.max(self.length);
        PaddedSequence {
            tokens: self.tokens[..rows].to_vec(),
            mask: self.mask[..rows].to_vec(),
            length: self.length,
        }
    }

    /// Appends `extra` zero rows with a false mask.
    pub fn padded(&self, extra: usize) -> PaddedSequence {
        let mut s = self.clone();
        let w = s.tokens.first().map_or(NODE_WIDTH, Vec::len);
        s.tokens.extend(std::iter::repeat_n(vec![0.0; w], extra));
        s.mask.extend(std::iter::repeat_n(false, extra));
        s
    }
}

pub fn build_sequence(a: &NetworkArchitecture, c: &HlsConfig) -> Result<PaddedSequence, FeatureError> {
    if a.layers.is_empty() {
        return Err(FeatureError::Empty);
    }
    if a.layers.len() > MAX_LAYERS {
        return Err(FeatureError::TooDeep { layers: a.layers.len(), max: MAX_LAYERS });
    }
    let mut tokens = vec![vec![0.0; NODE_WIDTH]; SEQ_LEN];
    let mut mask = vec![false; SEQ_LEN];
    mask[0] = true;
    for (i, row) in encoded_rows(a, c).into_iter().enumerate() {
        tokens[i + 1] = row;
        mask[i + 1] = true;
    }
    Ok(PaddedSequence { tokens, mask, length: a.layers.len() + 1 })
}

pub const MLP_NUMERIC_NAMES: [&str; 18] = [
    "depth",
    "layer_count",
    "mean_width",
    "mean_precision_bits",
    "mean_precision_int_bits",
    "mean_reuse",
    "total_params",
    "mean_in_dim0",
    "mean_in_dim1",
    "mean_in_dim2",
    "mean_out_dim0",
    "mean_out_dim1",
    "mean_out_dim2",
    "mean_kernel",
    "mean_stride",
    "total_macs",
    "total_mac_outputs",
    "total_bops",
];
pub const MLP_NUMERIC_WIDTH: usize = MLP_NUMERIC_NAMES.len();
/// Ordinal vocabularies: strategy, I/O type, target part.
pub const MLP_CATEGORY_SIZES: [usize; 3] = [Strategy::ALL.len(), IoType::ALL.len(), KNOWN_PARTS.len()];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpFeatures {
    pub numeric: Vec<f64>,
    /// Strategy, I/O type and target-part ordinal codes. An unknown part
    /// encodes as `KNOWN_PARTS.len()`, outside the vocabulary.
    pub categorical: [usize; 3],
}

/// Averages over MAC layers plus whole-model totals.
pub fn aggregate_features(a: &NetworkArchitecture, c: &HlsConfig) -> MlpFeatures {
    let macs: Vec<&LayerSpec> = a.mac_layers().collect();
    let depth = macs.len() as f64;
    let mean = |f: &dyn Fn(&LayerSpec) -> f64| {
        if macs.is_empty() {
            0.0
        } else {
            macs.iter().map(|l| f(l)).sum::<f64>() / depth
        }
    };
    let total_macs: f64 = macs.iter().filter_map(|l| l.mac_geometry()).map(|(m, n)| (m * n) as f64).sum();
    let total_out: f64 = macs.iter().filter_map(|l| l.mac_geometry()).map(|(_, n)| n as f64).sum();
    let numeric = vec![
        depth,
        a.layers.len() as f64,
        mean(&|l| l.units as f64),
        c.precision_total_bits as f64,
        c.precision_int_bits as f64,
        c.reuse_factor as f64,
        a.param_count() as f64,
        mean(&|l| l.in_shape[0] as f64),
        mean(&|l| l.in_shape[1] as f64),
        mean(&|l| l.in_shape[2] as f64),
        mean(&|l| l.out_shape[0] as f64),
        mean(&|l| l.out_shape[1] as f64),
        mean(&|l| l.out_shape[2] as f64),
        mean(&|l| l.kernel_size as f64),
        mean(&|l| l.stride as f64),
        total_macs,
        total_out,
        bops(a, c) as f64,
    ];
    MlpFeatures {
        numeric,
        categorical: [c.strategy.code(), c.io_type.code(), part_code(&c.target_part)],
    }
}

/// Bit operations: `sum n*m*(b_w*b_a + b_w + b_a + ceil(log2 m))` over MAC
/// layers with `b_w = b_a = precision_total_bits`.
pub fn bops(a: &NetworkArchitecture, c: &HlsConfig) -> u64 {
    let b = c.precision_total_bits as u128;
    a.mac_layers()
        .filter_map(LayerSpec::mac_geometry)
        .map(|(m, n)| {
            let log_m = if m <= 1 { 0 } else { 64 - (m - 1).leading_zeros() as u128 };
            (n as u128) * (m as u128) * (b * b + 2 * b + log_m)
        })
        .sum::<u128>() as u64
}

/// Column-wise standardization, optionally after `log1p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub log: Vec<bool>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ColumnStats {
    fn fit<'a>(rows: impl Iterator<Item = &'a [f64]>, log: Vec<bool>) -> Self {
        let w = log.len();
        let mut n = 0.0;
        let mut sum = vec![0.0; w];
        let mut sq = vec![0.0; w];
        for row in rows {
            n += 1.0;
            for j in 0..w {
                let x = pre(row[j], log[j]);
                sum[j] += x;
                sq[j] += x * x;
            }
        }
        let n = f64::max(n, 1.0);
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let var = (s / n - m * m).max(0.0);
                let sd = var.sqrt();
                // constant columns normalize to zero instead of dividing by ~0
                if sd > 1e-12 { sd } else { 1.0 }
            })
            .collect();
        Self { log, mean, std }
    }

    pub fn apply_in_place(&self, row: &mut [f64]) {
        for (j, x) in row.iter_mut().take(self.mean.len()).enumerate() {
            *x = (pre(*x, self.log[j]) - self.mean[j]) / self.std[j];
        }
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(j, v)| {
                let x = v * self.std[j] + self.mean[j];
                if self.log[j] { x.exp_m1() } else { x }
            })
            .collect()
    }
}

fn pre(x: f64, log: bool) -> f64 {
    if log { x.max(0.0).ln_1p() } else { x }
}

/// Training-set statistics for every encoding and for the targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub layout_version: u32,
    /// Numeric block of node / token rows.
    pub node: ColumnStats,
    pub mlp: ColumnStats,
    /// `log1p` targets.
    pub targets: ColumnStats,
}

pub fn fit_normalizer(train: &Dataset) -> NormStats {
    let node_rows: Vec<Vec<f64>> = train
        .iter()
        .flat_map(|s| encoded_rows(&s.architecture, &s.hls_config))
        .collect();
    let mlp_rows: Vec<Vec<f64>> = train
        .iter()
        .map(|s| aggregate_features(&s.architecture, &s.hls_config).numeric)
        .collect();
    let target_rows: Vec<[f64; 6]> = train.iter().map(|s| s.targets().to_array()).collect();
    NormStats {
        layout_version: FEATURE_LAYOUT_VERSION,
        node: ColumnStats::fit(node_rows.iter().map(|r| &r[..NUMERIC_WIDTH]), LOG_NUMERIC.to_vec()),
        mlp: ColumnStats::fit(mlp_rows.iter().map(Vec::as_slice), vec![true; MLP_NUMERIC_WIDTH]),
        targets: ColumnStats::fit(target_rows.iter().map(|r| &r[..]), vec![true; 6]),
    }
}

impl NormStats {
    pub fn normalize_row(&self, row: &mut [f64]) {
        self.node.apply_in_place(&mut row[..NUMERIC_WIDTH]);
    }

    pub fn normalize_graph(&self, g: &mut FeatureGraph) {
        for row in &mut g.nodes {
            self.normalize_row(row);
        }
    }

    /// Normalizes real layer rows; CLS and padding rows stay zero.
    pub fn normalize_sequence(&self, s: &mut PaddedSequence) {
        for row in s.tokens.iter_mut().take(s.length).skip(1) {
            self.normalize_row(row);
        }
    }

    pub fn normalize_mlp(&self, f: &mut MlpFeatures) {
        self.mlp.apply_in_place(&mut f.numeric);
    }

    /// `log1p` then z-score.
    pub fn forward_targets(&self, t: &TargetVector) -> [f64; 6] {
        let mut v = t.to_array();
        self.targets.apply_in_place(&mut v);
        v
    }

    /// Exact inverse of [`Self::forward_targets`], clamped at zero.
    pub fn invert_targets(&self, z: &[f64]) -> TargetVector {
        let v = self.targets.invert(z);
        let mut out = [0.0; 6];
        for (o, x) in out.iter_mut().zip(v) {
            *o = if x.is_finite() { x.max(0.0) } else if x == f64::INFINITY { f64::MAX } else { 0.0 };
        }
        TargetVector::from_array(out)
    }
}

/// Machine-readable description of every encoding.
pub fn layout_descriptor() -> serde_json::Value {
    let mut node_cols: Vec<String> = NUMERIC_SLOTS.iter().map(|&i| SLOT_NAMES[i].to_string()).collect();
    node_cols.extend(LayerKind::ALL.iter().map(|k| format!("layer_type={}", json_name(k))));
    node_cols.extend(Activation::ALL.iter().map(|a| format!("activation={}", json_name(a))));
    node_cols.extend(Padding::ALL.iter().map(|p| format!("padding={}", json_name(p))));
    node_cols.extend(Strategy::ALL.iter().map(|s| format!("strategy={}", json_name(s))));
    node_cols.extend(IoType::ALL.iter().map(|s| format!("io_type={}", json_name(s))));
    serde_json::json!({
        "layout_version": FEATURE_LAYOUT_VERSION,
        "raw_slots": SLOT_NAMES,
        "node_columns": node_cols,
        "node_width": NODE_WIDTH,
        "numeric_width": NUMERIC_WIDTH,
        "numeric_log1p": LOG_NUMERIC,
        "global_columns": node_cols[NUMERIC_WIDTH + ONE_HOT_WIDTH..],
        "sequence_length": SEQ_LEN,
        "max_layers": MAX_LAYERS,
        "mlp_numeric": MLP_NUMERIC_NAMES,
        "mlp_categorical": {"strategy": Strategy::ALL.len(), "io_type": IoType::ALL.len(), "target_part": KNOWN_PARTS},
        "target_transform": "z-score of log1p(target); inverse clamps at 0",
    })
}

fn json_name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

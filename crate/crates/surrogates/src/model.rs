use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use wahls_core::arch::NetworkArchitecture;
use wahls_core::benchmark::{PredictError, Predictor, PredictorInfo};
use wahls_core::config::HlsConfig;
use wahls_core::dataset::Dataset;
use wahls_core::exec::Exec;
use wahls_core::featurize::{
    aggregate_features, build_graph, build_sequence, FeatureError, FeatureGraph, MlpFeatures, NormStats,
    PaddedSequence, FEATURE_LAYOUT_VERSION,
};
use wahls_core::sample::Sample;
use wahls_core::targets::{Target, TargetVector};

use crate::gnn::{GnnModel, GraphBatch};
use crate::mlp::{MlpBatch, MlpModel, UnknownCategory};
use crate::params::Params;
use crate::tape::Tape;
use crate::train::{EpochRecord, TrainConfig};
use crate::transformer::{SeqBatch, TransformerModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mlp,
    Gnn,
    Transformer,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Mlp, ModelKind::Gnn, ModelKind::Transformer];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Mlp => "mlp",
            ModelKind::Gnn => "gnn",
            ModelKind::Transformer => "transformer",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mlp" => Ok(ModelKind::Mlp),
            "gnn" => Ok(ModelKind::Gnn),
            "transformer" => Ok(ModelKind::Transformer),
            other => Err(format!("unknown model kind `{other}` (expected mlp, gnn or transformer)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredictionError {
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    UnknownCategory(#[from] UnknownCategory),
}

/// Network structure; parameter values live in [`TrainedModel::params`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Network {
    Mlp(MlpModel),
    Gnn(GnnModel),
    Transformer(TransformerModel),
}

impl Network {
    pub fn kind(&self) -> ModelKind {
        match self {
            Network::Mlp(_) => ModelKind::Mlp,
            Network::Gnn(_) => ModelKind::Gnn,
            Network::Transformer(_) => ModelKind::Transformer,
        }
    }
}

/// A featurized, normalized input for one estimator kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Encoded {
    Graph(FeatureGraph),
    Sequence(PaddedSequence),
    Mlp(MlpFeatures),
}

impl Encoded {
    pub fn graph(&self) -> &FeatureGraph {
        match self {
            Encoded::Graph(g) => g,
            _ => panic!("not a graph encoding"),
        }
    }

    pub fn sequence(&self) -> &PaddedSequence {
        match self {
            Encoded::Sequence(s) => s,
            _ => panic!("not a sequence encoding"),
        }
    }

    pub fn mlp(&self) -> &MlpFeatures {
        match self {
            Encoded::Mlp(f) => f,
            _ => panic!("not an aggregate encoding"),
        }
    }
}

pub fn encode(kind: ModelKind, norm: &NormStats, a: &NetworkArchitecture, c: &HlsConfig) -> Result<Encoded, PredictionError> {
    Ok(match kind {
        ModelKind::Gnn => {
            let mut g = build_graph(a, c)?;
            norm.normalize_graph(&mut g);
            Encoded::Graph(g)
        }
        ModelKind::Transformer => {
            let mut s = build_sequence(a, c)?;
            norm.normalize_sequence(&mut s);
            Encoded::Sequence(s)
        }
        ModelKind::Mlp => {
            let mut f = aggregate_features(a, c);
            MlpBatch::new(&[&f])?;
            norm.normalize_mlp(&mut f);
            Encoded::Mlp(f)
        }
    })
}

/// Encodes every sample; the error names the first failing sample.
pub fn encode_dataset(
    kind: ModelKind,
    norm: &NormStats,
    ds: &Dataset,
    exec: Exec,
) -> Result<Vec<Encoded>, (String, PredictionError)> {
    exec.map(ds.samples(), |s| encode(kind, norm, &s.architecture, &s.hls_config).map_err(|e| (s.meta.id.clone(), e)))
        .into_iter()
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub network: Network,
    pub params: Params,
    pub norm: NormStats,
    pub train_config: TrainConfig,
    pub history: Vec<EpochRecord>,
    /// Set when trained on pseudo-synthesis labels.
    pub cost_model_version: Option<String>,
    hash: OnceLock<String>,
}

impl PartialEq for TrainedModel {
    fn eq(&self, o: &Self) -> bool {
        self.network == o.network
            && self.params == o.params
            && self.norm == o.norm
            && self.train_config == o.train_config
            && self.history == o.history
            && self.cost_model_version == o.cost_model_version
    }
}

impl TrainedModel {
    pub fn new(
        network: Network,
        params: Params,
        norm: NormStats,
        train_config: TrainConfig,
        history: Vec<EpochRecord>,
        cost_model_version: Option<String>,
    ) -> Self {
        Self { network, params, norm, train_config, history, cost_model_version, hash: OnceLock::new() }
    }

    pub fn kind(&self) -> ModelKind {
        self.network.kind()
    }

    pub fn feature_layout_version(&self) -> u32 {
        self.norm.layout_version
    }

    /// sha256 of the serialized checkpoint, hex encoded.
    pub fn checkpoint_hash(&self) -> &str {
        self.hash.get_or_init(|| crate::checkpoint::hash_bytes(&crate::checkpoint::save_checkpoint(self)))
    }

    /// Normalized outputs for one encoded input.
    pub fn forward_normalized(&self, e: &Encoded) -> [f64; 6] {
        let mut t = Tape::new(&self.params);
        let mut z = [0.0; 6];
        match (&self.network, e) {
            (Network::Gnn(m), Encoded::Graph(g)) => {
                let out = m.forward(&mut t, &GraphBatch::new(&[g]), None);
                z.iter_mut().zip(t.value(out).row(0)).for_each(|(a, b)| *a = *b);
            }
            (Network::Transformer(m), Encoded::Sequence(s)) => {
                let out = m.forward(&mut t, &SeqBatch::new(&[s]), None);
                z.iter_mut().zip(t.value(out).row(0)).for_each(|(a, b)| *a = *b);
            }
            (Network::Mlp(m), Encoded::Mlp(f)) => {
                let batch = MlpBatch::new(&[f]).expect("codes checked at encoding");
                for target in Target::ALL {
                    let out = m.forward(&mut t, &batch, target, None);
                    z[target.index()] = t.value(out)[[0, 0]];
                }
            }
            _ => panic!("encoding does not match the network kind"),
        }
        z
    }

    /// Raw-unit predictions (each `>= 0`).
    pub fn predict(&self, a: &NetworkArchitecture, c: &HlsConfig) -> Result<TargetVector, PredictionError> {
        let e = encode(self.kind(), &self.norm, a, c)?;
        Ok(self.norm.invert_targets(&self.forward_normalized(&e)))
    }

    pub fn describe(&self) -> String {
        let c = &self.train_config;
        let body = match &self.network {
            Network::Gnn(m) => {
                let g = m.config;
                format!(
                    "GATv2 x{} ({} heads x {} channels), embed {}, head MLP {}x{}, dropout {}",
                    g.layers, g.heads, g.head_channels, g.embed, g.head_layers, g.head_hidden, g.dropout
                )
            }
            Network::Transformer(m) => {
                let t = m.config;
                format!(
                    "encoder x{} (d_model {}, {} heads, ff {}), dropout {}",
                    t.blocks, t.d_model, t.heads, t.ff, t.dropout
                )
            }
            Network::Mlp(m) => {
                let p = m.config;
                format!(
                    "6 per-target MLPs (numeric {}x{}, final {}x{}, embed {}), dropout {}",
                    p.numeric_layers, p.hidden, p.final_layers, p.hidden, p.embed_dim, p.dropout
                )
            }
        };
        format!(
            "{body}; {} params; {:?} lr {} {} epochs, batch {}, {:?} loss, seed {}",
            self.params.scalar_count(),
            c.optimizer.kind,
            c.optimizer.lr,
            c.epochs,
            c.batch_size,
            c.loss,
            c.seed
        )
    }
}

impl Predictor for TrainedModel {
    fn info(&self) -> PredictorInfo {
        let mut constraints = vec![format!("feature layout v{}", self.feature_layout_version())];
        if let Some(v) = &self.cost_model_version {
            constraints.push(format!("trained on pseudo-synthesis labels ({v})"));
        }
        PredictorInfo {
            name: format!("{}-{}", self.kind(), &self.checkpoint_hash()[..12]),
            kind: self.kind().to_string(),
            checkpoint_hash: Some(self.checkpoint_hash().to_string()),
            description: self.describe(),
            constraints,
        }
    }

    fn predict_sample(&self, s: &Sample) -> Result<TargetVector, PredictError> {
        self.predict(&s.architecture, &s.hls_config).map_err(PredictError::new)
    }
}

/// Layout version the running build encodes inputs with.
pub const CURRENT_LAYOUT_VERSION: u32 = FEATURE_LAYOUT_VERSION;

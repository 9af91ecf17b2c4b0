//! Mini-batch training with deterministic chunked gradient accumulation.
//!
//! A batch is split into fixed-size chunks; each chunk records its own tape
//! and dropout stream, and chunk gradients are summed in chunk order. The
//! result is therefore identical whether chunks run on one thread or many.

use std::rc::Rc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, info};
use wahls_core::dataset::Dataset;
use wahls_core::exec::Exec;
use wahls_core::featurize::{fit_normalizer, NormStats, NODE_WIDTH};
use wahls_core::synth::{mix_seed, COST_MODEL_VERSION};
use wahls_core::targets::Target;

use crate::gnn::{GnnConfig, GnnModel, GraphBatch};
use crate::mlp::{MlpBatch, MlpConfig, MlpModel};
use crate::model::{encode_dataset, Encoded, ModelKind, Network, PredictionError, TrainedModel};
use crate::params::{Grads, OptimizerConfig, Optimizer, Params, PlateauScheduler};
use crate::tape::{Mat, Tape, Var};
use crate::transformer::{SeqBatch, TransformerConfig, TransformerModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Squared error on normalized log targets.
    Mse,
    /// Squared error of `log1p` predictions in raw units.
    Msle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub loss: LossKind,
    pub seed: u64,
    /// Samples per gradient chunk; fixes the floating-point summation order.
    pub chunk_size: usize,
    /// Keep the parameters of the epoch with the lowest validation loss.
    pub restore_best: bool,
    pub gnn: GnnConfig,
    pub transformer: TransformerConfig,
    pub mlp: MlpConfig,
}

/// Reference batch size of the transformer recipe and the training-set
/// size it was tuned for; smaller sets scale it down proportionally.
pub const TRANSFORMER_REFERENCE_BATCH: usize = 1024;
pub const TRANSFORMER_REFERENCE_TRAIN: usize = 478_220;

/// `1024 * n / 478220`, at least `min`.
pub fn scaled_batch(n_train: usize, min: usize) -> usize {
    (TRANSFORMER_REFERENCE_BATCH * n_train / TRANSFORMER_REFERENCE_TRAIN).max(min)
}

impl TrainConfig {
    /// Full-size recipe for each estimator.
    pub fn paper(kind: ModelKind) -> Self {
        let base = Self {
            epochs: 200,
            batch_size: 64,
            optimizer: OptimizerConfig::adamw(1e-3),
            plateau_factor: 0.5,
            plateau_patience: 10,
            loss: LossKind::Mse,
            seed: 0,
            chunk_size: 16,
            restore_best: true,
            gnn: GnnConfig::default(),
            transformer: TransformerConfig::default(),
            mlp: MlpConfig::default(),
        };
        match kind {
            ModelKind::Gnn => base,
            ModelKind::Transformer => Self { epochs: 250, batch_size: TRANSFORMER_REFERENCE_BATCH, ..base },
            ModelKind::Mlp => Self { optimizer: OptimizerConfig::adam(1e-3), loss: LossKind::Msle, ..base },
        }
    }

    /// Reduced widths for CPU runs on a few thousand samples.
    pub fn desk(kind: ModelKind) -> Self {
        Self {
            gnn: GnnConfig::desk(),
            transformer: TransformerConfig::desk(),
            mlp: MlpConfig::desk(),
            batch_size: if kind == ModelKind::Transformer { 32 } else { 64 },
            ..Self::paper(kind)
        }
    }

    pub fn check(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 || self.chunk_size == 0 {
            return bad("batch and chunk sizes must be at least 1");
        }
        if !(self.optimizer.lr > 0.0) {
            return bad("learning rate must be positive");
        }
        let t = &self.transformer;
        if t.heads == 0 || !t.d_model.is_multiple_of(t.heads) {
            return bad("transformer d_model must be a multiple of heads");
        }
        if self.gnn.layers == 0 || self.gnn.heads == 0 {
            return bad("gnn needs at least one layer and one head");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Output network for per-target models, `None` for joint models.
    pub target: Option<Target>,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training and validation sets must be nonempty")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("sample `{id}` cannot be encoded: {source}")]
    Encoding { id: String, source: PredictionError },
    #[error("loss became non-finite in epoch {epoch}")]
    Diverged { epoch: usize },
}

/// Something the engine can minimize: a summed loss over a set of items.
trait Objective: Sync {
    fn n_train(&self) -> usize;
    fn n_val(&self) -> usize;
    /// Sum over `items` of the per-sample loss.
    fn loss(&self, t: &mut Tape, items: &[usize], val: bool, rng: Option<&mut ChaCha8Rng>) -> Var;
}

struct Data {
    train: Vec<Encoded>,
    train_targets: Vec<[f64; 6]>,
    val: Vec<Encoded>,
    val_targets: Vec<[f64; 6]>,
}

impl Data {
    fn pick(&self, items: &[usize], val: bool) -> (Vec<&Encoded>, Mat) {
        let (enc, tg) = if val { (&self.val, &self.val_targets) } else { (&self.train, &self.train_targets) };
        let mut y = Mat::zeros((items.len(), 6));
        let rows = items
            .iter()
            .enumerate()
            .map(|(r, &i)| {
                for c in 0..6 {
                    y[[r, c]] = tg[i][c];
                }
                &enc[i]
            })
            .collect();
        (rows, y)
    }
}

struct GnnObjective<'a> {
    model: &'a GnnModel,
    data: &'a Data,
}

impl Objective for GnnObjective<'_> {
    fn n_train(&self) -> usize {
        self.data.train.len()
    }
    fn n_val(&self) -> usize {
        self.data.val.len()
    }
    fn loss(&self, t: &mut Tape, items: &[usize], val: bool, rng: Option<&mut ChaCha8Rng>) -> Var {
        let (enc, y) = self.data.pick(items, val);
        let graphs: Vec<_> = enc.iter().map(|e| e.graph()).collect();
        let pred = self.model.forward(t, &GraphBatch::new(&graphs), rng);
        t.weighted_sse(pred, Rc::new(y), vec![1.0 / 6.0; 6], 1.0)
    }
}

struct TransformerObjective<'a> {
    model: &'a TransformerModel,
    data: &'a Data,
}

impl Objective for TransformerObjective<'_> {
    fn n_train(&self) -> usize {
        self.data.train.len()
    }
    fn n_val(&self) -> usize {
        self.data.val.len()
    }
    fn loss(&self, t: &mut Tape, items: &[usize], val: bool, rng: Option<&mut ChaCha8Rng>) -> Var {
        let (enc, y) = self.data.pick(items, val);
        let seqs: Vec<_> = enc.iter().map(|e| e.sequence()).collect();
        let pred = self.model.forward(t, &SeqBatch::new(&seqs), rng);
        t.weighted_sse(pred, Rc::new(y), vec![1.0 / 6.0; 6], 1.0)
    }
}

struct MlpObjective<'a> {
    model: &'a MlpModel,
    data: &'a Data,
    target: Target,
    weight: f64,
}

impl Objective for MlpObjective<'_> {
    fn n_train(&self) -> usize {
        self.data.train.len()
    }
    fn n_val(&self) -> usize {
        self.data.val.len()
    }
    fn loss(&self, t: &mut Tape, items: &[usize], val: bool, rng: Option<&mut ChaCha8Rng>) -> Var {
        let (enc, y) = self.data.pick(items, val);
        let rows: Vec<_> = enc.iter().map(|e| e.mlp()).collect();
        let batch = MlpBatch::new(&rows).expect("codes checked at encoding");
        let pred = self.model.forward(t, &batch, self.target, rng);
        let y = y.column(self.target.index()).to_owned().insert_axis(ndarray::Axis(1));
        t.weighted_sse(pred, Rc::new(y), vec![self.weight], 1.0)
    }
}

/// Mean per-sample loss over the training or validation set, eval mode.
fn mean_loss(obj: &dyn Objective, params: &Params, val: bool, chunk: usize, exec: Exec) -> f64 {
    let n = if val { obj.n_val() } else { obj.n_train() };
    let idx: Vec<usize> = (0..n).collect();
    let chunks: Vec<&[usize]> = idx.chunks(chunk.max(1) * 4).collect();
    let parts = exec.map(&chunks, |c| {
        let mut t = Tape::new(params);
        let l = obj.loss(&mut t, c, val, None);
        t.value(l)[[0, 0]]
    });
    parts.iter().sum::<f64>() / n.max(1) as f64
}

struct FitOutcome {
    history: Vec<EpochRecord>,
}

fn fit(
    params: &mut Params,
    obj: &dyn Objective,
    cfg: &TrainConfig,
    target: Option<Target>,
    active: Option<&[bool]>,
    exec: Exec,
) -> Result<FitOutcome, TrainError> {
    let salt = target.map_or(0, |t| t.index() as u64 + 1);
    let mut opt = Optimizer::new(cfg.optimizer, params);
    let mut sched = PlateauScheduler::new(cfg.optimizer.lr, cfg.plateau_factor, cfg.plateau_patience);
    let mut lr = cfg.optimizer.lr;
    let mut best = (f64::INFINITY, params.clone());
    let mut history = Vec::with_capacity(cfg.epochs);
    let n = obj.n_train();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        let epoch_seed = mix_seed(mix_seed(cfg.seed, salt), epoch as u64);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
        let mut train_sum = 0.0;
        for (bi, batch) in order.chunks(cfg.batch_size).enumerate() {
            let scale = 1.0 / batch.len() as f64;
            let chunks: Vec<&[usize]> = batch.chunks(cfg.chunk_size).collect();
            let snapshot: &Params = params;
            let parts = exec.map_range(chunks.len(), |ci| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(mix_seed(epoch_seed, bi as u64), ci as u64));
                let mut t = Tape::new(snapshot);
                let l = obj.loss(&mut t, chunks[ci], false, Some(&mut rng));
                let l = t.scale(l, scale);
                (t.value(l)[[0, 0]], t.backward(l))
            });
            let mut grads = Grads::zeros_like(params);
            let mut batch_loss = 0.0;
            for (l, g) in &parts {
                batch_loss += l;
                grads.add_assign(g);
            }
            if !batch_loss.is_finite() || !grads.all_finite() {
                return Err(TrainError::Diverged { epoch });
            }
            train_sum += batch_loss * batch.len() as f64;
            match active {
                Some(mask) => opt.step_masked(params, &grads, lr, mask),
                None => opt.step(params, &grads, lr),
            }
        }
        if !params.all_finite() {
            return Err(TrainError::Diverged { epoch });
        }
        let val_loss = mean_loss(obj, params, true, cfg.chunk_size, exec);
        if !val_loss.is_finite() {
            return Err(TrainError::Diverged { epoch });
        }
        let rec = EpochRecord { epoch, target, train_loss: train_sum / n as f64, val_loss, lr };
        debug!(epoch, ?target, train = rec.train_loss, val = val_loss, lr, "epoch");
        history.push(rec);
        if cfg.restore_best && val_loss < best.0 {
            best = (val_loss, params.clone());
        }
        lr = sched.observe(val_loss);
    }
    if cfg.restore_best && best.0.is_finite() {
        *params = best.1;
    }
    Ok(FitOutcome { history })
}

pub fn train(kind: ModelKind, train: &Dataset, val: &Dataset, cfg: &TrainConfig) -> Result<TrainedModel, TrainError> {
    train_with(kind, train, val, cfg, Exec::default())
}

/// Trains one estimator. Normalization is fit on `train` only.
pub fn train_with(
    kind: ModelKind,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    exec: Exec,
) -> Result<TrainedModel, TrainError> {
    cfg.check()?;
    if train.is_empty() || val.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let norm: NormStats = fit_normalizer(train);
    let encode = |ds: &Dataset| -> Result<(Vec<Encoded>, Vec<[f64; 6]>), TrainError> {
        let enc = encode_dataset(kind, &norm, ds, exec)
            .map_err(|(id, source)| TrainError::Encoding { id, source })?;
        let targets = ds.iter().map(|s| norm.forward_targets(&s.targets())).collect();
        Ok((enc, targets))
    };
    let (train_enc, train_targets) = encode(train)?;
    let (val_enc, val_targets) = encode(val)?;
    let data = Data { train: train_enc, train_targets, val: val_enc, val_targets };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = Params::new();
    info!(?kind, n_train = train.len(), n_val = val.len(), epochs = cfg.epochs, "training");
    let (network, history) = match kind {
        ModelKind::Gnn => {
            let m = GnnModel::new(cfg.gnn, NODE_WIDTH, &mut params, &mut rng);
            let out = fit(&mut params, &GnnObjective { model: &m, data: &data }, cfg, None, None, exec)?;
            (Network::Gnn(m), out.history)
        }
        ModelKind::Transformer => {
            let m = TransformerModel::new(cfg.transformer, NODE_WIDTH, &mut params, &mut rng);
            let out = fit(&mut params, &TransformerObjective { model: &m, data: &data }, cfg, None, None, exec)?;
            (Network::Transformer(m), out.history)
        }
        ModelKind::Mlp => {
            let m = MlpModel::new(cfg.mlp, &mut params, &mut rng);
            let mut history = Vec::new();
            for target in Target::ALL {
                let prefix = format!("{}.", target.as_str());
                let mask: Vec<bool> = params.ids().map(|id| params.name(id).starts_with(&prefix)).collect();
                let weight = match cfg.loss {
                    LossKind::Mse => 1.0,
                    // log1p(pred) - log1p(y) = std * (z_pred - z_y)
                    LossKind::Msle => norm.targets.std[target.index()].powi(2),
                };
                let obj = MlpObjective { model: &m, data: &data, target, weight };
                history.extend(fit(&mut params, &obj, cfg, Some(target), Some(&mask), exec)?.history);
            }
            (Network::Mlp(m), history)
        }
    };
    Ok(TrainedModel::new(network, params, norm, cfg.clone(), history, Some(COST_MODEL_VERSION.to_string())))
}

/// Mean squared error on normalized targets (all six), evaluation mode.
pub fn normalized_mse(model: &TrainedModel, ds: &Dataset, exec: Exec) -> Result<f64, TrainError> {
    let enc = encode_dataset(model.kind(), &model.norm, ds, exec).map_err(|(id, source)| TrainError::Encoding { id, source })?;
    let targets: Vec<[f64; 6]> = ds.iter().map(|s| model.norm.forward_targets(&s.targets())).collect();
    let data = Data { train: Vec::new(), train_targets: Vec::new(), val: enc, val_targets: targets };
    let chunk = model.train_config.chunk_size;
    let total = match &model.network {
        Network::Gnn(m) => mean_loss(&GnnObjective { model: m, data: &data }, &model.params, true, chunk, exec),
        Network::Transformer(m) => {
            mean_loss(&TransformerObjective { model: m, data: &data }, &model.params, true, chunk, exec)
        }
        Network::Mlp(m) => {
            let mut sum = 0.0;
            for target in Target::ALL {
                let obj = MlpObjective { model: m, data: &data, target, weight: 1.0 / 6.0 };
                sum += mean_loss(&obj, &model.params, true, chunk, exec);
            }
            sum
        }
    };
    Ok(total)
}

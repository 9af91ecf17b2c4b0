//! Aggregate-feature baseline: one small network per target, each mixing a
//! dense block over numeric features with embeddings of ordinal codes.

use std::rc::Rc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use wahls_core::featurize::{MlpFeatures, MLP_CATEGORY_SIZES, MLP_NUMERIC_WIDTH};
use wahls_core::targets::Target;

use crate::nn::Mlp;
use crate::params::{ParamId, Params};
use crate::tape::{Mat, Tape, Var};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("categorical input {column} has code {code}, table size is {size}")]
pub struct UnknownCategory {
    pub column: usize,
    pub code: usize,
    pub size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: usize,
    /// Dense layers in the numeric block.
    pub numeric_layers: usize,
    /// Dense layers after concatenation, before the scalar output.
    pub final_layers: usize,
    pub embed_dim: usize,
    pub dropout: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self { hidden: 128, numeric_layers: 3, final_layers: 1, embed_dim: 4, dropout: 0.1 }
    }
}

impl MlpConfig {
    pub fn desk() -> Self {
        Self { hidden: 64, numeric_layers: 2, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetNet {
    pub embeddings: Vec<ParamId>,
    pub numeric: Mlp,
    pub head: Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub config: MlpConfig,
    /// One network per target, in [`Target::ALL`] order.
    pub nets: Vec<TargetNet>,
}

/// Numeric block plus validated ordinal codes.
#[derive(Debug, Clone)]
pub struct MlpBatch {
    pub numeric: Mat,
    pub codes: [Rc<Vec<usize>>; 3],
}

impl MlpBatch {
    pub fn new(rows: &[&MlpFeatures]) -> Result<Self, UnknownCategory> {
        let mut numeric = Mat::zeros((rows.len(), MLP_NUMERIC_WIDTH));
        let mut codes: [Vec<usize>; 3] = Default::default();
        for (r, f) in rows.iter().enumerate() {
            for (c, v) in f.numeric.iter().enumerate() {
                numeric[[r, c]] = *v;
            }
            for (col, &code) in f.categorical.iter().enumerate() {
                let size = MLP_CATEGORY_SIZES[col];
                if code >= size {
                    return Err(UnknownCategory { column: col, code, size });
                }
                codes[col].push(code);
            }
        }
        Ok(Self { numeric, codes: codes.map(Rc::new) })
    }

    pub fn len(&self) -> usize {
        self.numeric.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.numeric.nrows() == 0
    }
}

impl MlpModel {
    pub fn new(config: MlpConfig, p: &mut Params, rng: &mut ChaCha8Rng) -> Self {
        let h = config.hidden;
        let nets = Target::ALL
            .iter()
            .map(|t| {
                let name = t.as_str();
                let embeddings = MLP_CATEGORY_SIZES
                    .iter()
                    .enumerate()
                    .map(|(i, &n)| p.add_weight(format!("{name}.emb{i}"), n, config.embed_dim, rng))
                    .collect();
                let mut nd = vec![MLP_NUMERIC_WIDTH];
                nd.extend(std::iter::repeat_n(h, config.numeric_layers));
                let numeric = Mlp::new(p, &format!("{name}.numeric"), &nd, rng);
                let mut hd = vec![h + 3 * config.embed_dim];
                hd.extend(std::iter::repeat_n(h, config.final_layers));
                hd.push(1);
                let head = Mlp::new(p, &format!("{name}.head"), &hd, rng);
                TargetNet { embeddings, numeric, head }
            })
            .collect();
        Self { config, nets }
    }

    /// `batch x 1` normalized prediction for one target.
    pub fn forward(&self, t: &mut Tape, b: &MlpBatch, target: Target, mut rng: Option<&mut ChaCha8Rng>) -> Var {
        let net = &self.nets[target.index()];
        let x = t.constant(b.numeric.clone());
        // the numeric block ends on a dense layer; activate it before mixing
        let n = net.numeric.forward(t, x, self.config.dropout, rng.as_deref_mut());
        let n = t.relu(n);
        let mut parts = vec![n];
        for (table, codes) in net.embeddings.iter().zip(&b.codes) {
            let e = t.param(*table);
            parts.push(t.gather_rows(e, codes.clone()));
        }
        let h = t.concat_cols(&parts);
        net.head.forward(t, h, self.config.dropout, rng)
    }
}

//! Encoder-only transformer over layer tokens with a learnable CLS slot.

use std::rc::Rc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use wahls_core::featurize::{PaddedSequence, NODE_WIDTH, SEQ_LEN};

use crate::nn::{dropout, Linear, Norm};
use crate::params::{ParamId, Params};
use crate::tape::{Mat, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub d_model: usize,
    pub heads: usize,
    pub ff: usize,
    pub blocks: usize,
    pub dropout: f64,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        Self { d_model: 512, heads: 8, ff: 2048, blocks: 2, dropout: 0.1 }
    }
}

impl TransformerConfig {
    pub fn desk() -> Self {
        Self { d_model: 32, ff: 64, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderBlock {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub norm1: Norm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub norm2: Norm,
}

impl EncoderBlock {
    fn new(p: &mut Params, name: &str, c: &TransformerConfig, rng: &mut ChaCha8Rng) -> Self {
        let d = c.d_model;
        Self {
            q: Linear::new(p, &format!("{name}.q"), d, d, rng),
            k: Linear::new(p, &format!("{name}.k"), d, d, rng),
            v: Linear::new(p, &format!("{name}.v"), d, d, rng),
            o: Linear::new(p, &format!("{name}.o"), d, d, rng),
            norm1: Norm::new(p, &format!("{name}.norm1"), d),
            ff1: Linear::new(p, &format!("{name}.ff1"), d, c.ff, rng),
            ff2: Linear::new(p, &format!("{name}.ff2"), c.ff, d, rng),
            norm2: Norm::new(p, &format!("{name}.norm2"), d),
        }
    }

    /// Post-norm block; returns the output and the attention node.
    pub fn forward(
        &self,
        t: &mut Tape,
        x: Var,
        s: &SeqBatch,
        c: &TransformerConfig,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> (Var, Var) {
        let q = self.q.forward(t, x);
        let k = self.k.forward(t, x);
        let v = self.v.forward(t, x);
        let att = t.attention(q, k, v, c.heads, s.len, &s.mask);
        let a = self.o.forward(t, att);
        let a = dropout(t, a, c.dropout, rng.as_deref_mut());
        let x = t.add(x, a);
        let x = self.norm1.forward(t, x);
        let f = self.ff1.forward(t, x);
        let f = t.relu(f);
        let f = self.ff2.forward(t, f);
        let f = dropout(t, f, c.dropout, rng);
        let x = t.add(x, f);
        (self.norm2.forward(t, x), att)
    }
}

/// `batch` sequences of equal (trimmed) length stacked row-wise.
#[derive(Debug, Clone)]
pub struct SeqBatch {
    pub x: Mat,
    pub mask: Vec<bool>,
    pub len: usize,
    pub batch: usize,
    pub cls_rows: Rc<Vec<usize>>,
    pub positions: Rc<Vec<usize>>,
}

impl SeqBatch {
    /// Trims to the longest sequence in the batch; masked rows beyond it
    /// cannot influence any real token.
    pub fn new(seqs: &[&PaddedSequence]) -> Self {
        let len = seqs.iter().map(|s| s.length).max().unwrap_or(1).max(1);
        Self::with_len(seqs, len)
    }

    /// Keeps `len` rows per sequence (at least each sequence's true length).
    pub fn with_len(seqs: &[&PaddedSequence], len: usize) -> Self {
        let width = seqs.first().and_then(|s| s.tokens.first()).map_or(NODE_WIDTH, Vec::len);
        let batch = seqs.len();
        let mut x = Mat::zeros((batch * len, width));
        let mut mask = vec![false; batch * len];
        for (b, s) in seqs.iter().enumerate() {
            for r in 0..len.min(s.tokens.len()) {
                mask[b * len + r] = s.mask[r];
                for (c, v) in s.tokens[r].iter().enumerate() {
                    x[[b * len + r, c]] = *v;
                }
            }
        }
        let cls_rows = Rc::new((0..batch).map(|b| b * len).collect());
        let positions = Rc::new((0..batch * len).map(|r| (r % len).min(SEQ_LEN - 1)).collect());
        Self { x, mask, len, batch, cls_rows, positions }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerModel {
    pub config: TransformerConfig,
    pub input: Linear,
    pub cls: ParamId,
    pub positions: ParamId,
    pub blocks: Vec<EncoderBlock>,
    pub output: Linear,
}

impl TransformerModel {
    pub fn new(config: TransformerConfig, input: usize, p: &mut Params, rng: &mut ChaCha8Rng) -> Self {
        let d = config.d_model;
        let input = Linear::new(p, "input", input, d, rng);
        let cls = p.add_weight("cls", 1, d, rng);
        let positions = p.add_weight("positions", SEQ_LEN, d, rng);
        let blocks = (0..config.blocks).map(|i| EncoderBlock::new(p, &format!("block{i}"), &config, rng)).collect();
        let output = Linear::new(p, "output", d, 6, rng);
        Self { config, input, cls, positions, blocks, output }
    }

    /// Token embeddings: projected features, CLS embedding on slot 0 and
    /// learned positions.
    pub fn embed(&self, t: &mut Tape, s: &SeqBatch) -> Var {
        let x = t.constant(s.x.clone());
        let h = self.input.forward(t, x);
        let cls = t.param(self.cls);
        let h = t.add_row_at(h, cls, s.cls_rows.clone());
        let table = t.param(self.positions);
        let pos = t.gather_rows(table, s.positions.clone());
        t.add(h, pos)
    }

    /// `batch x 6` normalized predictions, plus each block's attention node.
    pub fn forward_traced(&self, t: &mut Tape, s: &SeqBatch, mut rng: Option<&mut ChaCha8Rng>) -> (Var, Vec<Var>) {
        let mut x = self.embed(t, s);
        x = dropout(t, x, self.config.dropout, rng.as_deref_mut());
        let mut atts = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (y, att) = b.forward(t, x, s, &self.config, rng.as_deref_mut());
            x = y;
            atts.push(att);
        }
        let cls = t.gather_rows(x, s.cls_rows.clone());
        (self.output.forward(t, cls), atts)
    }

    pub fn forward(&self, t: &mut Tape, s: &SeqBatch, rng: Option<&mut ChaCha8Rng>) -> Var {
        self.forward_traced(t, s, rng).0
    }
}

//! Graph attention estimator: stacked GATv2 layers, mixed pooling readout
//! and a regression head.
//!
//! Attention for the edge `j -> i` (including the self-loop `i -> i`) is
//! `alpha_ij = softmax_j(a . elu(W_s x_i + W_t x_j))` and the layer output
//! is `sum_j alpha_ij W x_j`, computed independently per head.

use std::rc::Rc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use wahls_core::featurize::{FeatureGraph, GLOBAL_WIDTH, NODE_WIDTH};

use crate::nn::{dropout, Linear, Mlp, Norm};
use crate::params::{ParamId, Params};
use crate::tape::{Mat, Pool, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnnConfig {
    pub layers: usize,
    pub heads: usize,
    /// Channels per head; hidden layers are `heads * head_channels` wide.
    pub head_channels: usize,
    /// Width of the projected node embedding that gets pooled.
    pub embed: usize,
    pub head_hidden: usize,
    pub head_layers: usize,
    pub dropout: f64,
}

impl Default for GnnConfig {
    fn default() -> Self {
        Self { layers: 5, heads: 5, head_channels: 32, embed: 128, head_hidden: 256, head_layers: 2, dropout: 0.1 }
    }
}

impl GnnConfig {
    pub fn desk() -> Self {
        Self { head_channels: 16, embed: 64, head_hidden: 128, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatLayer {
    pub w: ParamId,
    pub w_s: ParamId,
    pub w_t: ParamId,
    pub a: ParamId,
    pub norm: Norm,
    pub residual: Option<ParamId>,
    pub heads: usize,
    /// Concatenate heads (hidden layers) or average them (last layer).
    pub concat: bool,
}

impl GatLayer {
    fn new(p: &mut Params, name: &str, input: usize, heads: usize, ch: usize, concat: bool, rng: &mut ChaCha8Rng) -> Self {
        let out = if concat { heads * ch } else { ch };
        Self {
            w: p.add_weight(format!("{name}.w"), input, heads * ch, rng),
            w_s: p.add_weight(format!("{name}.w_s"), input, heads * ch, rng),
            w_t: p.add_weight(format!("{name}.w_t"), input, heads * ch, rng),
            a: p.add_weight(format!("{name}.a"), 1, heads * ch, rng),
            norm: Norm::new(p, &format!("{name}.norm"), out),
            residual: (input != out).then(|| p.add_weight(format!("{name}.res"), input, out, rng)),
            heads,
            concat,
        }
    }

    /// Attention logits passed through the per-target softmax, `E x heads`.
    pub fn attention(&self, t: &mut Tape, x: Var, g: &GraphBatch) -> Var {
        let (ws, wt, a) = (t.param(self.w_s), t.param(self.w_t), t.param(self.a));
        let s = t.matmul(x, ws);
        let r = t.matmul(x, wt);
        let s_e = t.gather_rows(s, g.tgt.clone());
        let r_e = t.gather_rows(r, g.src.clone());
        let z = t.add(s_e, r_e);
        let z = t.elu(z);
        let logits = t.head_dot(z, a, self.heads);
        t.segment_softmax(logits, g.tgt.clone(), g.num_nodes())
    }

    /// Message passing only, before normalization and the residual.
    pub fn aggregate(&self, t: &mut Tape, x: Var, g: &GraphBatch) -> Var {
        let alpha = self.attention(t, x, g);
        let w = t.param(self.w);
        let h = t.matmul(x, w);
        let h_e = t.gather_rows(h, g.src.clone());
        let msg = t.head_scale(h_e, alpha, self.heads);
        let out = t.scatter_add_rows(msg, g.tgt.clone(), g.num_nodes());
        if self.concat {
            out
        } else {
            t.head_mean(out, self.heads)
        }
    }

    /// Aggregation, layer norm, ELU, dropout, residual.
    pub fn forward(&self, t: &mut Tape, x: Var, g: &GraphBatch, rate: f64, rng: Option<&mut ChaCha8Rng>) -> Var {
        let h = self.aggregate(t, x, g);
        let h = self.norm.forward(t, h);
        let h = t.elu(h);
        let h = dropout(t, h, rate, rng);
        let skip = match self.residual {
            Some(p) => {
                let p = t.param(p);
                t.matmul(x, p)
            }
            None => x,
        };
        t.add(h, skip)
    }
}

/// A disjoint union of feature graphs.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub x: Mat,
    pub src: Rc<Vec<usize>>,
    pub tgt: Rc<Vec<usize>>,
    pub node_graph: Rc<Vec<usize>>,
    pub global: Mat,
}

impl GraphBatch {
    pub fn new(graphs: &[&FeatureGraph]) -> Self {
        let n: usize = graphs.iter().map(|g| g.num_nodes()).sum();
        let width = graphs.first().and_then(|g| g.nodes.first()).map_or(NODE_WIDTH, Vec::len);
        let mut x = Mat::zeros((n, width));
        let mut global = Mat::zeros((graphs.len(), GLOBAL_WIDTH));
        let (mut src, mut tgt, mut node_graph) = (Vec::new(), Vec::new(), Vec::with_capacity(n));
        let mut offset = 0;
        for (gi, g) in graphs.iter().enumerate() {
            for (i, row) in g.nodes.iter().enumerate() {
                for (c, v) in row.iter().enumerate() {
                    x[[offset + i, c]] = *v;
                }
                node_graph.push(gi);
            }
            for &(s, d) in &g.edges {
                src.push(offset + s);
                tgt.push(offset + d);
            }
            for (c, v) in g.global.iter().enumerate() {
                global[[gi, c]] = *v;
            }
            offset += g.num_nodes();
        }
        Self { x, src: Rc::new(src), tgt: Rc::new(tgt), node_graph: Rc::new(node_graph), global }
    }

    pub fn num_nodes(&self) -> usize {
        self.x.nrows()
    }

    pub fn num_graphs(&self) -> usize {
        self.global.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnModel {
    pub config: GnnConfig,
    pub layers: Vec<GatLayer>,
    pub embed: Linear,
    /// Logits of the softmax mix over (add, mean, max) pooling.
    pub pool_mix: ParamId,
    pub head: Mlp,
}

impl GnnModel {
    pub fn new(config: GnnConfig, input: usize, p: &mut Params, rng: &mut ChaCha8Rng) -> Self {
        let mut layers = Vec::with_capacity(config.layers);
        let mut width = input;
        for i in 0..config.layers {
            let concat = i + 1 < config.layers;
            let l = GatLayer::new(p, &format!("gat{i}"), width, config.heads, config.head_channels, concat, rng);
            width = if concat { config.heads * config.head_channels } else { config.head_channels };
            layers.push(l);
        }
        let embed = Linear::new(p, "embed", width, config.embed, rng);
        let pool_mix = p.add_zeros("pool_mix", 1, 3);
        let mut dims = vec![config.embed + GLOBAL_WIDTH];
        dims.extend(std::iter::repeat_n(config.head_hidden, config.head_layers));
        dims.push(6);
        let head = Mlp::new(p, "head", &dims, rng);
        Self { config, layers, embed, pool_mix, head }
    }

    /// Node embeddings after all GATv2 layers.
    pub fn encode(&self, t: &mut Tape, g: &GraphBatch, mut rng: Option<&mut ChaCha8Rng>) -> Var {
        let mut x = t.constant(g.x.clone());
        for l in &self.layers {
            x = l.forward(t, x, g, self.config.dropout, rng.as_deref_mut());
        }
        x
    }

    /// `num_graphs x 6` normalized predictions.
    pub fn forward(&self, t: &mut Tape, g: &GraphBatch, mut rng: Option<&mut ChaCha8Rng>) -> Var {
        let x = self.encode(t, g, rng.as_deref_mut());
        let e = self.embed.forward(t, x);
        let ng = g.num_graphs();
        let sum = t.segment_pool(e, g.node_graph.clone(), ng, Pool::Sum);
        let mean = t.segment_pool(e, g.node_graph.clone(), ng, Pool::Mean);
        let max = t.segment_pool(e, g.node_graph.clone(), ng, Pool::Max);
        let logits = t.param(self.pool_mix);
        let w = t.row_softmax(logits);
        let a = t.scale_by(sum, w, 0);
        let b = t.scale_by(mean, w, 1);
        let c = t.scale_by(max, w, 2);
        let ab = t.add(a, b);
        let pooled = t.add(ab, c);
        let global = t.constant(g.global.clone());
        let h = t.concat_cols(&[pooled, global]);
        self.head.forward(t, h, self.config.dropout, rng)
    }
}

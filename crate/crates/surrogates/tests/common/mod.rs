//! Scalar-loop reference implementations and test fixtures.
#![allow(dead_code)]

use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wahls_core::featurize::{FeatureGraph, PaddedSequence, GLOBAL_WIDTH};
use wahls_surrogates::gnn::{GatLayer, GnnModel};
use wahls_surrogates::mlp::TargetNet;
use wahls_surrogates::nn::{Linear, Mlp, Norm};
use wahls_surrogates::params::{ParamId, Params};
use wahls_surrogates::tape::{Mat, Tape, Var};
use wahls_surrogates::transformer::{EncoderBlock, TransformerModel};

pub type M = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}

/// Replaces every parameter with uniform noise so that norms and biases
/// are not at their trivial initial values.
pub fn randomize(p: &mut Params, rng: &mut ChaCha8Rng, scale: f64) {
    let ids: Vec<ParamId> = p.ids().collect();
    for id in ids {
        p.get_mut(id).mapv_inplace(|_| rng.gen_range(-scale..scale));
    }
}

pub fn to_m(m: &Mat) -> M {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn pm(p: &Params, id: ParamId) -> M {
    to_m(p.get(id))
}

pub fn max_abs_diff(a: &M, b: &Mat) -> f64 {
    assert_eq!(a.len(), b.nrows());
    let mut d: f64 = 0.0;
    for (i, row) in a.iter().enumerate() {
        assert_eq!(row.len(), b.ncols());
        for (j, v) in row.iter().enumerate() {
            d = d.max((v - b[[i, j]]).abs());
        }
    }
    d
}

pub fn mm(x: &M, w: &M) -> M {
    let k = w.len();
    let cols = w.first().map_or(0, Vec::len);
    x.iter()
        .map(|row| {
            assert_eq!(row.len(), k);
            (0..cols).map(|c| (0..k).map(|i| row[i] * w[i][c]).sum()).collect()
        })
        .collect()
}

pub fn lin(p: &Params, l: &Linear, x: &M) -> M {
    let b = pm(p, l.b);
    let mut out = mm(x, &pm(p, l.w));
    for row in &mut out {
        for (v, bb) in row.iter_mut().zip(&b[0]) {
            *v += bb;
        }
    }
    out
}

pub fn elu(v: f64) -> f64 {
    if v > 0.0 { v } else { v.exp() - 1.0 }
}

pub fn relu(v: f64) -> f64 {
    if v > 0.0 { v } else { 0.0 }
}

pub fn map(x: &M, f: fn(f64) -> f64) -> M {
    x.iter().map(|r| r.iter().map(|v| f(*v)).collect()).collect()
}

pub fn add(a: &M, b: &M) -> M {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(u, v)| u + v).collect()).collect()
}

pub fn norm(p: &Params, n: &Norm, x: &M) -> M {
    let (g, b) = (pm(p, n.gamma), pm(p, n.beta));
    x.iter()
        .map(|row| {
            let d = row.len() as f64;
            let mean = row.iter().sum::<f64>() / d;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
            let sd = (var + 1e-5).sqrt();
            row.iter().enumerate().map(|(j, v)| (v - mean) / sd * g[0][j] + b[0][j]).collect()
        })
        .collect()
}

pub fn mlp(p: &Params, m: &Mlp, x: &M) -> M {
    let mut h = x.clone();
    for (i, l) in m.layers.iter().enumerate() {
        h = lin(p, l, &h);
        if i + 1 < m.layers.len() {
            h = map(&h, relu);
        }
    }
    h
}

/// Per-edge GATv2 attention: `alpha[e][h]` for every edge `(src, tgt)`.
pub fn gat_alpha(p: &Params, l: &GatLayer, x: &M, edges: &[(usize, usize)]) -> M {
    let (ws, wt, a) = (pm(p, l.w_s), pm(p, l.w_t), pm(p, l.a));
    let hc = a[0].len();
    let ch = hc / l.heads;
    let n = x.len();
    let logit = |i: usize, j: usize, h: usize| -> f64 {
        let mut e = 0.0;
        for c in h * ch..(h + 1) * ch {
            let mut z = 0.0;
            for k in 0..x[0].len() {
                z += ws[k][c] * x[i][k] + wt[k][c] * x[j][k];
            }
            e += a[0][c] * elu(z);
        }
        e
    };
    let mut alpha = vec![vec![0.0; l.heads]; edges.len()];
    for i in 0..n {
        for h in 0..l.heads {
            let incoming: Vec<usize> = (0..edges.len()).filter(|&e| edges[e].1 == i).collect();
            let logits: Vec<f64> = incoming.iter().map(|&e| logit(i, edges[e].0, h)).collect();
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|v| (v - m).exp()).sum();
            for (k, &e) in incoming.iter().enumerate() {
                alpha[e][h] = (logits[k] - m).exp() / z;
            }
        }
    }
    alpha
}

/// Message passing `sum_j alpha_ij W x_j` per head, then concat or mean.
pub fn gat_aggregate(p: &Params, l: &GatLayer, x: &M, edges: &[(usize, usize)]) -> M {
    let alpha = gat_alpha(p, l, x, edges);
    let w = pm(p, l.w);
    let hc = w[0].len();
    let ch = hc / l.heads;
    let wx = mm(x, &w);
    let mut out = vec![vec![0.0; hc]; x.len()];
    for (e, &(j, i)) in edges.iter().enumerate() {
        for h in 0..l.heads {
            for c in h * ch..(h + 1) * ch {
                out[i][c] += alpha[e][h] * wx[j][c];
            }
        }
    }
    if l.concat {
        return out;
    }
    out.iter()
        .map(|row| (0..ch).map(|c| (0..l.heads).map(|h| row[h * ch + c]).sum::<f64>() / l.heads as f64).collect())
        .collect()
}

pub fn gat_forward(p: &Params, l: &GatLayer, x: &M, edges: &[(usize, usize)]) -> M {
    let h = gat_aggregate(p, l, x, edges);
    let h = map(&norm(p, &l.norm, &h), elu);
    let skip = match l.residual {
        Some(r) => mm(x, &pm(p, r)),
        None => x.clone(),
    };
    add(&h, &skip)
}

/// Whole-model GNN forward for one graph.
pub fn gnn_forward(p: &Params, m: &GnnModel, g: &FeatureGraph) -> Vec<f64> {
    let mut x = g.nodes.clone();
    for l in &m.layers {
        x = gat_forward(p, l, &x, &g.edges);
    }
    let e = lin(p, &m.embed, &x);
    let d = e[0].len();
    let n = e.len() as f64;
    let mix = pm(p, m.pool_mix)[0].clone();
    let mx = mix.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = mix.iter().map(|v| (v - mx).exp()).sum();
    let w: Vec<f64> = mix.iter().map(|v| (v - mx).exp() / z).collect();
    let mut pooled = Vec::with_capacity(d + GLOBAL_WIDTH);
    for c in 0..d {
        let sum: f64 = e.iter().map(|r| r[c]).sum();
        let max = e.iter().map(|r| r[c]).fold(f64::NEG_INFINITY, f64::max);
        pooled.push(w[0] * sum + w[1] * (sum / n) + w[2] * max);
    }
    pooled.extend(&g.global);
    mlp(p, &m.head, &vec![pooled])[0].clone()
}

/// Masked multi-head attention for one sequence, one head at a time.
pub fn attention(q: &M, k: &M, v: &M, heads: usize, mask: &[bool]) -> M {
    let len = q.len();
    let d = q[0].len();
    let dh = d / heads;
    let mut out = vec![vec![0.0; d]; len];
    for h in 0..heads {
        let cols = h * dh..(h + 1) * dh;
        for i in 0..len {
            let scores: Vec<Option<f64>> = (0..len)
                .map(|j| mask[j].then(|| cols.clone().map(|c| q[i][c] * k[j][c]).sum::<f64>() / (dh as f64).sqrt()))
                .collect();
            let m = scores.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().flatten().map(|s| (s - m).exp()).sum();
            for (j, s) in scores.iter().enumerate() {
                if let Some(s) = s {
                    let a = (s - m).exp() / z;
                    for c in cols.clone() {
                        out[i][c] += a * v[j][c];
                    }
                }
            }
        }
    }
    out
}

fn block_forward(p: &Params, b: &EncoderBlock, x: &M, heads: usize, mask: &[bool]) -> M {
    let att = attention(&lin(p, &b.q, x), &lin(p, &b.k, x), &lin(p, &b.v, x), heads, mask);
    let x = norm(p, &b.norm1, &add(x, &lin(p, &b.o, &att)));
    let f = lin(p, &b.ff2, &map(&lin(p, &b.ff1, &x), relu));
    norm(p, &b.norm2, &add(&x, &f))
}

/// Whole-model transformer forward for one sequence.
pub fn transformer_forward(p: &Params, m: &TransformerModel, s: &PaddedSequence) -> Vec<f64> {
    let mut x = lin(p, &m.input, &s.tokens);
    let cls = pm(p, m.cls);
    let pos = pm(p, m.positions);
    for (r, row) in x.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            if r == 0 {
                *v += cls[0][c];
            }
            *v += pos[r.min(pos.len() - 1)][c];
        }
    }
    for b in &m.blocks {
        x = block_forward(p, b, &x, m.config.heads, &s.mask);
    }
    lin(p, &m.output, &vec![x[0].clone()])[0].clone()
}

/// One per-target network of the aggregate-feature model.
pub fn target_net_forward(p: &Params, net: &TargetNet, numeric: &[f64], codes: [usize; 3]) -> f64 {
    let n = map(&mlp(p, &net.numeric, &vec![numeric.to_vec()]), relu);
    let mut h = n[0].clone();
    for (table, code) in net.embeddings.iter().zip(codes) {
        h.extend(&pm(p, *table)[code]);
    }
    mlp(p, &net.head, &vec![h])[0][0]
}

/// Random graph on `n` nodes: random directed edges plus every self-loop.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, width: usize) -> FeatureGraph {
    let nodes = (0..n).map(|_| (0..width).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let mut edges = Vec::new();
    for s in 0..n {
        for d in 0..n {
            if s != d && rng.gen_bool(0.4) {
                edges.push((s, d));
            }
        }
    }
    edges.extend((0..n).map(|i| (i, i)));
    let mut global = vec![0.0; GLOBAL_WIDTH];
    global[rng.gen_range(0..2)] = 1.0;
    global[2 + rng.gen_range(0..2)] = 1.0;
    FeatureGraph { nodes, edges, global }
}

/// Sequence with a zero CLS row, `layers` random rows and `pad` masked rows.
pub fn random_sequence(rng: &mut ChaCha8Rng, layers: usize, pad: usize, width: usize) -> PaddedSequence {
    let mut tokens = vec![vec![0.0; width]];
    for _ in 0..layers {
        tokens.push((0..width).map(|_| rng.gen_range(-1.0..1.0)).collect());
    }
    tokens.extend(std::iter::repeat_n(vec![0.0; width], pad));
    let mut mask = vec![true; layers + 1];
    mask.extend(std::iter::repeat_n(false, pad));
    PaddedSequence { tokens, mask, length: layers + 1 }
}

/// Sum of squares against a fixed random target; any matrix becomes a scalar loss.
pub fn sse(t: &mut Tape, x: Var, seed: u64) -> Var {
    let v = t.value(x);
    let mut r = rng(seed);
    let target = Rc::new(rand_mat(&mut r, v.nrows(), v.ncols()));
    let cols = v.ncols();
    t.weighted_sse(x, target, vec![1.0; cols], 0.5)
}

/// Compares tape gradients with central differences; returns the worst
/// relative error over every parameter scalar.
pub fn grad_check(p: &Params, f: impl Fn(&mut Tape) -> Var) -> f64 {
    const H: f64 = 1e-4;
    let analytic = {
        let mut t = Tape::new(p);
        let loss = f(&mut t);
        t.backward(loss)
    };
    let eval = |q: &Params| {
        let mut t = Tape::new(q);
        let loss = f(&mut t);
        t.value(loss)[[0, 0]]
    };
    let mut q = p.clone();
    let mut worst: f64 = 0.0;
    for id in p.ids() {
        let (rows, cols) = p.get(id).dim();
        for i in 0..rows {
            for j in 0..cols {
                let x0 = p.get(id)[[i, j]];
                q.get_mut(id)[[i, j]] = x0 + H;
                let up = eval(&q);
                q.get_mut(id)[[i, j]] = x0 - H;
                let down = eval(&q);
                q.get_mut(id)[[i, j]] = x0;
                let numeric = (up - down) / (2.0 * H);
                let a = analytic.get(id)[[i, j]];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
    }
    worst
}

//! Vectorized forward passes against scalar-loop reference implementations.

mod common;

use common::*;
use rand::Rng;
use wahls_core::featurize::{FeatureGraph, MlpFeatures, MLP_NUMERIC_WIDTH};
use wahls_core::targets::Target;
use wahls_surrogates::gnn::{GnnConfig, GnnModel, GraphBatch};
use wahls_surrogates::mlp::{MlpBatch, MlpConfig, MlpModel, UnknownCategory};
use wahls_surrogates::params::Params;
use wahls_surrogates::tape::Tape;
use wahls_surrogates::transformer::{SeqBatch, TransformerConfig, TransformerModel};

fn small_gnn(seed: u64, width: usize) -> (GnnModel, Params) {
    let mut r = rng(seed);
    let cfg = GnnConfig { layers: 3, heads: 3, head_channels: 2, embed: 5, head_hidden: 6, head_layers: 2, dropout: 0.0 };
    let mut p = Params::new();
    let m = GnnModel::new(cfg, width, &mut p, &mut r);
    randomize(&mut p, &mut r, 0.7);
    (m, p)
}

#[test]
fn gatv2_attention_and_layers_match_scalar_loops() {
    let mut r = rng(100);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let width = r.gen_range(1..=8);
        let n = r.gen_range(1..=6);
        let (m, p) = small_gnn(200 + case, width);
        let g = random_graph(&mut r, n, width);
        let batch = GraphBatch::new(&[&g]);
        let mut t = Tape::new(&p);
        let mut x = t.constant(batch.x.clone());
        let mut xs = g.nodes.clone();
        for l in &m.layers {
            let alpha = l.attention(&mut t, x, &batch);
            worst = worst.max(max_abs_diff(&gat_alpha(&p, l, &xs, &g.edges), t.value(alpha)));
            let agg = l.aggregate(&mut t, x, &batch);
            worst = worst.max(max_abs_diff(&gat_aggregate(&p, l, &xs, &g.edges), t.value(agg)));
            x = l.forward(&mut t, x, &batch, 0.0, None);
            xs = gat_forward(&p, l, &xs, &g.edges);
            worst = worst.max(max_abs_diff(&xs, t.value(x)));
        }
    }
    assert!(worst < 1e-9, "max deviation {worst:e}");
}

#[test]
fn single_node_attends_to_itself() {
    let (m, p) = small_gnn(1, 4);
    let g = random_graph(&mut rng(2), 1, 4);
    let batch = GraphBatch::new(&[&g]);
    let mut t = Tape::new(&p);
    let x = t.constant(batch.x.clone());
    let alpha = m.layers[0].attention(&mut t, x, &batch);
    assert!(t.value(alpha).iter().all(|&a| a == 1.0));
}

#[test]
fn identical_neighbors_split_attention_evenly() {
    let (m, p) = small_gnn(3, 4);
    let row = vec![0.3, -0.2, 0.9, 0.1];
    let g = FeatureGraph {
        nodes: vec![row.clone(), row.clone(), vec![1.0, 0.5, -0.5, 0.0]],
        edges: vec![(0, 2), (1, 2), (0, 0), (1, 1), (2, 2)],
        global: vec![1.0, 0.0, 1.0, 0.0],
    };
    let batch = GraphBatch::new(&[&g]);
    let mut t = Tape::new(&p);
    let x = t.constant(batch.x.clone());
    let alpha = m.layers[0].attention(&mut t, x, &batch);
    let a = t.value(alpha);
    for h in 0..m.config.heads {
        assert!((a[[0, h]] - a[[1, h]]).abs() < 1e-15);
        let total = a[[0, h]] + a[[1, h]] + a[[4, h]];
        assert!((total - 1.0).abs() < 1e-12);
    }
    // without the self-loop the two copies are the only candidates
    let g2 = FeatureGraph { edges: vec![(0, 2), (1, 2), (0, 0), (1, 1)], ..g };
    let batch = GraphBatch::new(&[&g2]);
    let mut t = Tape::new(&p);
    let x = t.constant(batch.x.clone());
    let alpha = m.layers[0].attention(&mut t, x, &batch);
    for h in 0..m.config.heads {
        assert!((t.value(alpha)[[0, h]] - 0.5).abs() < 1e-15);
        assert!((t.value(alpha)[[1, h]] - 0.5).abs() < 1e-15);
    }
}

#[test]
fn gnn_forward_matches_hand_evaluation() {
    let mut r = rng(7);
    let (m, p) = small_gnn(8, 6);
    let graphs: Vec<FeatureGraph> = (1..=5).map(|n| random_graph(&mut r, n, 6)).collect();
    let batch = GraphBatch::new(&graphs.iter().collect::<Vec<_>>());
    let mut t = Tape::new(&p);
    let out = m.forward(&mut t, &batch, None);
    let expect: M = graphs.iter().map(|g| gnn_forward(&p, &m, g)).collect();
    let d = max_abs_diff(&expect, t.value(out));
    assert!(d < 1e-9, "max deviation {d:e}");
}

#[test]
fn single_node_pools_coincide() {
    let (m, p) = small_gnn(9, 4);
    let g = random_graph(&mut rng(10), 1, 4);
    let batch = GraphBatch::new(&[&g]);
    let mut t = Tape::new(&p);
    let x = m.encode(&mut t, &batch, None);
    let e = m.embed.forward(&mut t, x);
    use wahls_surrogates::tape::Pool;
    let seg = batch.node_graph.clone();
    let pools: Vec<_> = [Pool::Sum, Pool::Mean, Pool::Max]
        .into_iter()
        .map(|k| t.segment_pool(e, seg.clone(), 1, k))
        .collect();
    assert_eq!(t.value(pools[0]), t.value(pools[1]));
    assert_eq!(t.value(pools[0]), t.value(pools[2]));
}

#[test]
fn attention_op_matches_per_head_loops() {
    let mut r = rng(50);
    for case in 0..20 {
        let heads = [1, 2, 4][case % 3];
        let d = heads * r.gen_range(1..=4);
        let len = r.gen_range(1..=7);
        let batch = r.gen_range(1..=3);
        let mut p = Params::new();
        let q = p.add("q", rand_mat(&mut r, batch * len, d));
        let k = p.add("k", rand_mat(&mut r, batch * len, d));
        let v = p.add("v", rand_mat(&mut r, batch * len, d));
        let mask: Vec<bool> = (0..batch * len).map(|i| i % len == 0 || r.gen_bool(0.7)).collect();
        let mut t = Tape::new(&p);
        let (qv, kv, vv) = (t.param(q), t.param(k), t.param(v));
        let out = t.attention(qv, kv, vv, heads, len, &mask);
        let probs = t.attention_probs(out).unwrap();
        assert_eq!(probs.len(), batch * heads);
        let got = to_m(t.value(out));
        let (qm, km, vm) = (pm(&p, q), pm(&p, k), pm(&p, v));
        for b in 0..batch {
            let rows = b * len..(b + 1) * len;
            let expect = attention(&qm[rows.clone()].to_vec(), &km[rows.clone()].to_vec(), &vm[rows.clone()].to_vec(), heads, &mask[rows.clone()]);
            for (i, row) in rows.clone().enumerate() {
                for c in 0..d {
                    assert!((expect[i][c] - got[row][c]).abs() < 1e-6);
                }
            }
            for h in 0..heads {
                let pr = &probs[b * heads + h];
                for i in 0..len {
                    assert!((pr.row(i).sum() - 1.0).abs() < 1e-6);
                    for j in 0..len {
                        if !mask[b * len + j] {
                            assert_eq!(pr[[i, j]], 0.0);
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn transformer_forward_matches_hand_evaluation() {
    let mut r = rng(60);
    let cfg = TransformerConfig { d_model: 8, heads: 2, ff: 12, blocks: 2, dropout: 0.0 };
    let mut p = Params::new();
    let m = TransformerModel::new(cfg, 6, &mut p, &mut r);
    randomize(&mut p, &mut r, 0.5);
    let seqs: Vec<_> = (1..=4).map(|l| random_sequence(&mut r, l, 4 - l, 6)).collect();
    let batch = SeqBatch::with_len(&seqs.iter().collect::<Vec<_>>(), 5);
    let mut t = Tape::new(&p);
    let out = m.forward(&mut t, &batch, None);
    let expect: M = seqs.iter().map(|s| transformer_forward(&p, &m, s)).collect();
    let d = max_abs_diff(&expect, t.value(out));
    assert!(d < 1e-6, "max deviation {d:e}");
}

#[test]
fn identical_sequences_give_identical_rows() {
    let mut r = rng(61);
    let mut p = Params::new();
    let m = TransformerModel::new(TransformerConfig { d_model: 8, heads: 2, ff: 8, blocks: 1, dropout: 0.0 }, 6, &mut p, &mut r);
    let s = random_sequence(&mut r, 3, 2, 6);
    let mut t = Tape::new(&p);
    let out = m.forward(&mut t, &SeqBatch::new(&[&s, &s]), None);
    assert_eq!(t.value(out).row(0), t.value(out).row(1));
}

fn small_mlp(seed: u64) -> (MlpModel, Params) {
    let mut r = rng(seed);
    let cfg = MlpConfig { hidden: 5, numeric_layers: 2, final_layers: 2, embed_dim: 3, dropout: 0.0 };
    let mut p = Params::new();
    let m = MlpModel::new(cfg, &mut p, &mut r);
    randomize(&mut p, &mut r, 0.6);
    (m, p)
}

#[test]
fn mlp_forward_matches_hand_evaluation() {
    let (m, p) = small_mlp(70);
    let mut r = rng(71);
    let rows: Vec<MlpFeatures> = (0..6)
        .map(|i| MlpFeatures {
            numeric: (0..MLP_NUMERIC_WIDTH).map(|_| r.gen_range(-2.0..2.0)).collect(),
            categorical: [i % 2, (i / 2) % 2, (i / 3) % 2],
        })
        .collect();
    let batch = MlpBatch::new(&rows.iter().collect::<Vec<_>>()).unwrap();
    for target in Target::ALL {
        let mut t = Tape::new(&p);
        let out = m.forward(&mut t, &batch, target, None);
        for (i, f) in rows.iter().enumerate() {
            let expect = target_net_forward(&p, &m.nets[target.index()], &f.numeric, f.categorical);
            assert!((expect - t.value(out)[[i, 0]]).abs() < 1e-12);
        }
    }
    let mut t = Tape::new(&p);
    let a = m.forward(&mut t, &batch, Target::Lut, None);
    let b = m.forward(&mut t, &batch, Target::Lut, None);
    assert_eq!(t.value(a), t.value(b));
}

#[test]
fn out_of_vocabulary_code_is_rejected() {
    let f = MlpFeatures { numeric: vec![0.0; MLP_NUMERIC_WIDTH], categorical: [0, 1, 2] };
    assert_eq!(MlpBatch::new(&[&f]).unwrap_err(), UnknownCategory { column: 2, code: 2, size: 2 });
    let ok = MlpFeatures { categorical: [1, 1, 1], ..f };
    assert!(MlpBatch::new(&[&ok]).is_ok());
}


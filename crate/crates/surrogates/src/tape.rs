//! Reverse-mode automatic differentiation over row-major `f64` matrices.
//!
//! A [`Tape`] records one forward pass. Operations are coarse (whole-matrix
//! or fused graph/attention kernels) so a training step stays a few hundred
//! nodes long. Gradients flow only to [`Params`] leaves; constant inputs are
//! never differentiated.

use std::rc::Rc;

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};

use crate::params::{Grads, ParamId, Params};

pub type Mat = Array2<f64>;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pool {
    Sum,
    Mean,
    Max,
}

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    AddRowAt(Var, Var, Rc<Vec<usize>>),
    Mul(Var, Var),
    MulConst(Var, Rc<Mat>),
    Scale(Var, f64),
    ScaleBy(Var, Var, usize),
    Elu(Var),
    Relu(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Mat, inv_std: Vec<f64> },
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Rc<Vec<usize>>),
    ScatterAddRows(Var, Rc<Vec<usize>>),
    HeadDot(Var, Var, usize),
    HeadScale(Var, Var, usize),
    HeadMean(Var, usize),
    SegmentSoftmax(Var, Rc<Vec<usize>>, usize),
    SegmentPool(Var, Rc<Vec<usize>>, Pool, Vec<f64>, Vec<usize>),
    RowSoftmax(Var),
    Attention { q: Var, k: Var, v: Var, heads: usize, len: usize, probs: Vec<Mat> },
    WeightedSse(Var, Rc<Mat>, Vec<f64>, f64),
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf | Param(_) => vec![],
            MatMul(a, b) | Add(a, b) | AddRow(a, b) | AddRowAt(a, b, _) | Mul(a, b) | ScaleBy(a, b, _)
            | HeadDot(a, b, _) | HeadScale(a, b, _) => vec![*a, *b],
            MulConst(a, _) | Scale(a, _) | Elu(a) | Relu(a) | SliceCols(a, _) | GatherRows(a, _)
            | ScatterAddRows(a, _) | HeadMean(a, _) | SegmentSoftmax(a, _, _) | SegmentPool(a, ..)
            | RowSoftmax(a) | WeightedSse(a, ..) => vec![*a],
            LayerNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            ConcatCols(v) => v.clone(),
            Attention { q, k, v, .. } => vec![*q, *k, *v],
        }
    }
}

struct Node {
    value: Mat,
    op: Op,
    req: bool,
}

pub struct Tape<'p> {
    params: &'p Params,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

const LN_EPS: f64 = 1e-5;

impl<'p> Tape<'p> {
    pub fn new(params: &'p Params) -> Self {
        Self { params, nodes: Vec::with_capacity(256), param_vars: vec![None; params.len()] }
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        let req = matches!(op, Op::Param(_)) || op.inputs().iter().any(|i| self.nodes[i.0].req);
        self.nodes.push(Node { value, op, req });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    /// The tape leaf for a parameter; repeated calls share one node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let v = self.push(self.params.get(id).clone(), Op::Param(id));
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).dot(self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) + self.value(b);
        self.push(out, Op::Add(a, b))
    }

    /// `x + row` broadcast over rows; `row` is `1 x d`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        let out = self.value(x) + self.value(row);
        self.push(out, Op::AddRow(x, row))
    }

    /// Adds the `1 x d` row to the listed rows of `x` only.
    pub fn add_row_at(&mut self, x: Var, row: Var, rows: Rc<Vec<usize>>) -> Var {
        let mut out = self.value(x).clone();
        let r = self.value(row).row(0).to_owned();
        for &i in rows.iter() {
            let mut o = out.row_mut(i);
            o += &r;
        }
        self.push(out, Op::AddRowAt(x, row, rows))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) * self.value(b);
        self.push(out, Op::Mul(a, b))
    }

    pub fn mul_const(&mut self, a: Var, m: Rc<Mat>) -> Var {
        let out = self.value(a) * &*m;
        self.push(out, Op::MulConst(a, m))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a) * k;
        self.push(out, Op::Scale(a, k))
    }

    /// `x * s[0, idx]`.
    pub fn scale_by(&mut self, x: Var, s: Var, idx: usize) -> Var {
        let k = self.value(s)[[0, idx]];
        let out = self.value(x) * k;
        self.push(out, Op::ScaleBy(x, s, idx))
    }

    pub fn elu(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(|v| if v > 0.0 { v } else { v.exp_m1() });
        self.push(out, Op::Elu(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(|v| v.max(0.0));
        self.push(out, Op::Relu(x))
    }

    /// Row-wise layer normalization with `1 x d` scale and shift.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let d = xv.ncols() as f64;
        let mut xhat = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / d;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
            let is = 1.0 / (var + LN_EPS).sqrt();
            row.mapv_inplace(|v| (v - mean) * is);
            inv_std.push(is);
        }
        let out = &xhat * self.value(gamma) + self.value(beta);
        self.push(out, Op::LayerNorm { x, gamma, beta, xhat, inv_std })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<ArrayView2<f64>> = parts.iter().map(|p| self.value(*p).view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Var {
        let out = self.value(x).slice(s![.., start..end]).to_owned();
        self.push(out, Op::SliceCols(x, start))
    }

    pub fn gather_rows(&mut self, x: Var, idx: Rc<Vec<usize>>) -> Var {
        let out = self.value(x).select(Axis(0), &idx);
        self.push(out, Op::GatherRows(x, idx))
    }

    /// `out[idx[r]] += x[r]` into `n` rows.
    pub fn scatter_add_rows(&mut self, x: Var, idx: Rc<Vec<usize>>, n: usize) -> Var {
        let xv = self.value(x);
        let mut out = Mat::zeros((n, xv.ncols()));
        for (r, &t) in idx.iter().enumerate() {
            let mut o = out.row_mut(t);
            o += &xv.row(r);
        }
        self.push(out, Op::ScatterAddRows(x, idx))
    }

    /// Per-head dot product: `x` is `E x (H*C)`, `a` is `1 x (H*C)`, output `E x H`.
    pub fn head_dot(&mut self, x: Var, a: Var, heads: usize) -> Var {
        let (xv, av) = (self.value(x), self.value(a));
        let c = xv.ncols() / heads;
        let mut out = Mat::zeros((xv.nrows(), heads));
        for h in 0..heads {
            let cols = xv.slice(s![.., h * c..(h + 1) * c]);
            let ah = av.slice(s![0, h * c..(h + 1) * c]);
            let v: Array1<f64> = cols.dot(&ah);
            out.column_mut(h).assign(&v);
        }
        self.push(out, Op::HeadDot(x, a, heads))
    }

    /// Scales each head block of `x` (`E x (H*C)`) by `w` (`E x H`).
    pub fn head_scale(&mut self, x: Var, w: Var, heads: usize) -> Var {
        let (xv, wv) = (self.value(x), self.value(w));
        let c = xv.ncols() / heads;
        let mut out = xv.clone();
        for h in 0..heads {
            let mut block = out.slice_mut(s![.., h * c..(h + 1) * c]);
            Zip::from(block.rows_mut()).and(wv.column(h)).for_each(|mut row, &k| row *= k);
        }
        self.push(out, Op::HeadScale(x, w, heads))
    }

    /// Averages the `H` head blocks of `x` (`n x (H*C)`) into `n x C`.
    pub fn head_mean(&mut self, x: Var, heads: usize) -> Var {
        let xv = self.value(x);
        let c = xv.ncols() / heads;
        let mut out = Mat::zeros((xv.nrows(), c));
        for h in 0..heads {
            out += &xv.slice(s![.., h * c..(h + 1) * c]);
        }
        out /= heads as f64;
        self.push(out, Op::HeadMean(x, heads))
    }

    /// Softmax down each column among rows sharing a segment id.
    pub fn segment_softmax(&mut self, x: Var, seg: Rc<Vec<usize>>, nseg: usize) -> Var {
        let xv = self.value(x);
        let cols = xv.ncols();
        let mut max = Mat::from_elem((nseg, cols), f64::NEG_INFINITY);
        for (r, &g) in seg.iter().enumerate() {
            for c in 0..cols {
                max[[g, c]] = max[[g, c]].max(xv[[r, c]]);
            }
        }
        let mut out = Mat::zeros(xv.raw_dim());
        let mut sum = Mat::zeros((nseg, cols));
        for (r, &g) in seg.iter().enumerate() {
            for c in 0..cols {
                let e = (xv[[r, c]] - max[[g, c]]).exp();
                out[[r, c]] = e;
                sum[[g, c]] += e;
            }
        }
        for (r, &g) in seg.iter().enumerate() {
            for c in 0..cols {
                out[[r, c]] /= sum[[g, c]];
            }
        }
        self.push(out, Op::SegmentSoftmax(x, seg, nseg))
    }

    /// Pools rows of `x` into `nseg` rows by segment id.
    pub fn segment_pool(&mut self, x: Var, seg: Rc<Vec<usize>>, nseg: usize, kind: Pool) -> Var {
        let xv = self.value(x);
        let cols = xv.ncols();
        let mut counts = vec![0.0; nseg];
        let mut arg = Vec::new();
        let out = match kind {
            Pool::Sum | Pool::Mean => {
                let mut out = Mat::zeros((nseg, cols));
                for (r, &g) in seg.iter().enumerate() {
                    let mut o = out.row_mut(g);
                    o += &xv.row(r);
                    counts[g] += 1.0;
                }
                if kind == Pool::Mean {
                    for (mut row, &n) in out.rows_mut().into_iter().zip(&counts) {
                        if n > 0.0 {
                            row /= n;
                        }
                    }
                }
                out
            }
            Pool::Max => {
                let mut out = Mat::from_elem((nseg, cols), f64::NEG_INFINITY);
                arg = vec![usize::MAX; nseg * cols];
                for (r, &g) in seg.iter().enumerate() {
                    for c in 0..cols {
                        if xv[[r, c]] > out[[g, c]] {
                            out[[g, c]] = xv[[r, c]];
                            arg[g * cols + c] = r;
                        }
                    }
                }
                out.mapv_inplace(|v| if v.is_finite() { v } else { 0.0 });
                out
            }
        };
        self.push(out, Op::SegmentPool(x, seg, kind, counts, arg))
    }

    pub fn row_softmax(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        for mut row in out.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            row.mapv_inplace(|v| (v - m).exp());
            let s = row.sum();
            row /= s;
        }
        self.push(out, Op::RowSoftmax(x))
    }

    /// Multi-head scaled dot-product self-attention over `B` sequences of
    /// `len` rows each, stacked as `(B*len) x d`. Keys with a false `key_mask`
    /// entry receive zero weight.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, len: usize, key_mask: &[bool]) -> Var {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (rows, d) = qv.dim();
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let batch = rows / len;
        let mut out = Mat::zeros((rows, d));
        let mut probs = Vec::with_capacity(batch * heads);
        for b in 0..batch {
            let r = b * len..(b + 1) * len;
            let mask = &key_mask[r.clone()];
            for h in 0..heads {
                let cs = h * dh..(h + 1) * dh;
                let qh = qv.slice(s![r.clone(), cs.clone()]);
                let kh = kv.slice(s![r.clone(), cs.clone()]);
                let vh = vv.slice(s![r.clone(), cs.clone()]);
                let mut p = qh.dot(&kh.t()) * scale;
                for mut row in p.rows_mut() {
                    let mut m = f64::NEG_INFINITY;
                    for (j, x) in row.iter().enumerate() {
                        if mask[j] {
                            m = m.max(*x);
                        }
                    }
                    let mut sum = 0.0;
                    for (j, x) in row.iter_mut().enumerate() {
                        *x = if mask[j] { (*x - m).exp() } else { 0.0 };
                        sum += *x;
                    }
                    row /= sum;
                }
                out.slice_mut(s![r.clone(), cs]).assign(&p.dot(&vh));
                probs.push(p);
            }
        }
        self.push(out, Op::Attention { q, k, v, heads, len, probs })
    }

    /// `scale * sum_ij w_j (pred_ij - target_ij)^2` as a `1 x 1` node.
    pub fn weighted_sse(&mut self, pred: Var, target: Rc<Mat>, weights: Vec<f64>, scale: f64) -> Var {
        let pv = self.value(pred);
        let mut total = 0.0;
        for ((i, j), p) in pv.indexed_iter() {
            let e = p - target[[i, j]];
            total += weights[j] * e * e;
        }
        self.push(Mat::from_elem((1, 1), scale * total), Op::WeightedSse(pred, target, weights, scale))
    }

    /// Attention probabilities of an [`Tape::attention`] node, one
    /// `len x len` matrix per (sequence, head).
    pub fn attention_probs(&self, v: Var) -> Option<&[Mat]> {
        match &self.nodes[v.0].op {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// Back-propagates from the scalar `loss` and returns parameter gradients.
    pub fn backward(&self, loss: Var) -> Grads {
        let n = self.nodes.len();
        let mut g: Vec<Option<Mat>> = (0..n).map(|_| None).collect();
        g[loss.0] = Some(Mat::ones(self.value(loss).raw_dim()));
        let mut grads = Grads::zeros_like(self.params);
        for i in (0..=loss.0).rev() {
            let Some(gi) = g[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.req {
                continue;
            }
            if let Op::Param(id) = node.op {
                grads.accumulate(id, &gi);
                continue;
            }
            self.backward_node(node, &gi, &mut g);
        }
        grads
    }

    fn backward_node(&self, node: &Node, gi: &Mat, g: &mut [Option<Mat>]) {
        let req = |v: Var| self.nodes[v.0].req;
        let mut send = |v: Var, d: Mat| {
            if self.nodes[v.0].req {
                match &mut g[v.0] {
                    Some(acc) => *acc += &d,
                    slot => *slot = Some(d),
                }
            }
        };
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                if req(*a) {
                    send(*a, gi.dot(&self.value(*b).t()));
                }
                if req(*b) {
                    send(*b, self.value(*a).t().dot(gi));
                }
            }
            Op::Add(a, b) => {
                send(*a, gi.clone());
                send(*b, gi.clone());
            }
            Op::AddRow(x, row) => {
                send(*x, gi.clone());
                if req(*row) {
                    send(*row, gi.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
            }
            Op::AddRowAt(x, row, rows) => {
                send(*x, gi.clone());
                if req(*row) {
                    let mut d = Mat::zeros((1, gi.ncols()));
                    for &r in rows.iter() {
                        let mut o = d.row_mut(0);
                        o += &gi.row(r);
                    }
                    send(*row, d);
                }
            }
            Op::Mul(a, b) => {
                if req(*a) {
                    send(*a, gi * self.value(*b));
                }
                if req(*b) {
                    send(*b, gi * self.value(*a));
                }
            }
            Op::MulConst(a, m) => send(*a, gi * &**m),
            Op::Scale(a, k) => send(*a, gi * *k),
            Op::ScaleBy(x, sv, idx) => {
                let k = self.value(*sv)[[0, *idx]];
                if req(*x) {
                    send(*x, gi * k);
                }
                if req(*sv) {
                    let mut d = Mat::zeros(self.value(*sv).raw_dim());
                    d[[0, *idx]] = (gi * self.value(*x)).sum();
                    send(*sv, d);
                }
            }
            Op::Elu(x) => {
                let mut d = gi.clone();
                // y <= 0 exactly when x <= 0, and then dy/dx = y + 1
                Zip::from(&mut d).and(&node.value).for_each(|d, &y| {
                    if y <= 0.0 {
                        *d *= y + 1.0;
                    }
                });
                send(*x, d);
            }
            Op::Relu(x) => {
                let mut d = gi.clone();
                Zip::from(&mut d).and(self.value(*x)).for_each(|d, &v| {
                    if v <= 0.0 {
                        *d = 0.0;
                    }
                });
                send(*x, d);
            }
            Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                if req(*gamma) {
                    send(*gamma, (gi * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                if req(*beta) {
                    send(*beta, gi.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                if req(*x) {
                    let dxhat = gi * self.value(*gamma);
                    let d = xhat.ncols() as f64;
                    let mut dx = Mat::zeros(xhat.raw_dim());
                    for (r, is) in inv_std.iter().enumerate() {
                        let dh = dxhat.row(r);
                        let xh = xhat.row(r);
                        let m1 = dh.sum() / d;
                        let m2 = dh.dot(&xh) / d;
                        Zip::from(dx.row_mut(r))
                            .and(&dh)
                            .and(&xh)
                            .for_each(|o, &a, &b| *o = is * (a - m1 - b * m2));
                    }
                    send(*x, dx);
                }
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for p in parts {
                    let w = self.value(*p).ncols();
                    if req(*p) {
                        send(*p, gi.slice(s![.., start..start + w]).to_owned());
                    }
                    start += w;
                }
            }
            Op::SliceCols(x, start) => {
                let mut d = Mat::zeros(self.value(*x).raw_dim());
                d.slice_mut(s![.., *start..*start + gi.ncols()]).assign(gi);
                send(*x, d);
            }
            Op::GatherRows(x, idx) => {
                let mut d = Mat::zeros(self.value(*x).raw_dim());
                for (r, &src) in idx.iter().enumerate() {
                    let mut o = d.row_mut(src);
                    o += &gi.row(r);
                }
                send(*x, d);
            }
            Op::ScatterAddRows(x, idx) => send(*x, gi.select(Axis(0), idx)),
            Op::HeadDot(x, a, heads) => {
                let (xv, av) = (self.value(*x), self.value(*a));
                let c = xv.ncols() / heads;
                if req(*x) {
                    let mut dx = Mat::zeros(xv.raw_dim());
                    for h in 0..*heads {
                        let ah = av.slice(s![0, h * c..(h + 1) * c]);
                        for (mut row, &gv) in dx.slice_mut(s![.., h * c..(h + 1) * c]).rows_mut().into_iter().zip(gi.column(h)) {
                            row.scaled_add(gv, &ah);
                        }
                    }
                    send(*x, dx);
                }
                if req(*a) {
                    let mut da = Mat::zeros(av.raw_dim());
                    for h in 0..*heads {
                        let block = xv.slice(s![.., h * c..(h + 1) * c]);
                        let v: Array1<f64> = block.t().dot(&gi.column(h));
                        da.slice_mut(s![0, h * c..(h + 1) * c]).assign(&v);
                    }
                    send(*a, da);
                }
            }
            Op::HeadScale(x, w, heads) => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let c = xv.ncols() / heads;
                if req(*x) {
                    let mut dx = gi.clone();
                    for h in 0..*heads {
                        let mut block = dx.slice_mut(s![.., h * c..(h + 1) * c]);
                        Zip::from(block.rows_mut()).and(wv.column(h)).for_each(|mut row, &k| row *= k);
                    }
                    send(*x, dx);
                }
                if req(*w) {
                    let mut dw = Mat::zeros(wv.raw_dim());
                    let prod = gi * xv;
                    for h in 0..*heads {
                        dw.column_mut(h).assign(&prod.slice(s![.., h * c..(h + 1) * c]).sum_axis(Axis(1)));
                    }
                    send(*w, dw);
                }
            }
            Op::HeadMean(x, heads) => {
                let c = gi.ncols();
                let mut d = Mat::zeros((gi.nrows(), c * heads));
                let part = gi / *heads as f64;
                for h in 0..*heads {
                    d.slice_mut(s![.., h * c..(h + 1) * c]).assign(&part);
                }
                send(*x, d);
            }
            Op::SegmentSoftmax(x, seg, nseg) => {
                let y = &node.value;
                let cols = y.ncols();
                let mut dot = Mat::zeros((*nseg, cols));
                for (r, &s) in seg.iter().enumerate() {
                    for c in 0..cols {
                        dot[[s, c]] += gi[[r, c]] * y[[r, c]];
                    }
                }
                let mut d = Mat::zeros(y.raw_dim());
                for (r, &s) in seg.iter().enumerate() {
                    for c in 0..cols {
                        d[[r, c]] = y[[r, c]] * (gi[[r, c]] - dot[[s, c]]);
                    }
                }
                send(*x, d);
            }
            Op::SegmentPool(x, seg, kind, counts, arg) => {
                let xv = self.value(*x);
                let cols = xv.ncols();
                let mut d = Mat::zeros(xv.raw_dim());
                match kind {
                    Pool::Sum | Pool::Mean => {
                        for (r, &s) in seg.iter().enumerate() {
                            let k = if *kind == Pool::Mean { 1.0 / counts[s] } else { 1.0 };
                            d.row_mut(r).scaled_add(k, &gi.row(s));
                        }
                    }
                    Pool::Max => {
                        for s in 0..gi.nrows() {
                            for c in 0..cols {
                                let r = arg[s * cols + c];
                                if r != usize::MAX {
                                    d[[r, c]] += gi[[s, c]];
                                }
                            }
                        }
                    }
                }
                send(*x, d);
            }
            Op::RowSoftmax(x) => {
                let y = &node.value;
                let mut d = gi * y;
                for (mut row, yr) in d.rows_mut().into_iter().zip(y.rows()) {
                    let s = row.sum();
                    Zip::from(&mut row).and(&yr).for_each(|o, &yv| *o -= yv * s);
                }
                send(*x, d);
            }
            Op::Attention { q, k, v, heads, len, probs } => {
                let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                let (rows, dm) = qv.dim();
                let dh = dm / heads;
                let scale = 1.0 / (dh as f64).sqrt();
                let (mut dq, mut dk, mut dv) = (Mat::zeros((rows, dm)), Mat::zeros((rows, dm)), Mat::zeros((rows, dm)));
                for b in 0..rows / len {
                    let r = b * len..(b + 1) * len;
                    for h in 0..*heads {
                        let cs = h * dh..(h + 1) * dh;
                        let p = &probs[b * heads + h];
                        let go = gi.slice(s![r.clone(), cs.clone()]);
                        let qh = qv.slice(s![r.clone(), cs.clone()]);
                        let kh = kv.slice(s![r.clone(), cs.clone()]);
                        let vh = vv.slice(s![r.clone(), cs.clone()]);
                        dv.slice_mut(s![r.clone(), cs.clone()]).assign(&p.t().dot(&go));
                        let dp = go.dot(&vh.t());
                        let mut ds = p * &dp;
                        for (mut row, pr) in ds.rows_mut().into_iter().zip(p.rows()) {
                            let sum = row.sum();
                            Zip::from(&mut row).and(&pr).for_each(|o, &pv| *o -= pv * sum);
                        }
                        ds *= scale;
                        dq.slice_mut(s![r.clone(), cs.clone()]).assign(&ds.dot(&kh));
                        dk.slice_mut(s![r.clone(), cs]).assign(&ds.t().dot(&qh));
                    }
                }
                send(*q, dq);
                send(*k, dk);
                send(*v, dv);
            }
            Op::WeightedSse(pred, target, weights, scale) => {
                let gv = gi[[0, 0]];
                let mut d = self.value(*pred) - &**target;
                for ((_, j), x) in d.indexed_iter_mut() {
                    *x *= 2.0 * scale * weights[j] * gv;
                }
                send(*pred, d);
            }
        }
    }
}

//! Parameter storage, gradient buffers and first-order optimizers.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::tape::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamId(pub usize);

/// Named, ordered collection of trainable matrices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Params {
    names: Vec<String>,
    tensors: Vec<Mat>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    /// Glorot-uniform weight matrix.
    pub fn add_weight(&mut self, name: impl Into<String>, rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> ParamId {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let m = Mat::from_shape_fn((rows, cols), |_| rng.gen_range(-limit..limit));
        self.add(name, m)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamId {
        self.add(name, Mat::zeros((rows, cols)))
    }

    pub fn add_filled(&mut self, name: impl Into<String>, rows: usize, cols: usize, v: f64) -> ParamId {
        self.add(name, Mat::from_elem((rows, cols), v))
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Mat::len).sum()
    }

    pub fn shapes(&self) -> Vec<ParamShape> {
        self.names
            .iter()
            .zip(&self.tensors)
            .map(|(n, t)| ParamShape { name: n.clone(), rows: t.nrows(), cols: t.ncols() })
            .collect()
    }

    /// All scalars in declaration order, row-major.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.scalar_count());
        for t in &self.tensors {
            out.extend(t.iter().copied());
        }
        out
    }

    /// Overwrites every tensor from a flat buffer of matching length.
    pub fn load_flat(&mut self, flat: &[f64]) -> Result<(), String> {
        if flat.len() != self.scalar_count() {
            return Err(format!("expected {} parameters, found {}", self.scalar_count(), flat.len()));
        }
        let mut at = 0;
        for t in &mut self.tensors {
            for (x, v) in t.iter_mut().zip(&flat[at..]) {
                *x = *v;
            }
            at += t.len();
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

/// Gradient buffers shaped like a [`Params`] set.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    tensors: Vec<Mat>,
}

impl Grads {
    pub fn zeros_like(p: &Params) -> Self {
        Self { tensors: p.tensors.iter().map(|t| Mat::zeros(t.raw_dim())).collect() }
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.tensors[id.0]
    }

    pub fn accumulate(&mut self, id: ParamId, g: &Mat) {
        self.tensors[id.0] += g;
    }

    /// Element-wise sum, used to combine per-chunk gradients in a fixed order.
    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            *a += b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    AdamW,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        Self { kind: OptimizerKind::Adam, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }

    pub fn adamw(lr: f64) -> Self {
        Self { kind: OptimizerKind::AdamW, weight_decay: 0.01, ..Self::adam(lr) }
    }
}

/// Adam with optional decoupled weight decay.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub cfg: OptimizerConfig,
    m: Vec<Mat>,
    v: Vec<Mat>,
    step: u64,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, p: &Params) -> Self {
        let zeros = || p.tensors.iter().map(|t| Mat::zeros(t.raw_dim())).collect();
        Self { cfg, m: zeros(), v: zeros(), step: 0 }
    }

    pub fn step(&mut self, p: &mut Params, g: &Grads, lr: f64) {
        self.step_masked(p, g, lr, &vec![true; p.len()]);
    }

    /// Updates only parameters whose `active` entry is true.
    pub fn step_masked(&mut self, p: &mut Params, g: &Grads, lr: f64, active: &[bool]) {
        self.step += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let decoupled = c.kind == OptimizerKind::AdamW;
        for (i, t) in p.tensors.iter_mut().enumerate() {
            if !active[i] {
                continue;
            }
            let gr = &g.tensors[i];
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            ndarray::Zip::from(t).and(gr).and(m).and(v).for_each(|w, &gv, m, v| {
                let gv = if decoupled { gv } else { gv + c.weight_decay * *w };
                *m = c.beta1 * *m + (1.0 - c.beta1) * gv;
                *v = c.beta2 * *v + (1.0 - c.beta2) * gv * gv;
                let update = (*m / bc1) / ((*v / bc2).sqrt() + c.eps);
                if decoupled {
                    *w -= lr * c.weight_decay * *w;
                }
                *w -= lr * update;
            });
        }
    }
}

/// Halves the learning rate after `patience` epochs without improvement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    pub threshold: f64,
    best: f64,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize) -> Self {
        Self { lr, factor, patience, min_lr: 1e-6, threshold: 1e-4, best: f64::INFINITY, bad_epochs: 0 }
    }

    /// Feeds one epoch's monitored loss; returns the learning rate to use next.
    pub fn observe(&mut self, loss: f64) -> f64 {
        if loss < self.best * (1.0 - self.threshold) {
            self.best = loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs > self.patience {
                self.lr = (self.lr * self.factor).max(self.min_lr);
                self.bad_epochs = 0;
            }
        }
        self.lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn flat_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = Params::new();
        p.add_weight("w", 3, 4, &mut rng);
        p.add_zeros("b", 1, 4);
        let flat = p.flatten();
        let mut q = p.clone();
        q.get_mut(ParamId(0)).fill(0.0);
        q.load_flat(&flat).unwrap();
        assert_eq!(p, q);
        assert!(q.load_flat(&flat[1..]).is_err());
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut p = Params::new();
        let id = p.add_filled("x", 1, 2, 5.0);
        let mut opt = Optimizer::new(OptimizerConfig::adam(0.1), &p);
        for _ in 0..500 {
            let mut g = Grads::zeros_like(&p);
            let grad = p.get(id) * 2.0;
            g.accumulate(id, &grad);
            opt.step(&mut p, &g, 0.1);
        }
        assert!(p.get(id).iter().all(|v| v.abs() < 1e-2));
    }

    #[test]
    fn plateau_halves_after_patience() {
        let mut s = PlateauScheduler::new(1e-3, 0.5, 2);
        s.observe(1.0);
        for _ in 0..2 {
            assert_eq!(s.observe(1.0), 1e-3);
        }
        assert_eq!(s.observe(1.0), 5e-4);
    }
}

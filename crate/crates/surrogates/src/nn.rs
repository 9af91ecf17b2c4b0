//! Small building blocks shared by the three estimators.

use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::params::{ParamId, Params};
use crate::tape::{Mat, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(p: &mut Params, name: &str, input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w: p.add_weight(format!("{name}.w"), input, output, rng),
            b: p.add_zeros(format!("{name}.b"), 1, output),
        }
    }

    pub fn forward(&self, t: &mut Tape, x: Var) -> Var {
        let w = t.param(self.w);
        let b = t.param(self.b);
        let h = t.matmul(x, w);
        t.add_row(h, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Norm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl Norm {
    pub fn new(p: &mut Params, name: &str, dim: usize) -> Self {
        Self {
            gamma: p.add_filled(format!("{name}.gamma"), 1, dim, 1.0),
            beta: p.add_zeros(format!("{name}.beta"), 1, dim),
        }
    }

    pub fn forward(&self, t: &mut Tape, x: Var) -> Var {
        let g = t.param(self.gamma);
        let b = t.param(self.beta);
        t.layer_norm(x, g, b)
    }
}

/// Inverted dropout. `rng == None` means evaluation mode.
pub fn dropout(t: &mut Tape, x: Var, rate: f64, rng: Option<&mut ChaCha8Rng>) -> Var {
    let Some(rng) = rng else { return x };
    if rate <= 0.0 {
        return x;
    }
    let keep = 1.0 / (1.0 - rate);
    let dim = t.value(x).raw_dim();
    let mask = Mat::from_shape_fn(dim, |_| if rng.gen::<f64>() < rate { 0.0 } else { keep });
    t.mul_const(x, Rc::new(mask))
}

/// Linear layers with ReLU between them (none after the last).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new(p: &mut Params, name: &str, dims: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(p, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Self { layers }
    }

    pub fn forward(&self, t: &mut Tape, mut x: Var, rate: f64, mut rng: Option<&mut ChaCha8Rng>) -> Var {
        let last = self.layers.len().saturating_sub(1);
        for (i, l) in self.layers.iter().enumerate() {
            x = l.forward(t, x);
            if i < last {
                x = t.relu(x);
                x = dropout(t, x, rate, rng.as_deref_mut());
            }
        }
        x
    }
}

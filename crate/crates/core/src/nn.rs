//! Dense parameter storage, optimizers and the few numeric kernels the
//! models share. Everything is `f64` so finite-difference checks stay tight.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    #[serde(skip)]
    pub grad: Vec<f64>,
    /// Whether decoupled weight decay applies.
    #[serde(default)]
    pub decay: bool,
}

impl Param {
    pub fn zeros(name: &str, shape: &[usize], decay: bool) -> Self {
        let n = shape.iter().product();
        Self {
            name: name.to_string(),
            shape: shape.to_vec(),
            value: vec![0.0; n],
            grad: vec![0.0; n],
            decay,
        }
    }

    pub fn uniform(name: &str, shape: &[usize], bound: f64, decay: bool, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(name, shape, decay);
        if bound > 0.0 {
            p.value.iter_mut().for_each(|v| *v = rng.gen_range(-bound..bound));
        }
        p
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    fn ensure_grad(&mut self) {
        if self.grad.len() != self.value.len() {
            self.grad = vec![0.0; self.value.len()];
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub params: Vec<Param>,
}

impl ParamSet {
    pub fn new(params: Vec<Param>) -> Self {
        let mut set = Self { params };
        set.params.iter_mut().for_each(Param::ensure_grad);
        set
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.ensure_grad();
            p.grad.fill(0.0);
        }
    }

    pub fn grad_sq_norm(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.grad.iter())
            .map(|g| g * g)
            .sum()
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(Param::len).sum()
    }

    pub fn snapshot(&self) -> Vec<Vec<f64>> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, values: &[Vec<f64>]) -> Result<()> {
        self.check_layout(values.iter().map(Vec::len))?;
        for (p, v) in self.params.iter_mut().zip(values) {
            p.value.copy_from_slice(v);
        }
        Ok(())
    }

    /// Replaces values from a serialized set with matching names and shapes.
    pub fn load_from(&mut self, other: &ParamSet) -> Result<()> {
        if other.params.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                self.params.len(),
                other.params.len()
            )));
        }
        for (p, o) in self.params.iter_mut().zip(&other.params) {
            if p.name != o.name || p.shape != o.shape || o.value.len() != p.value.len() {
                return Err(Error::Checkpoint(format!(
                    "parameter mismatch: expected `{}` {:?}, found `{}` {:?}",
                    p.name, p.shape, o.name, o.shape
                )));
            }
            p.value.copy_from_slice(&o.value);
        }
        Ok(())
    }

    fn check_layout(&self, lens: impl Iterator<Item = usize>) -> Result<()> {
        let lens: Vec<usize> = lens.collect();
        if lens.len() != self.params.len()
            || lens.iter().zip(&self.params).any(|(l, p)| *l != p.len())
        {
            return Err(Error::State("snapshot layout does not match the model".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    /// Plain stochastic gradient descent.
    Sgd,
    /// Adam with decoupled weight decay.
    #[serde(rename = "adamw")]
    AdamW {
        #[serde(default = "adamw_beta1")]
        beta1: f64,
        #[serde(default = "adamw_beta2")]
        beta2: f64,
        #[serde(default = "adamw_eps")]
        eps: f64,
        #[serde(default = "adamw_weight_decay")]
        weight_decay: f64,
    },
}

fn adamw_beta1() -> f64 {
    0.9
}

fn adamw_beta2() -> f64 {
    0.999
}

fn adamw_eps() -> f64 {
    1e-8
}

fn adamw_weight_decay() -> f64 {
    0.01
}

impl OptimizerConfig {
    pub fn adamw() -> Self {
        OptimizerConfig::AdamW {
            beta1: adamw_beta1(),
            beta2: adamw_beta2(),
            eps: adamw_eps(),
            weight_decay: adamw_weight_decay(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        Self {
            config,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn config(&self) -> OptimizerConfig {
        self.config
    }

    /// One update with gradients multiplied by `grad_scale` (clipping).
    pub fn step(&mut self, params: &mut ParamSet, lr: f64, grad_scale: f64) {
        match self.config {
            OptimizerConfig::Sgd => {
                for p in &mut params.params {
                    for (w, g) in p.value.iter_mut().zip(&p.grad) {
                        *w -= lr * grad_scale * g;
                    }
                }
            }
            OptimizerConfig::AdamW {
                beta1,
                beta2,
                eps,
                weight_decay,
            } => {
                if self.m.len() != params.params.len() {
                    self.m = params.params.iter().map(|p| vec![0.0; p.len()]).collect();
                    self.v = self.m.clone();
                }
                self.t += 1;
                let bc1 = 1.0 - beta1.powi(self.t as i32);
                let bc2 = 1.0 - beta2.powi(self.t as i32);
                for ((p, m), v) in params.params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
                    let wd = if p.decay { weight_decay } else { 0.0 };
                    for i in 0..p.value.len() {
                        let g = p.grad[i] * grad_scale;
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                        let update = (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
                        p.value[i] -= lr * (update + wd * p.value[i]);
                    }
                }
            }
        }
    }
}

/// Scale factor that brings a gradient of squared norm `sq_norm` within `max_norm`.
pub fn clip_scale(sq_norm: f64, max_norm: Option<f64>) -> f64 {
    match max_norm {
        Some(max) if sq_norm.sqrt() > max => max / sq_norm.sqrt(),
        _ => 1.0,
    }
}

/// `out = W x + b` for row-major `W` of shape `out.len() x x.len()`.
pub(crate) fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        *o = b[r] + dot(row, x);
    }
}

/// `out += W x`.
pub(crate) fn matvec_add(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o += dot(&w[r * cols..(r + 1) * cols], x);
    }
}

/// `out += W^T y`.
pub(crate) fn matvec_t_add(w: &[f64], y: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (r, &yr) in y.iter().enumerate() {
        if yr == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (o, wv) in out.iter_mut().zip(row) {
            *o += yr * wv;
        }
    }
}

/// `G += y x^T`.
pub(crate) fn outer_add(g: &mut [f64], y: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, &yr) in y.iter().enumerate() {
        if yr == 0.0 {
            continue;
        }
        let row = &mut g[r * cols..(r + 1) * cols];
        for (gv, xv) in row.iter_mut().zip(x) {
            *gv += yr * xv;
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Inverted dropout mask: entries are `0` or `1 / (1 - rate)`.
pub(crate) fn dropout_mask(len: usize, rate: f64, rng: &mut impl Rng) -> Vec<f64> {
    if rate <= 0.0 {
        return vec![1.0; len];
    }
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_symmetric_logits() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let p = softmax(&[1000.0, 0.0]);
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1] >= 0.0);
    }

    #[test]
    fn sgd_moves_against_gradient() {
        let mut set = ParamSet::new(vec![Param::zeros("w", &[2], true)]);
        set.params[0].grad = vec![1.0, -2.0];
        Optimizer::new(OptimizerConfig::Sgd).step(&mut set, 0.1, 1.0);
        assert_eq!(set.params[0].value, vec![-0.1, 0.2]);
    }

    #[test]
    fn adamw_first_step_is_lr_sized() {
        let mut set = ParamSet::new(vec![Param::zeros("b", &[2], false)]);
        set.params[0].grad = vec![3.0, -0.5];
        Optimizer::new(OptimizerConfig::adamw()).step(&mut set, 0.01, 1.0);
        for (v, s) in set.params[0].value.iter().zip([-1.0, 1.0]) {
            assert!((v - s * 0.01).abs() < 1e-8, "{v}");
        }
    }

    #[test]
    fn clip_only_above_threshold() {
        assert_eq!(clip_scale(0.25, Some(1.0)), 1.0);
        assert!((clip_scale(4.0, Some(1.0)) - 0.5).abs() < 1e-15);
        assert_eq!(clip_scale(100.0, None), 1.0);
    }

    #[test]
    fn matvec_kernels_agree() {
        let w = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let x = [1.0, 0.0, -1.0];
        let mut out = [0.0; 2];
        affine(&w, &[0.5, -0.5], &x, &mut out);
        assert_eq!(out, [-1.5, -2.5]);
        let mut t = [0.0; 3];
        matvec_t_add(&w, &[1.0, 1.0], &mut t);
        assert_eq!(t, [5.0, 7.0, 9.0]);
        let mut g = [0.0; 6];
        outer_add(&mut g, &[1.0, 2.0], &x);
        assert_eq!(g, [1.0, 0.0, -1.0, 2.0, 0.0, -2.0]);
    }
}

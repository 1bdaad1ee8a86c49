use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backbone::{BackboneOptions, Encoder, EncoderSnapshot};
use super::ClassifierKind;
use crate::error::{Error, Result};
use crate::nn::{affine, matvec_t_add, outer_add, Optimizer, OptimizerConfig, Param, ParamSet};

/// Shape and seed of one toy encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyVariant {
    pub name: &'static str,
    pub seed: u64,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub buckets: usize,
}

pub const TOY_VARIANTS: [ToyVariant; 5] = [
    ToyVariant { name: "toy-1", seed: 11, embed_dim: 16, hidden_dim: 16, buckets: 4096 },
    ToyVariant { name: "toy-2", seed: 23, embed_dim: 24, hidden_dim: 16, buckets: 4096 },
    ToyVariant { name: "toy-3", seed: 37, embed_dim: 16, hidden_dim: 24, buckets: 2048 },
    ToyVariant { name: "toy-4", seed: 41, embed_dim: 32, hidden_dim: 16, buckets: 4096 },
    ToyVariant { name: "toy-5", seed: 53, embed_dim: 20, hidden_dim: 20, buckets: 8192 },
];

#[derive(Serialize, Deserialize)]
struct ToyState {
    name: String,
    seed: u64,
    embed_dim: usize,
    hidden_dim: usize,
    buckets: usize,
    params: ParamSet,
}

struct Cached {
    buckets: Vec<usize>,
    mean: Vec<f64>,
    hidden: Vec<f64>,
}

/// Hashed bag-of-embeddings encoder: mean-pooled bucket embeddings followed
/// by one tanh layer. Has its own whitespace tokenizer, so it needs no
/// vocabulary fitting.
pub struct ToyEncoder {
    name: String,
    variant: ToyVariant,
    max_length: usize,
    params: ParamSet,
    optimizer: Option<Optimizer>,
    cache: Vec<Cached>,
}

const EMBED: usize = 0;
const WEIGHT: usize = 1;
const BIAS: usize = 2;

fn bucket_of(token: &str, seed: u64, buckets: usize) -> usize {
    // FNV-1a, salted with the variant seed
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in token.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    (h % buckets as u64) as usize
}

impl ToyEncoder {
    pub fn new(variant: ToyVariant, options: &BackboneOptions) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(variant.seed.wrapping_add(options.seed.wrapping_mul(1_000_003)));
        let w_bound = 1.0 / (variant.embed_dim as f64).sqrt();
        let params = ParamSet::new(vec![
            Param::uniform("embedding", &[variant.buckets, variant.embed_dim], 0.5, false, &mut rng),
            Param::uniform("pool.weight", &[variant.hidden_dim, variant.embed_dim], w_bound, true, &mut rng),
            Param::zeros("pool.bias", &[variant.hidden_dim], false),
        ]);
        Self {
            name: variant.name.to_string(),
            variant,
            max_length: options.max_length.max(1),
            params,
            optimizer: None,
            cache: Vec::new(),
        }
    }

    /// Same encoder registered under another name.
    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    fn bucket_ids(&self, text: &str) -> Vec<usize> {
        text.split_whitespace()
            .take(self.max_length)
            .map(|t| bucket_of(t, self.variant.seed, self.variant.buckets))
            .collect()
    }

    fn forward_one(&self, text: &str) -> Cached {
        let d = self.variant.embed_dim;
        let buckets = self.bucket_ids(text);
        let mut mean = vec![0.0; d];
        let emb = &self.params.params[EMBED].value;
        for &b in &buckets {
            mean.iter_mut().zip(&emb[b * d..(b + 1) * d]).for_each(|(m, e)| *m += e);
        }
        if !buckets.is_empty() {
            let inv = 1.0 / buckets.len() as f64;
            mean.iter_mut().for_each(|m| *m *= inv);
        }
        let mut hidden = vec![0.0; self.variant.hidden_dim];
        affine(&self.params.params[WEIGHT].value, &self.params.params[BIAS].value, &mean, &mut hidden);
        hidden.iter_mut().for_each(|h| *h = h.tanh());
        Cached { buckets, mean, hidden }
    }
}

impl Encoder for ToyEncoder {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> ClassifierKind {
        ClassifierKind::Toy
    }

    fn output_dim(&self) -> usize {
        self.variant.hidden_dim
    }

    fn encode(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        Ok(texts.iter().map(|t| self.forward_one(t).hidden).collect())
    }

    fn encode_train(&mut self, texts: &[&str], _rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
        self.params.zero_grad();
        self.cache = texts.iter().map(|t| self.forward_one(t)).collect();
        Ok(self.cache.iter().map(|c| c.hidden.clone()).collect())
    }

    fn backward(&mut self, grad_pooled: &[Vec<f64>]) -> Result<()> {
        if grad_pooled.len() != self.cache.len() {
            return Err(Error::State("backward batch does not match the cached forward pass".into()));
        }
        let d = self.variant.embed_dim;
        let cache = std::mem::take(&mut self.cache);
        for (c, g) in cache.iter().zip(grad_pooled) {
            let dz: Vec<f64> = g.iter().zip(&c.hidden).map(|(g, h)| g * (1.0 - h * h)).collect();
            outer_add(&mut self.params.params[WEIGHT].grad, &dz, &c.mean);
            self.params.params[BIAS].grad.iter_mut().zip(&dz).for_each(|(b, v)| *b += v);
            if c.buckets.is_empty() {
                continue;
            }
            let mut d_mean = vec![0.0; d];
            matvec_t_add(&self.params.params[WEIGHT].value, &dz, &mut d_mean);
            let inv = 1.0 / c.buckets.len() as f64;
            let grad = &mut self.params.params[EMBED].grad;
            for &b in &c.buckets {
                grad[b * d..(b + 1) * d]
                    .iter_mut()
                    .zip(&d_mean)
                    .for_each(|(g, v)| *g += v * inv);
            }
        }
        Ok(())
    }

    fn grad_sq_norm(&self) -> Result<f64> {
        Ok(self.params.grad_sq_norm())
    }

    fn apply_update(&mut self, lr: f64, grad_scale: f64, optimizer: &OptimizerConfig) -> Result<()> {
        self.optimizer
            .get_or_insert_with(|| Optimizer::new(*optimizer))
            .step(&mut self.params, lr, grad_scale);
        Ok(())
    }

    fn snapshot(&mut self) -> Result<EncoderSnapshot> {
        Ok(EncoderSnapshot::Params(self.params.snapshot()))
    }

    fn restore(&mut self, snapshot: &EncoderSnapshot) -> Result<()> {
        match snapshot {
            EncoderSnapshot::Params(p) => self.params.restore(p),
            EncoderSnapshot::Remote(_) => Err(Error::State("toy encoder cannot restore a remote snapshot".into())),
        }
    }

    fn save_state(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(ToyState {
            name: self.name.clone(),
            seed: self.variant.seed,
            embed_dim: self.variant.embed_dim,
            hidden_dim: self.variant.hidden_dim,
            buckets: self.variant.buckets,
            params: self.params.clone(),
        })?)
    }

    fn load_state(&mut self, state: &serde_json::Value) -> Result<()> {
        let s: ToyState = serde_json::from_value(state.clone())?;
        let v = self.variant;
        if (s.seed, s.embed_dim, s.hidden_dim, s.buckets) != (v.seed, v.embed_dim, v.hidden_dim, v.buckets) {
            return Err(Error::Checkpoint(format!(
                "checkpoint for toy encoder `{}` does not match registered `{}`",
                s.name, self.name
            )));
        }
        self.params.load_from(&s.params)
    }
}

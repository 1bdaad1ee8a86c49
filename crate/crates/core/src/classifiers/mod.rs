//! The classifier contract and its implementations: the bidirectional LSTM
//! baseline, backbone encoders with a trainable head, and the toy encoders
//! used for desk-scale runs.

mod backbone;
mod checkpoint;
mod external;
mod text_rnn;
mod toy;

use std::collections::BTreeMap;
use std::fmt;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{softmax, OptimizerConfig};

pub use backbone::{
    BackboneClassifier, BackboneOptions, BackboneRegistry, Encoder, EncoderConstructor, EncoderSnapshot,
    PRETRAINED_BACKBONES,
};
pub use checkpoint::{load_checkpoint, Checkpoint, ModelPayload, CHECKPOINT_FORMAT};
pub use external::{
    EncoderServer, ExternalEncoder, ExternalEncoderConfig, LoopbackTransport, ProcessTransport, Transport,
};
pub use text_rnn::{TextRnn, TextRnnConfig};
pub use toy::{ToyEncoder, ToyVariant, TOY_VARIANTS};

/// Tolerance on the probability-simplex sum.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// Class-probability vector on the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::Validation("empty probability vector".into()));
        }
        if probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Validation(format!(
                "probabilities must lie in [0, 1]: {probabilities:?}"
            )));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::Validation(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(Self(probabilities))
    }

    pub fn from_logits(logits: &[f64]) -> Self {
        Self(softmax(logits))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }

    pub fn max_probability(&self) -> f64 {
        self.0[self.argmax()]
    }
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(p: ProbVector) -> Self {
        p.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    TextRnn,
    Backbone,
    Toy,
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifierKind::TextRnn => "text_rnn",
            ClassifierKind::Backbone => "backbone",
            ClassifierKind::Toy => "toy",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backbone_name: Option<String>,
    #[serde(default)]
    pub hyperparameters: BTreeMap<String, serde_json::Value>,
}

impl ClassifierSpec {
    pub fn text_rnn() -> Self {
        Self {
            kind: ClassifierKind::TextRnn,
            backbone_name: None,
            hyperparameters: BTreeMap::new(),
        }
    }

    pub fn backbone(name: impl Into<String>) -> Self {
        Self {
            kind: ClassifierKind::Backbone,
            backbone_name: Some(name.into()),
            hyperparameters: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, &self.backbone_name) {
            (ClassifierKind::Backbone | ClassifierKind::Toy, None) => Err(Error::Validation(format!(
                "classifier kind {} requires a backbone name",
                self.kind
            ))),
            _ => Ok(()),
        }
    }

    /// Display name: the backbone name, or the kind.
    pub fn label(&self) -> String {
        self.backbone_name.clone().unwrap_or_else(|| self.kind.to_string())
    }
}

/// Per-step optimization settings handed to [`Classifier::train_batch`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSettings {
    pub lr: f64,
    pub optimizer: OptimizerConfig,
    pub clip_norm: Option<f64>,
}

/// Opaque parameter snapshot used for best-epoch restoration.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSnapshot {
    pub(crate) local: Vec<Vec<f64>>,
    pub(crate) encoder: Option<EncoderSnapshot>,
}

/// A trainable text classifier over raw texts.
///
/// Models do their own preprocessing: the recurrent baseline cleans and
/// encodes against its vocabulary, backbones clean and hand the string to
/// their encoder.
pub trait Classifier: Send + Sync {
    fn spec(&self) -> &ClassifierSpec;

    fn num_classes(&self) -> usize;

    fn is_trained(&self) -> bool;

    fn mark_trained(&mut self);

    /// Eval-mode logits (no dropout), one row per text.
    fn logits(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>>;

    /// One optimizer step on a mini-batch against soft targets.
    /// Returns the mean smoothed cross-entropy of the batch before the update.
    fn train_batch(
        &mut self,
        texts: &[&str],
        targets: &[Vec<f64>],
        step: &StepSettings,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64>;

    fn snapshot(&mut self) -> Result<ModelSnapshot>;

    fn restore(&mut self, snapshot: &ModelSnapshot) -> Result<()>;

    fn checkpoint(&self) -> Result<Checkpoint>;
}

/// Probability vectors for a batch; fails on an untrained model.
pub fn predict_proba(model: &dyn Classifier, texts: &[&str]) -> Result<Vec<ProbVector>> {
    if !model.is_trained() {
        return Err(Error::State(format!(
            "{} model has not been trained",
            model.spec().label()
        )));
    }
    Ok(model
        .logits(texts)?
        .iter()
        .map(|l| ProbVector::from_logits(l))
        .collect())
}

/// Mean smoothed cross-entropy of `logits` against `targets`, and its
/// gradient with respect to the logits.
pub(crate) fn batch_loss_and_grad(logits: &[Vec<f64>], targets: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
    let n = logits.len().max(1) as f64;
    let mut loss = 0.0;
    let grads = logits
        .iter()
        .zip(targets)
        .map(|(l, t)| {
            let p = softmax(l);
            loss += crate::training::smoothed_cross_entropy(&p, t);
            let t_sum: f64 = t.iter().sum();
            p.iter().zip(t).map(|(pi, ti)| (pi * t_sum - ti) / n).collect()
        })
        .collect();
    (loss / n, grads)
}

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::external::{ExternalEncoder, ExternalEncoderConfig};
use super::toy::{ToyEncoder, TOY_VARIANTS};
use super::{
    batch_loss_and_grad, Checkpoint, ClassifierKind, ClassifierSpec, Classifier, ModelPayload, ModelSnapshot,
    StepSettings,
};
use crate::error::{Error, Result};
use crate::nn::{affine, clip_scale, matvec_t_add, outer_add, Optimizer, OptimizerConfig, Param, ParamSet};
use crate::preprocess::{clean, CleanConfig};

/// Backbone names a full-scale run plugs in through external encoders.
pub const PRETRAINED_BACKBONES: [&str; 6] = ["bert", "ernie", "roberta", "xlnet", "electra", "covid-twitter-bert"];

/// A text encoder producing one pooled vector per input string.
///
/// Training goes through `encode_train` / `backward` / `apply_update`; the
/// encoder keeps whatever activations it needs between the first two.
pub trait Encoder: Send + Sync {
    fn name(&self) -> &str;

    fn kind(&self) -> ClassifierKind {
        ClassifierKind::Backbone
    }

    fn output_dim(&self) -> usize;

    /// Eval-mode pooled representations.
    fn encode(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>>;

    /// Train-mode forward pass; clears accumulated gradients.
    fn encode_train(&mut self, texts: &[&str], rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>>;

    /// Accumulates gradients for the last `encode_train` batch.
    fn backward(&mut self, grad_pooled: &[Vec<f64>]) -> Result<()>;

    fn grad_sq_norm(&self) -> Result<f64>;

    fn apply_update(&mut self, lr: f64, grad_scale: f64, optimizer: &OptimizerConfig) -> Result<()>;

    fn snapshot(&mut self) -> Result<EncoderSnapshot>;

    fn restore(&mut self, snapshot: &EncoderSnapshot) -> Result<()>;

    /// Serializable weights (or a reference to them) for checkpoints.
    fn save_state(&self) -> Result<serde_json::Value>;

    fn load_state(&mut self, state: &serde_json::Value) -> Result<()>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum EncoderSnapshot {
    Params(Vec<Vec<f64>>),
    /// Handle to weights held by an external process.
    Remote(String),
}

/// Construction options shared by every backbone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneOptions {
    /// Maximum whitespace tokens (toy) or subword tokens (external) per input.
    pub max_length: usize,
    pub seed: u64,
}

impl Default for BackboneOptions {
    fn default() -> Self {
        Self {
            max_length: 140,
            seed: 0,
        }
    }
}

pub type EncoderConstructor = Arc<dyn Fn(&BackboneOptions) -> Result<Box<dyn Encoder>> + Send + Sync>;

/// Name → encoder constructor map.
#[derive(Clone)]
pub struct BackboneRegistry {
    entries: BTreeMap<String, EncoderConstructor>,
}

impl std::fmt::Debug for BackboneRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackboneRegistry").field("names", &self.names()).finish()
    }
}

impl Default for BackboneRegistry {
    /// The five toy encoders, `toy-1` through `toy-5`.
    fn default() -> Self {
        let mut registry = Self::empty();
        for variant in TOY_VARIANTS {
            registry.register(variant.name, move |opts| Ok(Box::new(ToyEncoder::new(variant, opts)) as Box<dyn Encoder>));
        }
        registry
    }
}

impl BackboneRegistry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn register<F>(&mut self, name: impl Into<String>, constructor: F)
    where
        F: Fn(&BackboneOptions) -> Result<Box<dyn Encoder>> + Send + Sync + 'static,
    {
        self.entries.insert(name.into(), Arc::new(constructor));
    }

    /// Registers a backbone served by an external process.
    pub fn register_external(&mut self, name: impl Into<String>, config: ExternalEncoderConfig) {
        let name = name.into();
        let backbone = name.clone();
        self.register(name, move |opts| {
            Ok(Box::new(ExternalEncoder::spawn(&backbone, &config, opts)?) as Box<dyn Encoder>)
        });
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn check(&self, name: &str) -> Result<()> {
        if self.contains(name) {
            Ok(())
        } else {
            Err(Error::UnknownBackbone {
                name: name.to_string(),
                available: self.names(),
            })
        }
    }

    pub fn build_encoder(&self, name: &str, options: &BackboneOptions) -> Result<Box<dyn Encoder>> {
        self.check(name)?;
        (self.entries[name])(options)
    }

    /// Encoder plus freshly initialized head.
    pub fn build(
        &self,
        name: &str,
        num_classes: usize,
        clean: CleanConfig,
        options: &BackboneOptions,
    ) -> Result<BackboneClassifier> {
        let encoder = self.build_encoder(name, options)?;
        BackboneClassifier::new(encoder, num_classes, clean, options)
    }
}

/// Encoder with a trainable affine head over its pooled output.
pub struct BackboneClassifier {
    spec: ClassifierSpec,
    encoder: Box<dyn Encoder>,
    head: ParamSet,
    head_optimizer: Option<Optimizer>,
    clean: CleanConfig,
    options: BackboneOptions,
    num_classes: usize,
    trained: bool,
}

impl std::fmt::Debug for BackboneClassifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackboneClassifier")
            .field("spec", &self.spec)
            .field("num_classes", &self.num_classes)
            .field("trained", &self.trained)
            .finish()
    }
}

impl BackboneClassifier {
    pub fn new(
        encoder: Box<dyn Encoder>,
        num_classes: usize,
        clean: CleanConfig,
        options: &BackboneOptions,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidArgument("num_classes must be at least 2".into()));
        }
        let dim = encoder.output_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed ^ 0x4845_4144);
        let bound = 1.0 / (dim as f64).sqrt();
        let head = ParamSet::new(vec![
            Param::uniform("head.weight", &[num_classes, dim], bound, true, &mut rng),
            Param::zeros("head.bias", &[num_classes], false),
        ]);
        let spec = ClassifierSpec {
            kind: encoder.kind(),
            backbone_name: Some(encoder.name().to_string()),
            hyperparameters: BTreeMap::from([
                ("max_length".to_string(), options.max_length.into()),
                ("seed".to_string(), options.seed.into()),
            ]),
        };
        Ok(Self {
            spec,
            encoder,
            head,
            head_optimizer: None,
            clean,
            options: *options,
            num_classes,
            trained: false,
        })
    }

    pub(crate) fn from_checkpoint_parts(
        mut encoder: Box<dyn Encoder>,
        spec: ClassifierSpec,
        num_classes: usize,
        clean: CleanConfig,
        options: &BackboneOptions,
        encoder_state: &serde_json::Value,
        head: &ParamSet,
    ) -> Result<Self> {
        encoder.load_state(encoder_state)?;
        let mut model = Self::new(encoder, num_classes, clean, options)?;
        model.head.load_from(head)?;
        model.spec = spec;
        model.trained = true;
        Ok(model)
    }

    pub fn encoder(&self) -> &dyn Encoder {
        self.encoder.as_ref()
    }

    fn cleaned(&self, texts: &[&str]) -> Vec<String> {
        texts.iter().map(|t| clean(t, &self.clean)).collect()
    }

    fn head_logits(&self, pooled: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_classes];
        affine(&self.head.params[0].value, &self.head.params[1].value, pooled, &mut out);
        out
    }
}

impl Classifier for BackboneClassifier {
    fn spec(&self) -> &ClassifierSpec {
        &self.spec
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn is_trained(&self) -> bool {
        self.trained
    }

    fn mark_trained(&mut self) {
        self.trained = true;
    }

    fn logits(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let cleaned = self.cleaned(texts);
        let refs: Vec<&str> = cleaned.iter().map(String::as_str).collect();
        let pooled = self.encoder.encode(&refs)?;
        Ok(pooled.iter().map(|p| self.head_logits(p)).collect())
    }

    fn train_batch(
        &mut self,
        texts: &[&str],
        targets: &[Vec<f64>],
        step: &StepSettings,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        let cleaned = self.cleaned(texts);
        let refs: Vec<&str> = cleaned.iter().map(String::as_str).collect();
        let pooled = self.encoder.encode_train(&refs, rng)?;
        let logits: Vec<Vec<f64>> = pooled.iter().map(|p| self.head_logits(p)).collect();
        let (loss, d_logits) = batch_loss_and_grad(&logits, targets);

        self.head.zero_grad();
        let dim = self.encoder.output_dim();
        let mut d_pooled = Vec::with_capacity(pooled.len());
        for (p, d) in pooled.iter().zip(&d_logits) {
            outer_add(&mut self.head.params[0].grad, d, p);
            self.head.params[1].grad.iter_mut().zip(d).for_each(|(g, v)| *g += v);
            let mut dp = vec![0.0; dim];
            matvec_t_add(&self.head.params[0].value, d, &mut dp);
            d_pooled.push(dp);
        }
        self.encoder.backward(&d_pooled)?;

        let sq_norm = self.head.grad_sq_norm() + self.encoder.grad_sq_norm()?;
        let scale = clip_scale(sq_norm, step.clip_norm);
        self.head_optimizer
            .get_or_insert_with(|| Optimizer::new(step.optimizer))
            .step(&mut self.head, step.lr, scale);
        self.encoder.apply_update(step.lr, scale, &step.optimizer)?;
        Ok(loss)
    }

    fn snapshot(&mut self) -> Result<ModelSnapshot> {
        Ok(ModelSnapshot {
            local: self.head.snapshot(),
            encoder: Some(self.encoder.snapshot()?),
        })
    }

    fn restore(&mut self, snapshot: &ModelSnapshot) -> Result<()> {
        self.head.restore(&snapshot.local)?;
        match &snapshot.encoder {
            Some(s) => self.encoder.restore(s),
            None => Err(Error::State("snapshot has no encoder state".into())),
        }
    }

    fn checkpoint(&self) -> Result<Checkpoint> {
        Ok(Checkpoint::new(
            self.spec.clone(),
            self.num_classes,
            self.clean,
            ModelPayload::Backbone {
                options: self.options,
                encoder: self.encoder.save_state()?,
                head: self.head.clone(),
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::predict_proba;

    #[test]
    fn default_registry_has_five_toys() {
        let r = BackboneRegistry::default();
        assert_eq!(r.names(), vec!["toy-1", "toy-2", "toy-3", "toy-4", "toy-5"]);
    }

    #[test]
    fn unknown_backbone_lists_names() {
        let r = BackboneRegistry::default();
        let err = r
            .build("gpt-7", 2, CleanConfig::default(), &BackboneOptions::default())
            .unwrap_err();
        match &err {
            Error::UnknownBackbone { name, available } => {
                assert_eq!(name, "gpt-7");
                assert_eq!(available.len(), 5);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("toy-3"));
    }

    #[test]
    fn registered_alias_produces_logits() {
        let mut r = BackboneRegistry::default();
        r.register("bert", |opts| Ok(Box::new(ToyEncoder::new(TOY_VARIANTS[0], opts).with_name("bert")) as Box<dyn Encoder>));
        let m = r.build("bert", 2, CleanConfig::default(), &BackboneOptions::default()).unwrap();
        let out = m.logits(&["covid vaccine news", "drink bleach", "x"]).unwrap();
        assert_eq!(out.len(), 3);
        assert!(out.iter().all(|l| l.len() == 2));
        assert_eq!(m.spec().backbone_name.as_deref(), Some("bert"));
    }

    #[test]
    fn untrained_predict_is_a_state_error() {
        let r = BackboneRegistry::default();
        let m = r.build("toy-1", 2, CleanConfig::default(), &BackboneOptions::default()).unwrap();
        assert!(matches!(predict_proba(&m, &["a"]), Err(Error::State(_))));
    }
}

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{lr_at, smooth_targets, smoothed_cross_entropy, ScheduleConfig, SmoothingConfig};
use crate::classifiers::{Classifier, ProbVector, StepSettings};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::evaluation::weighted_f1_indices;
use crate::nn::OptimizerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub schedule: ScheduleConfig,
    /// Label-smoothing epsilon; 0 trains on one-hot targets.
    pub label_smoothing: f64,
    pub optimizer: OptimizerConfig,
    /// Global gradient-norm clip.
    pub clip_norm: Option<f64>,
}

impl TrainConfig {
    /// Recurrent baseline: 120 epochs, batch 128, SGD at 0.01 decayed 10x every 30 epochs.
    pub fn text_rnn() -> Self {
        Self {
            epochs: 120,
            batch_size: 128,
            seed: 0,
            schedule: ScheduleConfig::step_decay(),
            label_smoothing: 0.0,
            optimizer: OptimizerConfig::Sgd,
            clip_norm: None,
        }
    }

    /// Per-fold backbone fine-tuning: 12 epochs, batch 256, warmup + cosine,
    /// AdamW, smoothing 0.01, clip at norm 1.
    pub fn backbone() -> Self {
        Self {
            epochs: 12,
            batch_size: 256,
            seed: 0,
            schedule: ScheduleConfig::warmup_cosine(),
            label_smoothing: 0.01,
            optimizer: OptimizerConfig::adamw(),
            clip_norm: Some(1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch_size must be at least 1".into()));
        }
        self.schedule.validate()?;
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::InvalidArgument("label_smoothing must be in [0, 1)".into()));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::backbone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// One-based epoch number.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_f1: f64,
    pub val_f1: f64,
    /// Learning rate of the epoch's first step.
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub model: String,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_f1: f64,
}

impl TrainRecord {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,train_f1,val_f1,lr\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.epoch, e.train_loss, e.val_loss, e.train_f1, e.val_f1, e.lr
            ));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)?)
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

/// Mean loss and weighted F1 of a model on a labeled corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitScore {
    pub loss: f64,
    pub weighted_f1: f64,
}

const EVAL_CHUNK: usize = 512;

pub fn evaluate_split(model: &dyn Classifier, corpus: &Corpus, epsilon: f64) -> Result<SplitScore> {
    let labels = corpus.require_labels()?;
    let k = model.num_classes();
    let smoothing = SmoothingConfig::new(epsilon, k)?;
    let texts = corpus.texts();
    let mut loss = 0.0;
    let mut predicted = Vec::with_capacity(texts.len());
    for (chunk, chunk_labels) in texts.chunks(EVAL_CHUNK).zip(labels.chunks(EVAL_CHUNK)) {
        for (logits, &label) in model.logits(chunk)?.iter().zip(chunk_labels) {
            let p = ProbVector::from_logits(logits);
            loss += smoothed_cross_entropy(p.as_slice(), &smooth_targets(label, &smoothing)?);
            predicted.push(p.argmax());
        }
    }
    let n = labels.len().max(1) as f64;
    Ok(SplitScore {
        loss: loss / n,
        weighted_f1: weighted_f1_indices(&labels, &predicted, k),
    })
}

/// Trains `model` and leaves it holding the parameters of its best epoch.
///
/// Each optimizer step uses `lr_at(steps_done / steps_per_epoch)`. After
/// every epoch the model is scored in eval mode on both splits; the first
/// epoch reaching the highest validation weighted F1 is kept.
pub fn train(model: &mut dyn Classifier, train: &Corpus, val: &Corpus, config: &TrainConfig) -> Result<TrainRecord> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidArgument("train and validation corpora must be non-empty".into()));
    }
    let k = model.num_classes();
    if train.vocabulary().len() != k {
        return Err(Error::InvalidArgument(format!(
            "model has {k} classes but the corpus vocabulary has {}",
            train.vocabulary().len()
        )));
    }
    let smoothing = SmoothingConfig::new(config.label_smoothing, k)?;
    let labels = train.require_labels()?;
    val.require_labels()?;
    let targets: Vec<Vec<f64>> = labels
        .iter()
        .map(|&l| smooth_targets(l, &smoothing))
        .collect::<Result<_>>()?;
    let texts = train.texts();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let steps_per_epoch = texts.len().div_ceil(config.batch_size);
    let mut order: Vec<usize> = (0..texts.len()).collect();
    let mut steps_done = 0usize;
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, _)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut first_lr = None;
        for (step_in_epoch, batch) in order.chunks(config.batch_size).enumerate() {
            let lr = lr_at(steps_done as f64 / steps_per_epoch as f64, &config.schedule);
            first_lr.get_or_insert(lr);
            let batch_texts: Vec<&str> = batch.iter().map(|&i| texts[i]).collect();
            let batch_targets: Vec<Vec<f64>> = batch.iter().map(|&i| targets[i].clone()).collect();
            let step = StepSettings {
                lr,
                optimizer: config.optimizer,
                clip_norm: config.clip_norm,
            };
            let loss = model.train_batch(&batch_texts, &batch_targets, &step, &mut rng)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step: step_in_epoch + 1,
                });
            }
            loss_sum += loss * batch.len() as f64;
            steps_done += 1;
        }
        let train_score = evaluate_split(model, train, config.label_smoothing)?;
        let val_score = evaluate_split(model, val, config.label_smoothing)?;
        if !val_score.loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                step: steps_per_epoch,
            });
        }
        log::debug!(
            "{} epoch {epoch}: loss {:.4} val_loss {:.4} train_f1 {:.4} val_f1 {:.4}",
            model.spec().label(),
            loss_sum / texts.len() as f64,
            val_score.loss,
            train_score.weighted_f1,
            val_score.weighted_f1
        );
        epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / texts.len() as f64,
            val_loss: val_score.loss,
            train_f1: train_score.weighted_f1,
            val_f1: val_score.weighted_f1,
            lr: first_lr.unwrap_or_default(),
        });
        if best.as_ref().map_or(true, |(_, f1, _)| val_score.weighted_f1 > *f1) {
            best = Some((epoch, val_score.weighted_f1, model.snapshot()?));
        }
    }

    let (best_epoch, best_val_f1, snapshot) = best.expect("at least one epoch");
    model.restore(&snapshot)?;
    model.mark_trained();
    Ok(TrainRecord {
        model: model.spec().label(),
        epochs,
        best_epoch,
        best_val_f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{Checkpoint, ClassifierSpec, ModelSnapshot};
    use crate::corpus::{LabelVocabulary, Sample, SplitTag};

    /// Predicts a fixed distribution and never learns.
    struct Constant {
        spec: ClassifierSpec,
        logits: Vec<f64>,
        trained: bool,
    }

    impl Classifier for Constant {
        fn spec(&self) -> &ClassifierSpec {
            &self.spec
        }
        fn num_classes(&self) -> usize {
            self.logits.len()
        }
        fn is_trained(&self) -> bool {
            self.trained
        }
        fn mark_trained(&mut self) {
            self.trained = true;
        }
        fn logits(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
            Ok(vec![self.logits.clone(); texts.len()])
        }
        fn train_batch(&mut self, texts: &[&str], targets: &[Vec<f64>], _: &StepSettings, _: &mut ChaCha8Rng) -> Result<f64> {
            let logits = self.logits(texts)?;
            Ok(crate::classifiers::batch_loss_and_grad(&logits, targets).0)
        }
        fn snapshot(&mut self) -> Result<ModelSnapshot> {
            Ok(ModelSnapshot { local: vec![self.logits.clone()], encoder: None })
        }
        fn restore(&mut self, s: &ModelSnapshot) -> Result<()> {
            self.logits = s.local[0].clone();
            Ok(())
        }
        fn checkpoint(&self) -> Result<Checkpoint> {
            Err(Error::State("not checkpointable".into()))
        }
    }

    fn corpus(tag: SplitTag, n: usize) -> Corpus {
        let samples = (0..n)
            .map(|i| Sample::labeled(format!("{tag}{i}"), "text", if i % 3 == 0 { "fake" } else { "real" }))
            .collect();
        Corpus::new(samples, LabelVocabulary::default(), tag).unwrap()
    }

    #[test]
    fn constant_model_keeps_first_epoch() {
        let mut m = Constant {
            spec: ClassifierSpec::text_rnn(),
            logits: vec![1.0, 0.0],
            trained: false,
        };
        let config = TrainConfig {
            epochs: 4,
            batch_size: 4,
            ..TrainConfig::backbone()
        };
        let rec = train(&mut m, &corpus(SplitTag::Train, 12), &corpus(SplitTag::Val, 6), &config).unwrap();
        assert_eq!(rec.best_epoch, 1);
        assert_eq!(rec.best_val_f1, rec.epochs[0].val_f1);
        assert_eq!(rec.epochs.len(), 4);
        assert!(m.is_trained());
    }

    #[test]
    fn nan_loss_aborts_with_location() {
        let mut m = Constant {
            spec: ClassifierSpec::text_rnn(),
            logits: vec![f64::NAN, 0.0],
            trained: false,
        };
        let config = TrainConfig {
            epochs: 2,
            batch_size: 5,
            ..TrainConfig::backbone()
        };
        let err = train(&mut m, &corpus(SplitTag::Train, 12), &corpus(SplitTag::Val, 6), &config).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { epoch: 1, step: 1 }));
        assert!(err.is_training_failure());
    }

    #[test]
    fn csv_header_and_rows() {
        let rec = TrainRecord {
            model: "m".into(),
            epochs: vec![EpochRecord {
                epoch: 1,
                train_loss: 0.5,
                val_loss: 0.25,
                train_f1: 0.75,
                val_f1: 0.875,
                lr: 1e-6,
            }],
            best_epoch: 1,
            best_val_f1: 0.875,
        };
        assert_eq!(rec.to_csv(), "epoch,train_loss,val_loss,train_f1,val_f1,lr\n1,0.5,0.25,0.75,0.875,0.000001\n");
    }

    #[test]
    fn presets_validate() {
        assert!(TrainConfig::text_rnn().validate().is_ok());
        assert!(TrainConfig::backbone().validate().is_ok());
        let bad = TrainConfig {
            epochs: 0,
            ..TrainConfig::backbone()
        };
        assert!(bad.validate().is_err());
    }
}

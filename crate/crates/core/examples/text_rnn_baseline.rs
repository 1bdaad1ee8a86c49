//! Trains the BiLSTM baseline on a generated separable corpus.
//!
//! The full-scale defaults (200-d embeddings, 128 hidden units, 120 epochs)
//! are in `TextRnnConfig::default()` and `TrainConfig::text_rnn()`; this
//! example shrinks them so it finishes in seconds on a laptop.
//!
//!     cargo run --release --example text_rnn_baseline

use std::time::Instant;

use textfold::classifiers::{predict_proba, TextRnn, TextRnnConfig};
use textfold::corpus::{LabelVocabulary, SplitTag};
use textfold::nn::OptimizerConfig;
use textfold::preprocess::{fit_vocabulary, CleanConfig, EmbeddingMatrix};
use textfold::synthetic::{generate, SyntheticSpec};
use textfold::training::{train, ScheduleConfig, TrainConfig};

fn main() -> textfold::Result<()> {
    let labels = LabelVocabulary::default();
    let train_set = generate(&SyntheticSpec::balanced(500, 1).with_prefix("tr"), &labels, SplitTag::Train)?;
    let val_set = generate(&SyntheticSpec::balanced(100, 2).with_prefix("va"), &labels, SplitTag::Val)?;

    let clean = CleanConfig::default();
    let vocab = fit_vocabulary(&train_set, &clean, 1);
    let config = TextRnnConfig {
        embedding_dim: 16,
        hidden_size: 16,
        ..TextRnnConfig::default()
    };
    let embeddings = EmbeddingMatrix::random(&vocab, config.embedding_dim, 7);
    let mut model = TextRnn::new(config, clean, vocab, embeddings, 7)?;

    let schedule = ScheduleConfig {
        base_lr: 0.01,
        period: 10.0,
        ..ScheduleConfig::step_decay()
    };
    let train_config = TrainConfig {
        epochs: 20,
        batch_size: 16,
        schedule,
        optimizer: OptimizerConfig::adamw(),
        ..TrainConfig::text_rnn()
    };

    let started = Instant::now();
    let record = train(&mut model, &train_set, &val_set, &train_config)?;
    for e in &record.epochs {
        println!(
            "epoch {:>2}  lr {:.4}  train loss {:.4}  val loss {:.4}  val F1 {:.4}",
            e.epoch, e.lr, e.train_loss, e.val_loss, e.val_f1
        );
    }
    println!(
        "best epoch {} with val weighted F1 {:.4} in {:.1?}",
        record.best_epoch,
        record.best_val_f1,
        started.elapsed()
    );

    let probs = predict_proba(&model, &["vorta03 common1 vorta012", "kelim05 kelim017 common4"])?;
    println!("P(real), P(fake) for two fresh texts: {:?}, {:?}", probs[0].as_slice(), probs[1].as_slice());
    Ok(())
}

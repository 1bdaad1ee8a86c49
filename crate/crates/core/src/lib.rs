//! K-fold ensemble text classification.
//!
//! `textfold` trains short-text classifiers (a BiLSTM baseline and pluggable
//! encoder backbones with a linear head), runs stratified k-fold training
//! where each fold may use a different backbone, combines the fold models by
//! soft voting weighted with their best validation F1, and can extend the
//! labeled pool with confident pseudo-labels before retraining.
//!
//! The runnable programs in `examples/` walk through each piece:
//!
//! | example | shows |
//! |---|---|
//! | `eda_report` | class counts and top tokens of a corpus |
//! | `preprocess_encode` | cleaning, vocabulary, fixed-length encoding |
//! | `lr_schedule` | warmup + cosine and step-decay learning rates |
//! | `label_smoothing` | smoothed targets and their cross-entropy |
//! | `text_rnn_baseline` | training the BiLSTM on a separable corpus |
//! | `soft_vote` | F1-weighted probability averaging |
//! | `single_model_cv` | five folds of one backbone |
//! | `five_fold_five_model` | one backbone per fold, ensemble on held-out data |
//! | `pseudo_label_round` | harvesting confident predictions and retraining |
//! | `metrics_report` | metrics, confusion heatmap and curve images |
//! | `custom_backbone` | registering an encoder, local or over a process |
//!
//! The `textfold` binary wraps the same pipeline behind `eda`,
//! `train-textrnn`, `cv`, `pseudo` and `evaluate` subcommands.

pub mod classifiers;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod nn;
pub mod preprocess;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};

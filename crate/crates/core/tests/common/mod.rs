#![allow(dead_code)]

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use textfold::classifiers::{TextRnn, TextRnnConfig};
use textfold::corpus::{Corpus, FoldPlan, LabelVocabulary, Sample, SplitTag};
use textfold::nn::OptimizerConfig;
use textfold::preprocess::{encode, fit_vocabulary, CleanConfig, EmbeddingMatrix};
use textfold::training::{ScheduleConfig, TrainConfig};

/// Small BiLSTM and optimizer settings that learn the synthetic corpora in seconds.
pub fn desk_text_rnn() -> (TextRnnConfig, TrainConfig) {
    let model = TextRnnConfig {
        embedding_dim: 16,
        hidden_size: 16,
        ..TextRnnConfig::default()
    };
    let train = TrainConfig {
        epochs: 20,
        batch_size: 16,
        schedule: ScheduleConfig {
            base_lr: 0.01,
            period: 10.0,
            ..ScheduleConfig::step_decay()
        },
        optimizer: OptimizerConfig::adamw(),
        ..TrainConfig::text_rnn()
    };
    (model, train)
}

/// Warmup + cosine scaled up for randomly initialized toy encoders.
pub fn desk_backbone(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 32,
        schedule: ScheduleConfig {
            floor_lr: 1e-4,
            peak_lr: 0.05,
            warmup_epochs: 1.0,
            decay_epochs: (epochs.max(2) - 1) as f64,
            ..ScheduleConfig::warmup_cosine()
        },
        ..TrainConfig::backbone()
    }
}

pub fn labeled(prefix: &str, labels: &[&str]) -> Corpus {
    let samples = labels
        .iter()
        .enumerate()
        .map(|(i, l)| Sample::labeled(format!("{prefix}{i}"), format!("text {i}"), l))
        .collect();
    Corpus::new(samples, LabelVocabulary::default(), SplitTag::Train).unwrap()
}

/// Random binary corpus with `n` samples and a minority share in `[0.1, 0.5]`.
pub fn random_corpus(rng: &mut ChaCha8Rng, n_max: usize, k: usize) -> Corpus {
    let n = rng.gen_range(4 * k.max(2)..=n_max);
    let minority = rng.gen_range(0.1..=0.5);
    let names = ["real", "fake"];
    let samples = (0..n)
        .map(|i| {
            let l = if rng.gen_bool(minority) { names[1] } else { names[0] };
            Sample::labeled(format!("id{i}"), "t", l)
        })
        .collect();
    Corpus::new(samples, LabelVocabulary::default(), SplitTag::Train).unwrap()
}

/// Partition, per-class balance (within one of n_c/k), fold sizes within one,
/// and no train/val overlap. Returns a description of the first violation.
pub fn check_fold_plan(corpus: &Corpus, plan: &FoldPlan) -> Result<(), String> {
    let k = plan.k_folds;
    let all: HashSet<&str> = corpus.ids().collect();
    let mut seen = HashSet::new();
    let labels: std::collections::HashMap<&str, &str> = corpus
        .samples()
        .iter()
        .map(|s| (s.id.as_str(), s.label.as_deref().unwrap()))
        .collect();
    let class_sizes = corpus.class_counts();
    let mut sizes = Vec::new();
    for a in &plan.assignments {
        for id in &a.val_ids {
            if !seen.insert(id.as_str()) {
                return Err(format!("{id} validates in two folds"));
            }
        }
        let train: HashSet<&str> = a.train_ids.iter().map(String::as_str).collect();
        let val: HashSet<&str> = a.val_ids.iter().map(String::as_str).collect();
        if !train.is_disjoint(&val) {
            return Err(format!("fold {} train/val overlap", a.fold_index));
        }
        if train.len() + val.len() != all.len() || train.union(&val).any(|id| !all.contains(id)) {
            return Err(format!("fold {} does not cover the corpus", a.fold_index));
        }
        sizes.push(val.len());
        for (c, class) in corpus.vocabulary().classes().iter().enumerate() {
            let in_fold = a.val_ids.iter().filter(|id| labels[id.as_str()] == class).count();
            let ideal = class_sizes[c] as f64 / k as f64;
            if (in_fold as f64 - ideal).abs() >= 1.0 {
                return Err(format!("fold {} has {in_fold} `{class}`, ideal {ideal}", a.fold_index));
            }
        }
    }
    if seen.len() != all.len() {
        return Err("validation splits do not cover the corpus".into());
    }
    let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
    if hi - lo > 1 {
        return Err(format!("fold sizes range {lo}..{hi}"));
    }
    Ok(())
}

/// Metrics by direct loops over label pairs, independent of the library.
pub struct OracleMetrics {
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
}

pub fn oracle_metrics(truth: &[usize], pred: &[usize], k: usize) -> OracleMetrics {
    let n = truth.len() as f64;
    let mut correct = 0usize;
    let (mut precision, mut recall, mut f1, mut support) = (vec![], vec![], vec![], vec![]);
    for c in 0..k {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for i in 0..truth.len() {
            match (truth[i] == c, pred[i] == c) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                _ => {}
            }
        }
        let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        precision.push(p);
        recall.push(r);
        f1.push(if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) });
        support.push((tp + fn_) as f64);
    }
    for i in 0..truth.len() {
        if truth[i] == pred[i] {
            correct += 1;
        }
    }
    let w = |v: &[f64]| (0..k).map(|c| v[c] * support[c] / n).sum::<f64>();
    OracleMetrics {
        accuracy: correct as f64 / n,
        weighted_precision: w(&precision),
        weighted_recall: w(&recall),
        weighted_f1: w(&f1),
        precision,
        recall,
        f1,
    }
}

/// Weighted average written as normalized weights times probabilities.
pub fn oracle_soft_vote(probs: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    let k = probs[0].len();
    let mut out = vec![0.0; k];
    for i in 0..k {
        for (m, p) in probs.iter().enumerate() {
            out[i] += (weights[m] / total) * p[i];
        }
    }
    out
}

pub fn random_simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(1e-3..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

/// Largest per-tensor relative error between backpropagated and central
/// finite-difference gradients of a tiny BiLSTM: hidden 4, sequences of at
/// most 6 tokens, a 10-entry vocabulary.
pub fn text_rnn_gradient_error(num_layers: usize) -> f64 {
    let words = ["alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta"];
    let labels = LabelVocabulary::default();
    let texts = [
        ("alpha beta gamma delta eps zeta", "real"),
        ("theta eta zeta eps delta gamma", "fake"),
        ("beta delta zeta theta", "real"),
        ("gamma unseen alpha eta eta", "fake"),
    ];
    let fit = Corpus::new(
        vec![Sample::labeled("v", words.join(" "), "real")],
        labels.clone(),
        SplitTag::Train,
    )
    .unwrap();
    let clean = CleanConfig {
        max_length: 6,
        ..CleanConfig::default()
    };
    let vocab = fit_vocabulary(&fit, &clean, 1);
    assert_eq!(vocab.len(), 10);
    let config = TextRnnConfig {
        embedding_dim: 3,
        hidden_size: 4,
        dropout: 0.2,
        num_layers,
        num_classes: 2,
        freeze_embeddings: false,
    };
    let mut embeddings = EmbeddingMatrix::random(&vocab, config.embedding_dim, 5);
    embeddings.data.iter_mut().for_each(|v| *v *= 10.0);
    let mut model = TextRnn::new(config, clean, vocab.clone(), embeddings, 17).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for p in &mut model.params_mut().params {
        p.value.iter_mut().for_each(|v| *v += rng.gen_range(-0.3..0.3));
    }
    // The padding row is never read; keep it at zero.
    model.params_mut().params[0].value[..3].fill(0.0);

    let batch: Vec<_> = texts
        .iter()
        .map(|(t, l)| encode(&Sample::labeled("x", *t, l), labels.index_of(l), &vocab, &clean))
        .collect();
    let targets: Vec<Vec<f64>> = texts
        .iter()
        .map(|(_, l)| if *l == "real" { vec![0.95, 0.05] } else { vec![0.05, 0.95] })
        .collect();

    model.params_mut().zero_grad();
    model.loss_and_gradients(&batch, &targets, None);
    let analytic: Vec<Vec<f64>> = model.params().params.iter().map(|p| p.grad.clone()).collect();

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for pi in 0..analytic.len() {
        let mut numeric = vec![0.0; analytic[pi].len()];
        for j in 0..numeric.len() {
            let orig = model.params().params[pi].value[j];
            model.params_mut().params[pi].value[j] = orig + h;
            let up = model.loss_and_gradients(&batch, &targets, None);
            model.params_mut().params[pi].value[j] = orig - h;
            let down = model.loss_and_gradients(&batch, &targets, None);
            model.params_mut().params[pi].value[j] = orig;
            numeric[j] = (up - down) / (2.0 * h);
        }
        let diff: f64 = analytic[pi].iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = analytic[pi].iter().map(|a| a * a).sum::<f64>().sqrt()
            + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
        if scale > 1e-10 {
            worst = worst.max(diff / scale);
        }
    }
    worst
}

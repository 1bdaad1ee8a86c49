use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::error::{Error, Result};

/// How backbones are assigned to folds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldStrategy {
    /// Every fold fine-tunes the same backbone.
    SingleModel,
    /// Fold `i` fine-tunes the `i`-th backbone.
    FiveModel,
}

impl FoldStrategy {
    pub fn expected_backbones(self, k: usize) -> usize {
        match self {
            FoldStrategy::SingleModel => 1,
            FoldStrategy::FiveModel => k,
        }
    }
}

impl fmt::Display for FoldStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FoldStrategy::SingleModel => "single_model",
            FoldStrategy::FiveModel => "five_model",
        })
    }
}

impl FromStr for FoldStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "single_model" | "single" => Ok(FoldStrategy::SingleModel),
            "five_model" | "multi_model" | "five" => Ok(FoldStrategy::FiveModel),
            other => Err(Error::InvalidArgument(format!(
                "unknown fold strategy `{other}` (expected single_model or five_model)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    /// Zero-based fold index.
    pub fold_index: usize,
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
    pub backbone_name: String,
}

/// Stratified k-fold partition with a backbone per fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k_folds: usize,
    pub strategy: FoldStrategy,
    pub seed: u64,
    pub assignments: Vec<FoldAssignment>,
}

impl FoldPlan {
    pub fn backbone_names(&self) -> Vec<&str> {
        self.assignments.iter().map(|a| a.backbone_name.as_str()).collect()
    }
}

/// Builds a stratified k-fold plan.
///
/// Each class is shuffled with a seeded generator, the classes are laid end to
/// end and position `i` of that sequence goes to fold `i mod k`. Per fold, each
/// class count is within one of `n_c / k` and fold sizes differ by at most one.
pub fn plan_folds(
    corpus: &Corpus,
    k: usize,
    strategy: FoldStrategy,
    backbones: &[String],
    seed: u64,
) -> Result<FoldPlan> {
    plan_folds_with_train_only(corpus, &[], k, strategy, backbones, seed)
}

/// Like [`plan_folds`], with extra ids that join every fold's train split and
/// never appear in a validation split.
pub fn plan_folds_with_train_only(
    corpus: &Corpus,
    train_only_ids: &[String],
    k: usize,
    strategy: FoldStrategy,
    backbones: &[String],
    seed: u64,
) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    let expected = strategy.expected_backbones(k);
    if backbones.len() != expected {
        return Err(Error::InvalidArgument(format!(
            "strategy {strategy} with k={k} needs {expected} backbone name(s), got {}",
            backbones.len()
        )));
    }
    let labels = corpus.require_labels()?;
    let ids: Vec<&str> = corpus.ids().collect();
    let train_only: HashSet<&str> = train_only_ids.iter().map(String::as_str).collect();
    if let Some(dup) = ids.iter().find(|id| train_only.contains(*id)) {
        return Err(Error::InvalidArgument(format!(
            "train-only id `{dup}` also belongs to the stratified pool"
        )));
    }

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); corpus.vocabulary().len()];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    if let Some((c, members)) = by_class
        .iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .min_by_key(|(_, m)| m.len())
    {
        if members.len() < k {
            return Err(Error::Stratification(format!(
                "class `{}` has {} sample(s), fewer than k={k}",
                corpus.vocabulary().classes()[c],
                members.len()
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; ids.len()];
    let mut position = 0usize;
    for members in &mut by_class {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            fold_of[i] = position % k;
            position += 1;
        }
    }

    let assignments = (0..k)
        .map(|f| {
            let mut train_ids = Vec::new();
            let mut val_ids = Vec::new();
            for (i, id) in ids.iter().enumerate() {
                if fold_of[i] == f {
                    val_ids.push(id.to_string());
                } else {
                    train_ids.push(id.to_string());
                }
            }
            train_ids.extend(train_only_ids.iter().cloned());
            let backbone_name = match strategy {
                FoldStrategy::SingleModel => backbones[0].clone(),
                FoldStrategy::FiveModel => backbones[f].clone(),
            };
            FoldAssignment {
                fold_index: f,
                train_ids,
                val_ids,
                backbone_name,
            }
        })
        .collect();

    Ok(FoldPlan {
        k_folds: k,
        strategy,
        seed,
        assignments,
    })
}

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::Corpus;

const STOPWORDS_EN: &str = include_str!("../../data/stopwords_en.txt");

/// The bundled English stopword list (`data/stopwords_en.txt`).
pub fn default_stopwords() -> HashSet<String> {
    STOPWORDS_EN
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCount {
    pub class: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCount {
    pub token: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdaReport {
    pub split: String,
    pub total_samples: usize,
    pub class_counts: Vec<ClassCount>,
    pub unlabeled: usize,
    pub top_tokens: Vec<TokenCount>,
}

impl EdaReport {
    pub fn count_of(&self, class: &str) -> Option<usize> {
        self.class_counts.iter().find(|c| c.class == class).map(|c| c.count)
    }
}

/// Lowercased word tokens: maximal runs of alphanumeric characters.
///
/// URLs fall apart into their pieces (`https`, `t`, `co`, ...), which is what
/// surfaces them in the frequency table.
pub fn tokenize_for_eda(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Full token-frequency table, sorted by descending count then token.
pub fn token_frequencies(corpus: &Corpus, stopwords: &HashSet<String>) -> Vec<(String, usize)> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for s in corpus.samples() {
        for tok in tokenize_for_eda(&s.text) {
            if !stopwords.contains(&tok) {
                *counts.entry(tok).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

pub fn eda_report(corpus: &Corpus, top_n: usize, stopwords: &HashSet<String>) -> EdaReport {
    let class_counts = corpus
        .vocabulary()
        .classes()
        .iter()
        .zip(corpus.class_counts())
        .map(|(class, count)| ClassCount {
            class: class.clone(),
            count,
        })
        .collect();
    let top_tokens = token_frequencies(corpus, stopwords)
        .into_iter()
        .take(top_n)
        .map(|(token, count)| TokenCount { token, count })
        .collect();
    EdaReport {
        split: corpus.split_tag().to_string(),
        total_samples: corpus.len(),
        class_counts,
        unlabeled: corpus.samples().iter().filter(|s| s.label.is_none()).count(),
        top_tokens,
    }
}

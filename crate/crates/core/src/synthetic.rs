//! Seeded generator for linearly separable toy corpora.
//!
//! Every class owns a disjoint set of content words; texts mix those with
//! words shared by all classes. Used by the examples, tests and the
//! desk-scale acceptance runs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, LabelVocabulary, Sample, SplitTag};
use crate::error::{Error, Result};

const STEMS: [&str; 6] = ["vorta", "kelim", "drusa", "mopex", "talun", "bisco"];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    /// Samples per class, in vocabulary order.
    pub counts: Vec<usize>,
    pub words_per_class: usize,
    pub shared_words: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Probability that a token after the first is class-specific.
    pub signal: f64,
    pub id_prefix: String,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn balanced(n: usize, seed: u64) -> Self {
        Self {
            counts: vec![n / 2, n - n / 2],
            words_per_class: 40,
            shared_words: 30,
            min_len: 6,
            max_len: 14,
            signal: 0.5,
            id_prefix: "s".into(),
            seed,
        }
    }

    pub fn with_counts(mut self, counts: Vec<usize>) -> Self {
        self.counts = counts;
        self
    }

    pub fn with_prefix(mut self, prefix: impl Into<String>) -> Self {
        self.id_prefix = prefix.into();
        self
    }
}

pub fn class_word(class: usize, j: usize) -> String {
    format!("{}{}{j}", STEMS[class % STEMS.len()], class / STEMS.len())
}

pub fn shared_word(j: usize) -> String {
    format!("common{j}")
}

/// Generates one text per sample; the first token always belongs to the
/// sample's class, so the classes are separable by token identity.
pub fn generate(spec: &SyntheticSpec, vocabulary: &LabelVocabulary, tag: SplitTag) -> Result<Corpus> {
    if spec.counts.len() != vocabulary.len() {
        return Err(Error::InvalidArgument(format!(
            "{} class counts for a {}-class vocabulary",
            spec.counts.len(),
            vocabulary.len()
        )));
    }
    if spec.words_per_class == 0 || spec.min_len == 0 || spec.min_len > spec.max_len || !(0.0..=1.0).contains(&spec.signal) {
        return Err(Error::InvalidArgument("degenerate synthetic corpus spec".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut classes: Vec<usize> = spec
        .counts
        .iter()
        .enumerate()
        .flat_map(|(c, &n)| std::iter::repeat(c).take(n))
        .collect();
    classes.shuffle(&mut rng);
    let samples = classes
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let len = rng.gen_range(spec.min_len..=spec.max_len);
            let words: Vec<String> = (0..len)
                .map(|t| {
                    if t == 0 || spec.shared_words == 0 || rng.gen_bool(spec.signal) {
                        class_word(c, rng.gen_range(0..spec.words_per_class))
                    } else {
                        shared_word(rng.gen_range(0..spec.shared_words))
                    }
                })
                .collect();
            Sample::labeled(format!("{}{i}", spec.id_prefix), words.join(" "), vocabulary.classes()[c].as_str())
        })
        .collect();
    Corpus::new(samples, vocabulary.clone(), tag)
}

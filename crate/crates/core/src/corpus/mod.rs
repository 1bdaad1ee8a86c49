//! Labeled short-text corpora: loading, validation, merging and splitting.
//!
//! A [`Corpus`] is immutable once built. Every constructor goes through
//! [`Corpus::new`], so ids are unique, texts are non-empty and labels belong
//! to the corpus [`LabelVocabulary`].

mod eda;
mod folds;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use eda::{default_stopwords, eda_report, token_frequencies, tokenize_for_eda, ClassCount, EdaReport, TokenCount};
pub use folds::{plan_folds, plan_folds_with_train_only, FoldAssignment, FoldPlan, FoldStrategy};

/// Ordered set of class names. A class index is its position in the list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelVocabulary {
    classes: Vec<String>,
}

impl LabelVocabulary {
    pub fn new<S: Into<String>>(classes: impl IntoIterator<Item = S>) -> Result<Self> {
        let classes: Vec<String> = classes
            .into_iter()
            .map(|c| c.into().trim().to_lowercase())
            .collect();
        if classes.len() < 2 {
            return Err(Error::Validation(format!(
                "label vocabulary needs at least 2 classes, got {}",
                classes.len()
            )));
        }
        let mut seen = HashSet::new();
        for c in &classes {
            if c.is_empty() {
                return Err(Error::Validation("empty class name".into()));
            }
            if !seen.insert(c.as_str()) {
                return Err(Error::Validation(format!("duplicate class name `{c}`")));
            }
        }
        Ok(Self { classes })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Case-insensitive lookup of a class name.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        let name = name.trim().to_lowercase();
        self.classes.iter().position(|c| *c == name)
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.classes.get(index).map(String::as_str)
    }
}

impl Default for LabelVocabulary {
    fn default() -> Self {
        Self {
            classes: vec!["real".to_string(), "fake".to_string()],
        }
    }
}

impl TryFrom<Vec<String>> for LabelVocabulary {
    type Error = Error;

    fn try_from(classes: Vec<String>) -> Result<Self> {
        Self::new(classes)
    }
}

impl From<LabelVocabulary> for Vec<String> {
    fn from(v: LabelVocabulary) -> Self {
        v.classes
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub text: String,
    pub label: Option<String>,
}

impl Sample {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: Option<&str>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            label: label.map(|l| l.to_lowercase()),
        }
    }

    pub fn labeled(id: impl Into<String>, text: impl Into<String>, label: &str) -> Self {
        Self::new(id, text, Some(label))
    }

    pub fn unlabeled(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self::new(id, text, None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
    Merged,
    External,
    Pseudo,
}

impl SplitTag {
    /// Splits that may hold unlabeled samples.
    pub fn allows_unlabeled(self) -> bool {
        matches!(self, SplitTag::Test | SplitTag::External)
    }
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
            SplitTag::Merged => "merged",
            SplitTag::External => "external",
            SplitTag::Pseudo => "pseudo",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    samples: Vec<Sample>,
    vocabulary: LabelVocabulary,
    split_tag: SplitTag,
}

impl Corpus {
    pub fn new(
        samples: Vec<Sample>,
        vocabulary: LabelVocabulary,
        split_tag: SplitTag,
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate id `{}` at sample {i}",
                    s.id
                )));
            }
            if s.text.trim().is_empty() {
                return Err(Error::Validation(format!("sample `{}` has empty text", s.id)));
            }
            match &s.label {
                Some(l) if vocabulary.index_of(l).is_none() => {
                    return Err(Error::Validation(format!(
                        "sample `{}` has unknown label `{l}`",
                        s.id
                    )));
                }
                None if !split_tag.allows_unlabeled() => {
                    return Err(Error::Validation(format!(
                        "sample `{}` is unlabeled but the {split_tag} split must be fully labeled",
                        s.id
                    )));
                }
                _ => {}
            }
        }
        Ok(Self {
            samples,
            vocabulary,
            split_tag,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn vocabulary(&self) -> &LabelVocabulary {
        &self.vocabulary
    }

    pub fn split_tag(&self) -> SplitTag {
        self.split_tag
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.samples.iter().map(|s| s.id.as_str())
    }

    pub fn texts(&self) -> Vec<&str> {
        self.samples.iter().map(|s| s.text.as_str()).collect()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.samples.iter().all(|s| s.label.is_some())
    }

    /// Class index per sample; `None` for unlabeled samples.
    pub fn label_indices(&self) -> Vec<Option<usize>> {
        self.samples
            .iter()
            .map(|s| s.label.as_deref().and_then(|l| self.vocabulary.index_of(l)))
            .collect()
    }

    /// Class indices for a fully labeled corpus.
    pub fn require_labels(&self) -> Result<Vec<usize>> {
        self.label_indices()
            .into_iter()
            .zip(&self.samples)
            .map(|(l, s)| {
                l.ok_or_else(|| {
                    Error::Validation(format!("sample `{}` in {} is unlabeled", s.id, self.split_tag))
                })
            })
            .collect()
    }

    /// Sample count per class, in vocabulary order. Unlabeled samples are skipped.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.vocabulary.len()];
        for l in self.label_indices().into_iter().flatten() {
            counts[l] += 1;
        }
        counts
    }

    /// Sub-corpus holding the samples whose ids are in `ids`, in corpus order.
    pub fn subset(&self, ids: &HashSet<&str>, split_tag: SplitTag) -> Result<Self> {
        let samples = self
            .samples
            .iter()
            .filter(|s| ids.contains(s.id.as_str()))
            .cloned()
            .collect();
        Corpus::new(samples, self.vocabulary.clone(), split_tag)
    }

    pub fn with_tag(&self, split_tag: SplitTag) -> Result<Self> {
        Corpus::new(self.samples.clone(), self.vocabulary.clone(), split_tag)
    }
}

/// Reads a UTF-8 TSV file with header `id<TAB>tweet<TAB>label`.
///
/// The label column may be empty (or absent) for unlabeled rows. Labels are
/// matched case-insensitively and stored lowercase.
pub fn load_corpus(
    path: impl AsRef<Path>,
    split_tag: SplitTag,
    vocabulary: &LabelVocabulary,
) -> Result<Corpus> {
    let path = path.as_ref();
    let content = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_tsv(&content, path, split_tag, vocabulary)
}

pub(crate) fn parse_tsv(
    content: &str,
    path: &Path,
    split_tag: SplitTag,
    vocabulary: &LabelVocabulary,
) -> Result<Corpus> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = content.lines().enumerate();
    match lines.next() {
        Some((_, header)) => {
            let cols: Vec<&str> = header
                .trim_start_matches('\u{feff}')
                .trim_end_matches('\r')
                .split('\t')
                .map(str::trim)
                .collect();
            if cols.len() < 2 || !cols[0].eq_ignore_ascii_case("id") {
                return Err(parse_err(1, format!("expected header `id\\ttweet\\tlabel`, got {header:?}")));
            }
        }
        None => return Corpus::new(Vec::new(), vocabulary.clone(), split_tag),
    }

    let mut samples = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, raw) in lines {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let (id, text, label) = match fields.as_slice() {
            [id, text] => (*id, *text, ""),
            [id, text, label] => (*id, *text, *label),
            _ => {
                return Err(parse_err(
                    line_no,
                    format!("expected 2 or 3 tab-separated fields, found {}", fields.len()),
                ))
            }
        };
        let id = id.trim();
        if id.is_empty() {
            return Err(parse_err(line_no, "empty id".into()));
        }
        if text.trim().is_empty() {
            return Err(parse_err(line_no, format!("empty text for id `{id}`")));
        }
        if let Some(first) = seen.insert(id.to_string(), line_no) {
            return Err(Error::Validation(format!(
                "{}:{line_no}: duplicate id `{id}` (first seen on line {first})",
                path.display()
            )));
        }
        let label = label.trim();
        let label = if label.is_empty() {
            None
        } else {
            match vocabulary.index_of(label) {
                Some(idx) => Some(vocabulary.classes()[idx].clone()),
                None => {
                    return Err(Error::Validation(format!(
                        "{}:{line_no}: unknown label `{label}` (expected one of {})",
                        path.display(),
                        vocabulary.classes().join(", ")
                    )))
                }
            }
        };
        if label.is_none() && !split_tag.allows_unlabeled() {
            return Err(Error::Validation(format!(
                "{}:{line_no}: missing label in {split_tag} split",
                path.display()
            )));
        }
        samples.push(Sample {
            id: id.to_string(),
            text: text.to_string(),
            label,
        });
    }
    Corpus::new(samples, vocabulary.clone(), split_tag)
}

/// Writes a corpus in the TSV input format.
pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("id\ttweet\tlabel\n");
    for s in corpus.samples() {
        out.push_str(&s.id);
        out.push('\t');
        out.push_str(&s.text.replace(['\t', '\n', '\r'], " "));
        out.push('\t');
        out.push_str(s.label.as_deref().unwrap_or(""));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Concatenates corpora into one `merged` corpus.
pub fn merge(corpora: &[&Corpus]) -> Result<Corpus> {
    let Some(first) = corpora.first() else {
        return Err(Error::InvalidArgument("merge needs at least one corpus".into()));
    };
    let vocabulary = first.vocabulary().clone();
    if let Some(other) = corpora.iter().find(|c| *c.vocabulary() != vocabulary) {
        return Err(Error::Validation(format!(
            "cannot merge corpora with different vocabularies: [{}] vs [{}]",
            vocabulary.classes().join(", "),
            other.vocabulary().classes().join(", ")
        )));
    }
    let mut seen = HashSet::new();
    let mut collisions = Vec::new();
    let mut samples = Vec::with_capacity(corpora.iter().map(|c| c.len()).sum());
    for c in corpora {
        for s in c.samples() {
            if !seen.insert(s.id.clone()) {
                collisions.push(s.id.clone());
            }
            samples.push(s.clone());
        }
    }
    if !collisions.is_empty() {
        return Err(Error::IdCollision(collisions));
    }
    if samples.iter().any(|s| s.label.is_none()) {
        return Err(Error::Validation("merged corpora must be fully labeled".into()));
    }
    Corpus::new(samples, vocabulary, SplitTag::Merged)
}

/// Largest-remainder allocation of `total` items across `counts` in
/// proportion to the counts. Ties go to the lower index.
pub(crate) fn proportional_allocation(counts: &[usize], fraction: f64) -> Vec<usize> {
    let n: usize = counts.iter().sum();
    let total = (fraction * n as f64).round() as usize;
    let exact: Vec<f64> = counts.iter().map(|&c| fraction * c as f64).collect();
    let mut alloc: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut remaining = total.saturating_sub(assigned);
    for &c in order.iter().cycle().take(counts.len() * 2) {
        if remaining == 0 {
            break;
        }
        if alloc[c] < counts[c] {
            alloc[c] += 1;
            remaining -= 1;
        }
    }
    alloc
}

/// Stratified random split into `(train, val)`.
///
/// The train side receives `round(train_fraction * n)` samples, distributed
/// across classes by largest remainder. Output corpora keep the input order.
pub fn split_holdout(corpus: &Corpus, train_fraction: f64, seed: u64) -> Result<(Corpus, Corpus)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let labels = corpus.require_labels()?;
    let k = corpus.vocabulary().len();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if !members.is_empty() && members.len() < 2 {
            return Err(Error::Stratification(format!(
                "class `{}` has {} sample(s); at least 2 are needed to split",
                corpus.vocabulary().classes()[c],
                members.len()
            )));
        }
    }
    let counts: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let alloc = proportional_allocation(&counts, train_fraction);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; corpus.len()];
    for (members, &take) in by_class.iter_mut().zip(&alloc) {
        members.shuffle(&mut rng);
        for &i in &members[..take] {
            in_train[i] = true;
        }
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (s, t) in corpus.samples().iter().zip(in_train) {
        if t {
            train.push(s.clone());
        } else {
            val.push(s.clone());
        }
    }
    Ok((
        Corpus::new(train, corpus.vocabulary().clone(), SplitTag::Train)?,
        Corpus::new(val, corpus.vocabulary().clone(), SplitTag::Val)?,
    ))
}

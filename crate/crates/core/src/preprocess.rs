//! Text normalization, token vocabularies and fixed-length encoding for the
//! recurrent baseline. Backbone encoders only see the cleaned string.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Sample};
use crate::error::{Error, Result};

pub const PAD_INDEX: usize = 0;
pub const UNK_INDEX: usize = 1;

/// Half-width of the uniform range used for rows without a pretrained vector.
pub const UNKNOWN_INIT_RANGE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleanConfig {
    pub strip_urls: bool,
    pub lowercase: bool,
    pub max_length: usize,
}

impl Default for CleanConfig {
    fn default() -> Self {
        Self {
            strip_urls: true,
            lowercase: true,
            max_length: 140,
        }
    }
}

impl CleanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_length == 0 {
            return Err(Error::InvalidArgument("max_length must be at least 1".into()));
        }
        Ok(())
    }
}

fn url_start(bytes: &[u8], at: usize) -> Option<usize> {
    for scheme in [&b"https://"[..], &b"http://"[..]] {
        if bytes.len() >= at + scheme.len() && bytes[at..at + scheme.len()].eq_ignore_ascii_case(scheme) {
            return Some(scheme.len());
        }
    }
    None
}

fn strip_urls(text: &str) -> String {
    let bytes = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    let mut copied_from = 0;
    while i < bytes.len() {
        if (bytes[i] == b'h' || bytes[i] == b'H') && url_start(bytes, i).is_some() {
            out.push_str(&text[copied_from..i]);
            let rest = &text[i..];
            let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
            i += end;
            copied_from = i;
            out.push(' ');
        } else {
            i += 1;
        }
    }
    out.push_str(&text[copied_from..]);
    out
}

/// Normalizes a raw post: optional lowercasing and URL removal, then
/// whitespace collapse and trim. Idempotent.
pub fn clean(text: &str, config: &CleanConfig) -> String {
    let mut s = if config.lowercase {
        text.to_lowercase()
    } else {
        text.to_string()
    };
    if config.strip_urls {
        s = strip_urls(&s);
    }
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Whitespace tokens of the cleaned text.
pub fn tokenize(text: &str, config: &CleanConfig) -> Vec<String> {
    clean(text, config).split_whitespace().map(str::to_string).collect()
}

/// Token to row-index map. Index 0 is padding and 1 is unknown.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "TokenVocabularyRepr", into = "TokenVocabularyRepr")]
pub struct TokenVocabulary {
    tokens: Vec<String>,
    min_frequency: usize,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct TokenVocabularyRepr {
    pad_index: usize,
    unk_index: usize,
    min_frequency: usize,
    tokens: Vec<String>,
}

impl From<TokenVocabularyRepr> for TokenVocabulary {
    fn from(r: TokenVocabularyRepr) -> Self {
        TokenVocabulary::from_tokens(r.tokens, r.min_frequency)
    }
}

impl From<TokenVocabulary> for TokenVocabularyRepr {
    fn from(v: TokenVocabulary) -> Self {
        TokenVocabularyRepr {
            pad_index: PAD_INDEX,
            unk_index: UNK_INDEX,
            min_frequency: v.min_frequency,
            tokens: v.tokens,
        }
    }
}

impl TokenVocabulary {
    fn from_tokens(tokens: Vec<String>, min_frequency: usize) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i + 2))
            .collect();
        Self {
            tokens,
            min_frequency,
            index,
        }
    }

    /// Number of rows including padding and unknown.
    pub fn len(&self) -> usize {
        self.tokens.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_frequency(&self) -> usize {
        self.min_frequency
    }

    pub fn index_of(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_INDEX)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        match index {
            PAD_INDEX => Some("<pad>"),
            UNK_INDEX => Some("<unk>"),
            i => self.tokens.get(i - 2).map(String::as_str),
        }
    }

    /// Real tokens in index order, starting at index 2.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let json = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Ok(serde_json::from_str(&json)?)
    }
}

/// Builds a vocabulary ordered by descending count, then token.
pub fn fit_vocabulary(corpus: &Corpus, config: &CleanConfig, min_frequency: usize) -> TokenVocabulary {
    let min_frequency = min_frequency.max(1);
    let mut counts: HashMap<String, usize> = HashMap::new();
    for s in corpus.samples() {
        for tok in tokenize(&s.text, config) {
            *counts.entry(tok).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_frequency)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    TokenVocabulary::from_tokens(kept.into_iter().map(|(t, _)| t).collect(), min_frequency)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedSample {
    pub id: String,
    pub token_ids: Vec<usize>,
    pub true_length: usize,
    pub label_index: Option<usize>,
}

impl EncodedSample {
    /// All-padding input, e.g. a post that was nothing but a URL.
    pub fn is_degenerate(&self) -> bool {
        self.true_length == 0
    }

    pub fn tokens(&self) -> &[usize] {
        &self.token_ids[..self.true_length]
    }
}

/// Clean, tokenize, map, truncate to `max_length` and right-pad with zeros.
pub fn encode(
    sample: &Sample,
    label_index: Option<usize>,
    vocab: &TokenVocabulary,
    config: &CleanConfig,
) -> EncodedSample {
    let mut token_ids: Vec<usize> = tokenize(&sample.text, config)
        .iter()
        .take(config.max_length)
        .map(|t| vocab.index_of(t))
        .collect();
    let true_length = token_ids.len();
    if true_length == 0 {
        log::debug!("sample `{}` encodes to an all-padding sequence", sample.id);
    }
    token_ids.resize(config.max_length, PAD_INDEX);
    EncodedSample {
        id: sample.id.clone(),
        token_ids,
        true_length,
        label_index,
    }
}

/// Encodes every sample of a corpus, attaching class indices where labeled.
pub fn encode_corpus(corpus: &Corpus, vocab: &TokenVocabulary, config: &CleanConfig) -> Vec<EncodedSample> {
    let encoded: Vec<EncodedSample> = corpus
        .samples()
        .iter()
        .zip(corpus.label_indices())
        .map(|(s, l)| encode(s, l, vocab, config))
        .collect();
    let degenerate = encoded.iter().filter(|e| e.is_degenerate()).count();
    if degenerate > 0 {
        log::warn!(
            "{degenerate} of {} {} samples have no tokens after cleaning",
            encoded.len(),
            corpus.split_tag()
        );
    }
    encoded
}

/// Dense `rows x dim` embedding table, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Seeded uniform rows in `[-0.05, 0.05]` with a zero padding row.
    pub fn random(vocab: &TokenVocabulary, dim: usize, seed: u64) -> Self {
        let rows = vocab.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data: Vec<f64> = (0..rows * dim)
            .map(|_| rng.gen_range(-UNKNOWN_INIT_RANGE..=UNKNOWN_INIT_RANGE))
            .collect();
        data[PAD_INDEX * dim..(PAD_INDEX + 1) * dim].fill(0.0);
        Self { rows, dim, data }
    }
}

/// Loads word vectors in the plain-text `token f1 f2 ... f_dim` format.
///
/// Rows for vocabulary tokens found in the file are copied; the rest keep a
/// seeded uniform initialization. An optional `count dim` header line is
/// accepted. Returns the matrix and the number of vocabulary hits.
pub fn load_pretrained_vectors(
    path: impl AsRef<Path>,
    vocab: &TokenVocabulary,
    dim: usize,
    seed: u64,
) -> Result<(EmbeddingMatrix, usize)> {
    let path = path.as_ref();
    let content = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_vectors(&content, path, vocab, dim, seed)
}

fn parse_vectors(
    content: &str,
    path: &Path,
    vocab: &TokenVocabulary,
    dim: usize,
    seed: u64,
) -> Result<(EmbeddingMatrix, usize)> {
    let mut matrix = EmbeddingMatrix::random(vocab, dim, seed);
    let mut hits = 0;
    for (i, line) in content.lines().enumerate() {
        let line_no = i + 1;
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let values: Vec<&str> = parts.collect();
        if line_no == 1 && values.len() == 1 && token.parse::<usize>().is_ok() {
            let declared: usize = values[0].parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: "malformed `count dim` header".into(),
            })?;
            if declared != dim {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    message: format!("header declares dimension {declared}, expected {dim}"),
                });
            }
            continue;
        }
        if values.len() != dim {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("expected {dim} values for `{token}`, found {}", values.len()),
            });
        }
        let Some(row) = vocab.get(token) else { continue };
        let dst = &mut matrix.data[row * dim..(row + 1) * dim];
        for (d, v) in dst.iter_mut().zip(&values) {
            *d = v.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("unreadable value `{v}`"),
            })?;
        }
        hits += 1;
    }
    Ok((matrix, hits))
}

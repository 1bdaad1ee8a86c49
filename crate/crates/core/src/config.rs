//! File-based run configuration.
//!
//! A config file is a JSON object holding any subset of [`RunConfig`]'s
//! fields. It is deep-merged over the defaults, so a file containing only
//! `{"cv": {"train": {"epochs": 3}}}` keeps every other setting. Command-line
//! flags are applied last.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::classifiers::{BackboneRegistry, ExternalEncoderConfig, TextRnnConfig, TOY_VARIANTS};
use crate::corpus::{FoldStrategy, LabelVocabulary};
use crate::ensemble::PseudoLabelConfig;
use crate::error::{Error, Result};
use crate::preprocess::CleanConfig;
use crate::training::TrainConfig;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub external: Option<PathBuf>,
    /// Word-vector text file for the recurrent baseline.
    pub vectors: Option<PathBuf>,
    /// Mix the external set into the labeled pool.
    pub use_external: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextRnnSection {
    pub model: TextRnnConfig,
    pub train: TrainConfig,
    /// Share of the merged pool kept for training; the rest validates.
    pub train_fraction: f64,
    pub min_frequency: usize,
}

impl Default for TextRnnSection {
    fn default() -> Self {
        Self {
            model: TextRnnConfig::default(),
            train: TrainConfig::text_rnn(),
            train_fraction: 0.8,
            min_frequency: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvSection {
    pub k_folds: usize,
    pub strategy: FoldStrategy,
    pub backbones: Vec<String>,
    pub train: TrainConfig,
    pub parallel_folds: usize,
}

impl Default for CvSection {
    fn default() -> Self {
        Self {
            k_folds: 5,
            strategy: FoldStrategy::FiveModel,
            backbones: TOY_VARIANTS.iter().map(|v| v.name.to_string()).collect(),
            train: TrainConfig::backbone(),
            parallel_folds: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataPaths,
    pub vocabulary: LabelVocabulary,
    pub clean: CleanConfig,
    pub text_rnn: TextRnnSection,
    pub cv: CvSection,
    pub pseudo: PseudoLabelConfig,
    /// Backbones served by external processes, keyed by registry name.
    pub external_backbones: BTreeMap<String, ExternalEncoderConfig>,
    pub eda_top_n: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataPaths::default(),
            vocabulary: LabelVocabulary::default(),
            clean: CleanConfig::default(),
            text_rnn: TextRnnSection::default(),
            cv: CvSection::default(),
            pseudo: PseudoLabelConfig::default(),
            external_backbones: BTreeMap::new(),
            eda_top_n: 20,
            seed: 42,
            out_dir: PathBuf::from("runs/latest"),
        }
    }
}

/// Objects merge key by key; anything else, or an object whose `kind` tag
/// changes, is replaced.
fn deep_merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            let retagged = matches!((b.get("kind"), o.get("kind")), (Some(x), Some(y)) if x != y);
            if retagged {
                *b = o;
                return;
            }
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => deep_merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl RunConfig {
    /// Defaults overlaid with a JSON document.
    pub fn from_json_value(overlay: Value) -> Result<Self> {
        if !overlay.is_object() {
            return Err(Error::Validation("config must be a JSON object".into()));
        }
        let mut merged = serde_json::to_value(RunConfig::default())?;
        deep_merge(&mut merged, overlay);
        serde_json::from_value(merged).map_err(|e| Error::Validation(format!("config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        let value: Value =
            serde_json::from_str(&text).map_err(|e| Error::Validation(format!("config {}: {e}", path.display())))?;
        Self::from_json_value(value)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)? + "\n";
        fs::write(path, json).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    /// Internal consistency; paths are checked by the commands that read them.
    pub fn validate(&self) -> Result<()> {
        self.clean.validate()?;
        self.text_rnn.model.validate()?;
        self.text_rnn.train.validate()?;
        self.cv.train.validate()?;
        self.pseudo.validate()?;
        if !(self.text_rnn.train_fraction > 0.0 && self.text_rnn.train_fraction < 1.0) {
            return Err(Error::Validation("text_rnn.train_fraction must lie in (0, 1)".into()));
        }
        if self.text_rnn.model.num_classes != self.vocabulary.len() {
            return Err(Error::Validation(format!(
                "text_rnn.model.num_classes is {} but the vocabulary has {} classes",
                self.text_rnn.model.num_classes,
                self.vocabulary.len()
            )));
        }
        if self.cv.parallel_folds == 0 {
            return Err(Error::Validation("cv.parallel_folds must be at least 1".into()));
        }
        Ok(())
    }

    /// Toy backbones plus the configured external ones.
    pub fn registry(&self) -> BackboneRegistry {
        let mut registry = BackboneRegistry::default();
        for (name, cfg) in &self.external_backbones {
            registry.register_external(name.clone(), cfg.clone());
        }
        registry
    }
}

/// Checks that a configured path is set and exists.
pub fn require_path<'a>(path: &'a Option<PathBuf>, field: &str) -> Result<&'a Path> {
    let p = path
        .as_deref()
        .ok_or_else(|| Error::Validation(format!("config field `{field}` is required for this command")))?;
    if !p.exists() {
        return Err(Error::Validation(format!("{field}: {} does not exist", p.display())));
    }
    Ok(p)
}

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::backbone::{BackboneClassifier, BackboneOptions, BackboneRegistry};
use super::text_rnn::{TextRnn, TextRnnConfig};
use super::{ClassifierKind, ClassifierSpec, Classifier};
use crate::error::{Error, Result};
use crate::nn::ParamSet;
use crate::preprocess::{CleanConfig, TokenVocabulary};

pub const CHECKPOINT_FORMAT: &str = "textfold-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelPayload {
    TextRnn {
        config: TextRnnConfig,
        vocabulary: TokenVocabulary,
        params: ParamSet,
    },
    Backbone {
        options: BackboneOptions,
        encoder: serde_json::Value,
        head: ParamSet,
    },
}

/// Self-describing model file: kind, configuration, vocabulary and weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub spec: ClassifierSpec,
    pub num_classes: usize,
    pub clean: CleanConfig,
    pub model: ModelPayload,
}

impl Checkpoint {
    pub(crate) fn new(spec: ClassifierSpec, num_classes: usize, clean: CleanConfig, model: ModelPayload) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            spec,
            num_classes,
            clean,
            model,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_vec(self)?;
        fs::write(path, json).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let ckpt: Checkpoint = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported checkpoint {} v{}",
                path.display(),
                ckpt.format,
                ckpt.version
            )));
        }
        Ok(ckpt)
    }

    /// Rebuilds a trained model. Backbones are reconstructed through `registry`.
    pub fn into_model(self, registry: &BackboneRegistry) -> Result<Box<dyn Classifier>> {
        self.spec.validate()?;
        match (self.spec.kind, self.model) {
            (ClassifierKind::TextRnn, ModelPayload::TextRnn { config, vocabulary, params }) => {
                if config.num_classes != self.num_classes {
                    return Err(Error::Checkpoint("class count disagrees with model config".into()));
                }
                Ok(Box::new(TextRnn::from_parts(self.spec, config, self.clean, vocabulary, &params)?))
            }
            (ClassifierKind::Backbone | ClassifierKind::Toy, ModelPayload::Backbone { options, encoder, head }) => {
                let name = self.spec.backbone_name.clone().unwrap_or_default();
                let enc = registry.build_encoder(&name, &options)?;
                Ok(Box::new(BackboneClassifier::from_checkpoint_parts(
                    enc,
                    self.spec,
                    self.num_classes,
                    self.clean,
                    &options,
                    &encoder,
                    &head,
                )?))
            }
            (kind, _) => Err(Error::Checkpoint(format!("payload does not match kind {kind}"))),
        }
    }
}

pub fn load_checkpoint(path: impl AsRef<Path>, registry: &BackboneRegistry) -> Result<Box<dyn Classifier>> {
    Checkpoint::read(path)?.into_model(registry)
}

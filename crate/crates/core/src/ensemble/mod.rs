//! K-fold training strategies, F1-weighted soft voting and pseudo-labeling.

mod cv;
mod pseudo;

use serde::{Deserialize, Serialize};

use crate::classifiers::ProbVector;
use crate::corpus::{Corpus, LabelVocabulary, Sample, SplitTag};
use crate::error::{Error, Result};

pub use cv::{
    fold_seed, predict_ensemble, predict_with_models, read_manifest, run_cv, run_cv_with, write_predictions,
    CvRun, CvSettings, EnsembleManifest, FoldModelRecord,
};
pub use pseudo::{run_pseudo_label_round, PseudoRound, RetrainPlan};

/// Weighted vote result for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsemblePrediction {
    pub id: String,
    pub combined: ProbVector,
    pub predicted_label: String,
    pub max_probability: f64,
}

impl EnsemblePrediction {
    pub fn new(id: impl Into<String>, combined: ProbVector, vocabulary: &LabelVocabulary) -> Self {
        let predicted_label = vocabulary
            .name(combined.argmax())
            .expect("probability vector sized to the vocabulary")
            .to_string();
        Self {
            id: id.into(),
            max_probability: combined.max_probability(),
            predicted_label,
            combined,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelConfig {
    pub threshold: f64,
    pub rounds: usize,
}

impl Default for PseudoLabelConfig {
    fn default() -> Self {
        Self {
            threshold: 0.95,
            rounds: 1,
        }
    }
}

impl PseudoLabelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.5 && self.threshold < 1.0) {
            return Err(Error::Validation(format!(
                "pseudo-label threshold must lie in (0.5, 1), got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// `Σ_m w_m p_m / Σ_m w_m`.
pub fn soft_vote(per_model: &[ProbVector], weights: &[f64]) -> Result<ProbVector> {
    if per_model.is_empty() || per_model.len() != weights.len() {
        return Err(Error::InvalidArgument(format!(
            "soft vote needs one weight per model and at least one model, got {} models and {} weights",
            per_model.len(),
            weights.len()
        )));
    }
    let k = per_model[0].len();
    if per_model.iter().any(|p| p.len() != k) {
        return Err(Error::InvalidArgument("probability vectors differ in length".into()));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        return Err(Error::InvalidArgument("all soft-vote weights are zero".into()));
    }
    let mut combined = vec![0.0; k];
    for (p, &w) in per_model.iter().zip(weights) {
        for (c, &x) in combined.iter_mut().zip(p.as_slice()) {
            *c += w * x;
        }
    }
    for c in &mut combined {
        *c /= total;
    }
    ProbVector::new(combined)
}

/// Predictions whose ensemble confidence is strictly above the threshold,
/// relabelled with the ensemble's choice.
pub fn harvest_pseudo_labels(
    predictions: &[EnsemblePrediction],
    texts: &Corpus,
    config: &PseudoLabelConfig,
) -> Result<Corpus> {
    config.validate()?;
    let by_id: std::collections::HashMap<&str, &str> =
        texts.samples().iter().map(|s| (s.id.as_str(), s.text.as_str())).collect();
    let mut samples = Vec::new();
    for p in predictions.iter().filter(|p| p.max_probability > config.threshold) {
        let text = by_id
            .get(p.id.as_str())
            .ok_or_else(|| Error::Validation(format!("prediction for unknown sample `{}`", p.id)))?;
        samples.push(Sample::labeled(p.id.clone(), *text, &p.predicted_label));
    }
    Corpus::new(samples, texts.vocabulary().clone(), SplitTag::Pseudo)
}

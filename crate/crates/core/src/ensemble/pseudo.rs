use serde::{Deserialize, Serialize};

use super::{harvest_pseudo_labels, predict_ensemble, run_cv, CvRun, CvSettings, EnsemblePrediction, PseudoLabelConfig};
use crate::corpus::{merge, plan_folds_with_train_only, Corpus, FoldPlan, FoldStrategy};
use crate::error::Result;

/// Fold-planning parameters reused for the retrain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrainPlan {
    pub k_folds: usize,
    pub strategy: FoldStrategy,
    pub backbones: Vec<String>,
    pub seed: u64,
}

impl RetrainPlan {
    pub fn from_plan(plan: &FoldPlan) -> Self {
        let backbones = match plan.strategy {
            FoldStrategy::SingleModel => plan.backbone_names().into_iter().take(1).map(String::from).collect(),
            FoldStrategy::FiveModel => plan.backbone_names().into_iter().map(String::from).collect(),
        };
        Self {
            k_folds: plan.k_folds,
            strategy: plan.strategy,
            backbones,
            seed: plan.seed,
        }
    }
}

/// Outcome of the pseudo-label stage.
#[derive(Debug, Clone)]
pub struct PseudoRound {
    /// Harvest used by the last retrain (empty if none happened).
    pub harvested: Corpus,
    /// Labeled pool size the last retrain trained on.
    pub pool_size: usize,
    pub rounds_run: usize,
    pub plan: Option<FoldPlan>,
    pub retrain: Option<CvRun>,
    /// Predictions over the test corpus from the latest ensemble.
    pub predictions: Vec<EnsemblePrediction>,
}

/// Harvests confident test predictions, appends them to the labeled pool as
/// train-only samples and retrains every fold from scratch.
///
/// Each round harvests afresh from the latest ensemble's predictions. An
/// empty harvest ends the stage and leaves the prior predictions in place.
pub fn run_pseudo_label_round(
    pool: &Corpus,
    test: &Corpus,
    prior: &[EnsemblePrediction],
    plan: &RetrainPlan,
    settings: &CvSettings,
    config: &PseudoLabelConfig,
) -> Result<PseudoRound> {
    config.validate()?;
    let mut round = PseudoRound {
        harvested: harvest_pseudo_labels(&[], test, config)?,
        pool_size: pool.len(),
        rounds_run: 0,
        plan: None,
        retrain: None,
        predictions: prior.to_vec(),
    };
    for r in 0..config.rounds {
        let harvest = harvest_pseudo_labels(&round.predictions, test, config)?;
        if harvest.is_empty() {
            log::warn!(
                "pseudo-label round {}: no prediction above {}, retrain skipped",
                r + 1,
                config.threshold
            );
            break;
        }
        log::info!("pseudo-label round {}: harvested {} of {} test samples", r + 1, harvest.len(), test.len());
        let augmented = merge(&[pool, &harvest])?;
        let pseudo_ids: Vec<String> = harvest.ids().map(String::from).collect();
        let fold_plan = plan_folds_with_train_only(pool, &pseudo_ids, plan.k_folds, plan.strategy, &plan.backbones, plan.seed)?;
        let round_settings = CvSettings {
            out_dir: settings.out_dir.join(format!("pseudo_round_{}", r + 1)),
            ..settings.clone()
        };
        let cv = run_cv(&augmented, &fold_plan, &round_settings)?;
        round.predictions = predict_ensemble(&cv.records, test, &settings.registry)?;
        round.pool_size = augmented.len();
        round.harvested = harvest;
        round.plan = Some(fold_plan);
        round.retrain = Some(cv);
        round.rounds_run += 1;
    }
    Ok(round)
}

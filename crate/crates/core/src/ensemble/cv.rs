use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{soft_vote, EnsemblePrediction, PseudoLabelConfig};
use crate::classifiers::{load_checkpoint, predict_proba, BackboneOptions, BackboneRegistry, Classifier, ProbVector};
use crate::corpus::{Corpus, FoldAssignment, FoldPlan, FoldStrategy, SplitTag};
use crate::error::{Error, Result};
use crate::preprocess::CleanConfig;
use crate::training::{train, TrainConfig, TrainRecord};

/// A trained fold model and its soft-vote weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldModelRecord {
    pub fold_index: usize,
    pub backbone_name: String,
    /// Best validation weighted F1 of the fold model.
    pub ensemble_weight: f64,
    pub checkpoint_ref: PathBuf,
}

/// Everything a fold needs besides its assignment.
#[derive(Debug, Clone)]
pub struct CvSettings {
    pub registry: BackboneRegistry,
    pub clean: CleanConfig,
    pub train: TrainConfig,
    pub out_dir: PathBuf,
    /// Upper bound on concurrently training folds.
    pub parallel_folds: usize,
}

impl CvSettings {
    pub fn new(registry: BackboneRegistry, train: TrainConfig, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            registry,
            clean: CleanConfig::default(),
            train,
            out_dir: out_dir.into(),
            parallel_folds: 1,
        }
    }
}

/// Records and histories of a completed cross-validation run, in fold order.
#[derive(Debug, Clone)]
pub struct CvRun {
    pub records: Vec<FoldModelRecord>,
    pub histories: Vec<TrainRecord>,
}

/// Per-fold seed derived from the run seed; distinct folds never share one.
pub fn fold_seed(seed: u64, fold_index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (fold_index as u64 + 1).wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

/// Trains one registry backbone per fold assignment.
pub fn run_cv(corpus: &Corpus, plan: &FoldPlan, settings: &CvSettings) -> Result<CvRun> {
    for name in plan.backbone_names() {
        settings.registry.check(name)?;
    }
    let k = corpus.vocabulary().len();
    let factory = |a: &FoldAssignment, seed: u64| -> Result<Box<dyn Classifier>> {
        let options = BackboneOptions {
            max_length: settings.clean.max_length,
            seed,
        };
        Ok(Box::new(settings.registry.build(&a.backbone_name, k, settings.clean, &options)?))
    };
    run_cv_with(corpus, plan, settings, &factory)
}

/// [`run_cv`] with a caller-supplied model constructor.
///
/// Folds run on a pool of at most `parallel_folds` threads. Results are
/// gathered in fold order; the lowest failing fold is reported.
pub fn run_cv_with<F>(corpus: &Corpus, plan: &FoldPlan, settings: &CvSettings, factory: &F) -> Result<CvRun>
where
    F: Fn(&FoldAssignment, u64) -> Result<Box<dyn Classifier>> + Sync,
{
    settings.train.validate()?;
    fs::create_dir_all(&settings.out_dir)
        .map_err(|e| Error::io(format!("creating {}", settings.out_dir.display()), e))?;
    let run_fold = |a: &FoldAssignment| -> Result<(FoldModelRecord, TrainRecord)> {
        let seed = fold_seed(plan.seed, a.fold_index);
        let train_ids: HashSet<&str> = a.train_ids.iter().map(String::as_str).collect();
        let val_ids: HashSet<&str> = a.val_ids.iter().map(String::as_str).collect();
        let train_split = corpus.subset(&train_ids, SplitTag::Train)?;
        let val_split = corpus.subset(&val_ids, SplitTag::Val)?;
        if train_split.len() != train_ids.len() || val_split.len() != val_ids.len() {
            return Err(Error::Validation(format!(
                "fold {} references ids missing from the corpus",
                a.fold_index
            )));
        }
        let mut model = factory(a, seed)?;
        let config = TrainConfig {
            seed,
            ..settings.train
        };
        log::info!(
            "fold {}: training {} on {} samples, validating on {}",
            a.fold_index,
            a.backbone_name,
            train_split.len(),
            val_split.len()
        );
        let history = train(model.as_mut(), &train_split, &val_split, &config)?;
        let path = settings.out_dir.join(format!("fold_{}.ckpt.json", a.fold_index));
        model.checkpoint()?.save(&path)?;
        log::info!("fold {}: best val F1 {:.4} at epoch {}", a.fold_index, history.best_val_f1, history.best_epoch);
        Ok((
            FoldModelRecord {
                fold_index: a.fold_index,
                backbone_name: a.backbone_name.clone(),
                ensemble_weight: history.best_val_f1,
                checkpoint_ref: path,
            },
            history,
        ))
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.parallel_folds.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build fold thread pool: {e}")))?;
    let results: Vec<Result<(FoldModelRecord, TrainRecord)>> =
        pool.install(|| plan.assignments.par_iter().map(run_fold).collect());

    let mut run = CvRun {
        records: Vec::new(),
        histories: Vec::new(),
    };
    for (a, r) in plan.assignments.iter().zip(results) {
        let (record, history) = r.map_err(|e| Error::Fold {
            fold: a.fold_index,
            source: Box::new(e),
        })?;
        run.records.push(record);
        run.histories.push(history);
    }
    Ok(run)
}

/// Soft-votes already loaded models over `corpus`.
pub fn predict_with_models(
    models: &[&dyn Classifier],
    weights: &[f64],
    corpus: &Corpus,
) -> Result<Vec<EnsemblePrediction>> {
    let texts = corpus.texts();
    let mut per_model = Vec::with_capacity(models.len());
    for m in models {
        if m.num_classes() != corpus.vocabulary().len() {
            return Err(Error::Checkpoint(format!(
                "{} predicts {} classes, corpus vocabulary has {}",
                m.spec().label(),
                m.num_classes(),
                corpus.vocabulary().len()
            )));
        }
        let mut probs = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(512) {
            probs.extend(predict_proba(*m, chunk)?);
        }
        per_model.push(probs);
    }
    let mut out = Vec::with_capacity(texts.len());
    for (i, sample) in corpus.samples().iter().enumerate() {
        let votes: Vec<ProbVector> = per_model.iter().map(|p| p[i].clone()).collect();
        out.push(EnsemblePrediction::new(
            sample.id.clone(),
            soft_vote(&votes, weights)?,
            corpus.vocabulary(),
        ));
    }
    Ok(out)
}

/// Loads every fold checkpoint and soft-votes them with their ensemble weights.
pub fn predict_ensemble(
    records: &[FoldModelRecord],
    corpus: &Corpus,
    registry: &BackboneRegistry,
) -> Result<Vec<EnsemblePrediction>> {
    let models: Vec<Box<dyn Classifier>> = records
        .iter()
        .map(|r| load_checkpoint(&r.checkpoint_ref, registry))
        .collect::<Result<_>>()?;
    let refs: Vec<&dyn Classifier> = models.iter().map(|m| m.as_ref()).collect();
    let weights: Vec<f64> = records.iter().map(|r| r.ensemble_weight).collect();
    predict_with_models(&refs, &weights, corpus)
}

/// On-disk description of a trained ensemble. Checkpoint paths are stored
/// relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub strategy: FoldStrategy,
    pub k_folds: usize,
    pub seed: u64,
    pub classes: Vec<String>,
    pub labeled_pool_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pseudo_label: Option<PseudoLabelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pseudo_harvested: Option<usize>,
    pub records: Vec<FoldModelRecord>,
}

impl EnsembleManifest {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new(""));
        let mut portable = self.clone();
        for r in &mut portable.records {
            if let Ok(rel) = r.checkpoint_ref.strip_prefix(base) {
                r.checkpoint_ref = rel.to_path_buf();
            }
        }
        let json = serde_json::to_string_pretty(&portable)? + "\n";
        fs::write(path, json).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<EnsembleManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut manifest: EnsembleManifest = serde_json::from_str(&text)?;
    let base = path.parent().unwrap_or(Path::new(""));
    for r in &mut manifest.records {
        if r.checkpoint_ref.is_relative() {
            r.checkpoint_ref = base.join(&r.checkpoint_ref);
        }
    }
    Ok(manifest)
}

#[derive(Serialize)]
struct ProbabilityFile<'a> {
    classes: &'a [String],
    predictions: &'a [EnsemblePrediction],
}

/// Writes the `id,label` submission CSV and a JSON of combined probabilities.
pub fn write_predictions(
    predictions: &[EnsemblePrediction],
    classes: &[String],
    csv_path: impl AsRef<Path>,
    json_path: impl AsRef<Path>,
) -> Result<()> {
    let mut csv = String::from("id,label\n");
    for p in predictions {
        csv.push_str(&format!("{},{}\n", p.id, p.predicted_label));
    }
    let csv_path = csv_path.as_ref();
    fs::write(csv_path, csv).map_err(|e| Error::io(format!("writing {}", csv_path.display()), e))?;
    let json = serde_json::to_string_pretty(&ProbabilityFile { classes, predictions })? + "\n";
    let json_path = json_path.as_ref();
    fs::write(json_path, json).map_err(|e| Error::io(format!("writing {}", json_path.display()), e))
}

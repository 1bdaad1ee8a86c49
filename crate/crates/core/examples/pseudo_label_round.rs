//! One pseudo-label round: score unlabeled texts with a fold ensemble, keep
//! the confident ones as training data and retrain every fold.

use textfold::classifiers::{BackboneRegistry, TOY_VARIANTS};
use textfold::corpus::{plan_folds, Corpus, FoldStrategy, LabelVocabulary, Sample, SplitTag};
use textfold::ensemble::{predict_ensemble, run_cv, run_pseudo_label_round, CvSettings, PseudoLabelConfig, RetrainPlan};
use textfold::synthetic::{generate, SyntheticSpec};
use textfold::training::{ScheduleConfig, TrainConfig};

fn main() -> textfold::Result<()> {
    let labels = LabelVocabulary::default();
    let pool = generate(&SyntheticSpec::balanced(300, 21).with_prefix("p"), &labels, SplitTag::Train)?;
    let hidden = generate(&SyntheticSpec::balanced(120, 22).with_prefix("u"), &labels, SplitTag::Test)?;
    // Strip labels: the test set is unlabeled.
    let unlabeled = Corpus::new(
        hidden.samples().iter().map(|s| Sample::unlabeled(s.id.clone(), s.text.clone())).collect(),
        labels.clone(),
        SplitTag::Test,
    )?;

    let backbones: Vec<String> = TOY_VARIANTS.iter().map(|v| v.name.to_string()).collect();
    let plan = plan_folds(&pool, 5, FoldStrategy::FiveModel, &backbones, 4)?;
    let train = TrainConfig {
        epochs: 5,
        batch_size: 32,
        schedule: ScheduleConfig {
            floor_lr: 1e-4,
            peak_lr: 0.05,
            warmup_epochs: 1.0,
            decay_epochs: 4.0,
            ..ScheduleConfig::warmup_cosine()
        },
        ..TrainConfig::backbone()
    };
    let mut settings = CvSettings::new(BackboneRegistry::default(), train, std::env::temp_dir().join("textfold-pseudo"));
    settings.parallel_folds = 5;

    let first = run_cv(&pool, &plan, &settings)?;
    let prior = predict_ensemble(&first.records, &unlabeled, &settings.registry)?;
    let confident = prior.iter().filter(|p| p.max_probability > 0.95).count();
    println!("first ensemble: {confident}/{} test predictions above 0.95", prior.len());

    let round = run_pseudo_label_round(
        &pool,
        &unlabeled,
        &prior,
        &RetrainPlan::from_plan(&plan),
        &settings,
        &PseudoLabelConfig::default(),
    )?;
    println!(
        "harvested {} pseudo-labels; labeled pool {} -> {}; retrained: {}",
        round.harvested.len(),
        pool.len(),
        round.pool_size,
        round.retrain.is_some()
    );
    let agree = round
        .harvested
        .samples()
        .iter()
        .filter(|s| hidden.samples().iter().any(|h| h.id == s.id && h.label == s.label))
        .count();
    println!("pseudo-labels matching the withheld truth: {agree}/{}", round.harvested.len());
    Ok(())
}

//! Five folds of one backbone; the fold models differ only in their data
//! and initialization.

use textfold::classifiers::BackboneRegistry;
use textfold::corpus::{plan_folds, FoldStrategy, LabelVocabulary, SplitTag};
use textfold::ensemble::{predict_ensemble, run_cv, CvSettings};
use textfold::synthetic::{generate, SyntheticSpec};
use textfold::training::{ScheduleConfig, TrainConfig};

fn main() -> textfold::Result<()> {
    let labels = LabelVocabulary::default();
    let mut spec = SyntheticSpec::balanced(400, 5).with_prefix("p");
    spec.signal = 0.15;
    let pool = generate(&spec, &labels, SplitTag::Train)?;
    let test = generate(&spec.clone().with_prefix("t"), &labels, SplitTag::Test)?;

    let plan = plan_folds(&pool, 5, FoldStrategy::SingleModel, &["toy-2".to_string()], 9)?;
    for a in &plan.assignments {
        println!("fold {}: {} train / {} val", a.fold_index, a.train_ids.len(), a.val_ids.len());
    }
    let train = TrainConfig {
        epochs: 4,
        batch_size: 32,
        schedule: ScheduleConfig {
            floor_lr: 1e-4,
            peak_lr: 0.03,
            warmup_epochs: 1.0,
            decay_epochs: 3.0,
            ..ScheduleConfig::warmup_cosine()
        },
        ..TrainConfig::backbone()
    };
    let settings = CvSettings::new(BackboneRegistry::default(), train, std::env::temp_dir().join("textfold-single"));
    let run = run_cv(&pool, &plan, &settings)?;
    for r in &run.records {
        println!("fold {} {}: weight {:.4}", r.fold_index, r.backbone_name, r.ensemble_weight);
    }
    let preds = predict_ensemble(&run.records, &test, &settings.registry)?;
    let correct = preds
        .iter()
        .zip(test.samples())
        .filter(|(p, s)| s.label.as_deref() == Some(p.predicted_label.as_str()))
        .count();
    println!("ensemble: {correct}/{} held-out samples correct", test.len());
    Ok(())
}

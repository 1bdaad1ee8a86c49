//! Five folds, a different backbone in each, combined by F1-weighted soft voting.
//!
//! Uses the five built-in toy encoders so it runs on a CPU in seconds. With
//! real encoders registered under names such as `bert` or `roberta` the same
//! code is the full-scale pipeline.
//!
//!     cargo run --release --example five_fold_five_model

use std::time::Instant;

use textfold::classifiers::{BackboneRegistry, TOY_VARIANTS};
use textfold::corpus::{plan_folds, FoldStrategy, LabelVocabulary, SplitTag};
use textfold::ensemble::{predict_ensemble, CvSettings, run_cv};
use textfold::evaluation::metrics;
use textfold::synthetic::{generate, SyntheticSpec};
use textfold::training::{ScheduleConfig, TrainConfig};

fn main() -> textfold::Result<()> {
    let labels = LabelVocabulary::default();
    let pool = generate(&SyntheticSpec::balanced(600, 11).with_prefix("p"), &labels, SplitTag::Train)?;
    let test = generate(&SyntheticSpec::balanced(200, 12).with_prefix("t"), &labels, SplitTag::Test)?;

    let backbones: Vec<String> = TOY_VARIANTS.iter().map(|v| v.name.to_string()).collect();
    let plan = plan_folds(&pool, 5, FoldStrategy::FiveModel, &backbones, 3)?;

    // Toy encoders start from random weights, so they need far larger
    // learning rates than the 5e-5 peak used for pretrained encoders.
    let train = TrainConfig {
        epochs: 6,
        batch_size: 32,
        schedule: ScheduleConfig {
            floor_lr: 1e-4,
            peak_lr: 0.05,
            warmup_epochs: 1.0,
            decay_epochs: 5.0,
            ..ScheduleConfig::warmup_cosine()
        },
        ..TrainConfig::backbone()
    };
    let out = std::env::temp_dir().join("textfold-five-fold");
    let mut settings = CvSettings::new(BackboneRegistry::default(), train, &out);
    settings.parallel_folds = 5;

    let started = Instant::now();
    let run = run_cv(&pool, &plan, &settings)?;
    for r in &run.records {
        println!("fold {} {:<6} val weighted F1 {:.4}", r.fold_index, r.backbone_name, r.ensemble_weight);
    }

    let preds = predict_ensemble(&run.records, &test, &settings.registry)?;
    let truth: Vec<&str> = test.samples().iter().map(|s| s.label.as_deref().unwrap()).collect();
    let predicted: Vec<&str> = preds.iter().map(|p| p.predicted_label.as_str()).collect();
    let report = metrics(&truth, &predicted, &labels)?;
    println!(
        "ensemble on {} held-out samples: accuracy {:.4}, weighted F1 {:.4} ({:.1?})",
        test.len(),
        report.accuracy,
        report.weighted_f1,
        started.elapsed()
    );
    println!("checkpoints in {}", out.display());
    Ok(())
}

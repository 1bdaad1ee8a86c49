//! Metrics, the metrics.json report and the PNG charts.

use textfold::corpus::LabelVocabulary;
use textfold::evaluation::{emit_reports, metrics, read_metrics};
use textfold::training::{EpochRecord, TrainRecord};

fn main() -> textfold::Result<()> {
    let labels = LabelVocabulary::default();
    let truth = ["real", "fake", "real", "fake", "real", "real", "fake", "fake"];
    let predicted = ["real", "real", "real", "fake", "real", "fake", "fake", "fake"];
    let report = metrics(&truth, &predicted, &labels)?;
    println!("accuracy {:.4}", report.accuracy);
    for (i, c) in report.classes.iter().enumerate() {
        println!(
            "  {c:<5} precision {:.4} recall {:.4} F1 {:.4} support {}",
            report.precision[i], report.recall[i], report.f1[i], report.support[i]
        );
    }
    println!(
        "weighted precision {:.4} recall {:.4} F1 {:.4}",
        report.weighted_precision, report.weighted_recall, report.weighted_f1
    );
    println!(
        "with `{}` as positive: {} false negatives, {} false positives",
        report.error_analysis.positive_class, report.error_analysis.false_negatives, report.error_analysis.false_positives
    );

    let curve = TrainRecord {
        model: "demo".into(),
        epochs: (1..=10)
            .map(|e| {
                let x = e as f64;
                EpochRecord {
                    epoch: e,
                    train_loss: 0.7 / x,
                    val_loss: 0.7 / x.sqrt(),
                    train_f1: 1.0 - 0.4 / x,
                    val_f1: 1.0 - 0.45 / x.sqrt(),
                    lr: 1e-3,
                }
            })
            .collect(),
        best_epoch: 10,
        best_val_f1: 1.0 - 0.45 / 10f64.sqrt(),
    };
    let out = std::env::temp_dir().join("textfold-metrics");
    let files = emit_reports(&report, &[curve], Some(&[4, 4]), &out)?;
    assert_eq!(read_metrics(&files.metrics)?, report);
    println!("wrote {} and {} charts to {}", files.metrics.display(), 2 + files.curves.len(), out.display());
    Ok(())
}

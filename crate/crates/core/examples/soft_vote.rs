//! Weighted soft voting over per-model probability vectors.

use textfold::classifiers::ProbVector;
use textfold::corpus::LabelVocabulary;
use textfold::ensemble::{soft_vote, EnsemblePrediction};

fn main() -> textfold::Result<()> {
    let probs = vec![ProbVector::new(vec![0.6, 0.4])?, ProbVector::new(vec![0.2, 0.8])?];
    let labels = LabelVocabulary::default();
    for weights in [[1.0, 1.0], [0.9, 0.6], [9.0, 6.0], [0.98, 0.2]] {
        let combined = soft_vote(&probs, &weights)?;
        let p = EnsemblePrediction::new("x", combined, &labels);
        println!(
            "weights {:?} -> {:?} => {} ({:.3})",
            weights,
            p.combined.as_slice(),
            p.predicted_label,
            p.max_probability
        );
    }
    Ok(())
}

//! Smoothed targets and the cross-entropy the trainer minimizes.

use textfold::nn::softmax;
use textfold::training::{smooth_targets, smoothed_cross_entropy, SmoothingConfig};

fn main() -> textfold::Result<()> {
    for (eps, k) in [(0.0, 2), (0.01, 2), (0.1, 2), (0.1, 4)] {
        let cfg = SmoothingConfig::new(eps, k)?;
        println!("eps = {eps:<4} k = {k}: target for class 0 = {:?}", smooth_targets(0, &cfg)?);
    }
    let target = smooth_targets(1, &SmoothingConfig::new(0.01, 2)?)?;
    for logits in [[0.0, 0.0], [-2.0, 2.0], [-8.0, 8.0], [-30.0, 30.0]] {
        let p = softmax(&logits);
        println!(
            "logits {:?} -> p(fake) {:.6}, loss {:.6}",
            logits,
            p[1],
            smoothed_cross_entropy(&p, &target)
        );
    }
    Ok(())
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities are clamped below at this value before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub epsilon: f64,
    pub k: usize,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self { epsilon: 0.01, k: 2 }
    }
}

impl SmoothingConfig {
    pub fn new(epsilon: f64, k: usize) -> Result<Self> {
        let c = Self { epsilon, k };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::InvalidArgument(format!("epsilon must be in [0, 1), got {}", self.epsilon)));
        }
        if self.k < 2 {
            return Err(Error::InvalidArgument(format!("k must be at least 2, got {}", self.k)));
        }
        Ok(())
    }
}

/// `1 - epsilon` on the true class and `epsilon / (k - 1)` elsewhere.
pub fn smooth_targets(label_index: usize, config: &SmoothingConfig) -> Result<Vec<f64>> {
    config.validate()?;
    if label_index >= config.k {
        return Err(Error::InvalidArgument(format!(
            "label index {label_index} out of range for k={}",
            config.k
        )));
    }
    let off = config.epsilon / (config.k - 1) as f64;
    let mut t = vec![off; config.k];
    t[label_index] = 1.0 - config.epsilon;
    Ok(t)
}

/// `-sum_i target_i * ln(max(probs_i, 1e-12))`. NaN probabilities give NaN.
pub fn smoothed_cross_entropy(probs: &[f64], target: &[f64]) -> f64 {
    if probs.iter().any(|p| p.is_nan()) {
        return f64::NAN;
    }
    -probs
        .iter()
        .zip(target)
        .map(|(&p, &t)| if t == 0.0 { 0.0 } else { t * p.max(PROB_FLOOR).ln() })
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binary_targets() {
        let t = smooth_targets(0, &SmoothingConfig::new(0.01, 2).unwrap()).unwrap();
        assert_eq!(t, vec![0.99, 0.01]);
    }

    #[test]
    fn zero_epsilon_is_one_hot() {
        let t = smooth_targets(2, &SmoothingConfig::new(0.0, 4).unwrap()).unwrap();
        assert_eq!(t, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn three_class_targets() {
        let t = smooth_targets(1, &SmoothingConfig::new(0.03, 3).unwrap()).unwrap();
        let expected = [0.015, 0.97, 0.015];
        for (a, b) in t.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{t:?}");
        }
    }

    #[test]
    fn out_of_range_label() {
        assert!(smooth_targets(2, &SmoothingConfig::default()).is_err());
        assert!(SmoothingConfig::new(1.0, 2).is_err());
        assert!(SmoothingConfig::new(0.1, 1).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        // -(0.99 ln 0.99 + 0.01 ln 0.01), evaluated by hand
        let h = smoothed_cross_entropy(&[0.99, 0.01], &[0.99, 0.01]);
        assert!((h - 0.056_001_534_354_847_345).abs() < 1e-12, "{h}");
        assert!(smoothed_cross_entropy(&[1.0, 0.0], &[1.0, 0.0]).abs() < 1e-15);
        let l = smoothed_cross_entropy(&[0.5, 0.5], &[0.99, 0.01]);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(smoothed_cross_entropy(&[0.0, 1.0], &[1.0, 0.0]).is_finite());
    }

    #[test]
    fn gibbs_inequality_spot_checks() {
        let target = [0.99, 0.01];
        let entropy = smoothed_cross_entropy(&target, &target);
        for p0 in [0.01, 0.3, 0.5, 0.9, 0.98, 0.995, 1.0] {
            let ce = smoothed_cross_entropy(&[p0, 1.0 - p0], &target);
            assert!(ce > entropy, "p0={p0}");
        }
    }

    proptest! {
        #[test]
        fn targets_sum_to_one(k in 2usize..50, eps in 0.0f64..0.999, label in 0usize..50) {
            let label = label % k;
            let t = smooth_targets(label, &SmoothingConfig::new(eps, k).unwrap()).unwrap();
            prop_assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert_eq!(t.len(), k);
        }
    }
}

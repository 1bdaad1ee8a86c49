use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    WarmupCosine,
    StepDecay,
}

/// Learning-rate schedule over fractional epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub mode: ScheduleMode,
    pub floor_lr: f64,
    pub peak_lr: f64,
    pub warmup_epochs: f64,
    pub decay_epochs: f64,
    pub base_lr: f64,
    pub factor: f64,
    pub period: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self::warmup_cosine()
    }
}

impl ScheduleConfig {
    /// 1e-6 rising linearly to 5e-5 over 6 epochs, then a 6-epoch half-cosine back to 1e-6.
    pub fn warmup_cosine() -> Self {
        Self {
            mode: ScheduleMode::WarmupCosine,
            floor_lr: 1e-6,
            peak_lr: 5e-5,
            warmup_epochs: 6.0,
            decay_epochs: 6.0,
            base_lr: 0.01,
            factor: 0.1,
            period: 30.0,
        }
    }

    /// 0.01, multiplied by 0.1 every 30 epochs.
    pub fn step_decay() -> Self {
        Self {
            mode: ScheduleMode::StepDecay,
            ..Self::warmup_cosine()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("schedule: {m}")));
        match self.mode {
            ScheduleMode::WarmupCosine => {
                if !(self.floor_lr >= 0.0 && self.floor_lr <= self.peak_lr && self.peak_lr > 0.0) {
                    return bad("need 0 <= floor_lr <= peak_lr and peak_lr > 0");
                }
                if self.warmup_epochs < 0.0 || self.decay_epochs <= 0.0 {
                    return bad("need warmup_epochs >= 0 and decay_epochs > 0");
                }
            }
            ScheduleMode::StepDecay => {
                if self.base_lr <= 0.0 || self.factor <= 0.0 || self.period <= 0.0 {
                    return bad("step decay needs positive base_lr, factor and period");
                }
            }
        }
        Ok(())
    }
}

/// Learning rate after `t` (fractional) epochs.
pub fn lr_at(t: f64, config: &ScheduleConfig) -> f64 {
    let t = t.max(0.0);
    match config.mode {
        ScheduleMode::WarmupCosine => {
            let (floor, peak) = (config.floor_lr, config.peak_lr);
            let (w, d) = (config.warmup_epochs, config.decay_epochs);
            if t <= w {
                if w == 0.0 {
                    peak
                } else {
                    floor + (peak - floor) * t / w
                }
            } else if t <= w + d {
                floor + (peak - floor) * (1.0 + (PI * (t - w) / d).cos()) / 2.0
            } else {
                floor
            }
        }
        ScheduleMode::StepDecay => config.base_lr * config.factor.powf((t / config.period).floor()),
    }
}

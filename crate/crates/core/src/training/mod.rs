//! Label smoothing, learning-rate schedules and the epoch loop with
//! best-epoch selection by validation weighted F1.

mod schedule;
mod smoothing;
mod trainer;

pub use schedule::{lr_at, ScheduleConfig, ScheduleMode};
pub use smoothing::{smooth_targets, smoothed_cross_entropy, SmoothingConfig, PROB_FLOOR};
pub use trainer::{evaluate_split, train, EpochRecord, SplitScore, TrainConfig, TrainRecord};

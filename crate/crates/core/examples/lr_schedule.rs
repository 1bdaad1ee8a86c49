//! The two learning-rate schedules, sampled per epoch.

use textfold::training::{lr_at, ScheduleConfig};

fn main() {
    let cosine = ScheduleConfig::warmup_cosine();
    println!("warmup + cosine (backbone fine-tuning)");
    for t in 0..=12 {
        println!("  t = {t:>2}  lr = {:.3e}", lr_at(t as f64, &cosine));
    }
    let step = ScheduleConfig::step_decay();
    println!("step decay (recurrent baseline)");
    for t in [0.0, 29.9, 30.0, 60.0, 90.0, 119.0] {
        println!("  t = {t:>5}  lr = {:.3e}", lr_at(t, &step));
    }
}

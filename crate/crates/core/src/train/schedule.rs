use serde::{Deserialize, Serialize};

use super::run::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// Linear warmup to the peak, then cosine decay to the floor.
    #[default]
    WarmupCosine,
    /// Peak learning rate at every step.
    Constant,
}

/// Learning rate at `step` ∈ [0, total_steps]. Warmup is linear from zero;
/// the cosine phase decays to `lr_floor_fraction × peak` exactly at
/// `total_steps`, and the curve is continuous at the warmup boundary.
pub fn lr_at(step: u64, config: &TrainConfig) -> f64 {
    match config.schedule {
        ScheduleKind::Constant => config.peak_lr,
        ScheduleKind::WarmupCosine => {
            let peak = config.peak_lr;
            let warmup = config.warmup_steps;
            if warmup > 0 && step < warmup {
                return peak * step as f64 / warmup as f64;
            }
            let total = config.total_steps.max(warmup + 1);
            let floor = config.lr_floor_fraction * peak;
            let progress = (step.saturating_sub(warmup)) as f64 / (total - warmup) as f64;
            let progress = progress.min(1.0);
            floor + (peak - floor) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> TrainConfig {
        TrainConfig {
            warmup_steps: 100,
            total_steps: 2000,
            peak_lr: 5e-5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn warmup_starts_at_zero() {
        assert_eq!(lr_at(0, &cfg()), 0.0);
    }

    #[test]
    fn warmup_end_hits_peak_exactly() {
        let c = cfg();
        assert_eq!(lr_at(c.warmup_steps, &c), c.peak_lr);
    }

    #[test]
    fn final_step_is_a_tenth_of_peak() {
        let c = cfg();
        let end = lr_at(c.total_steps, &c);
        assert!((end - 0.1 * c.peak_lr).abs() < 1e-12 * c.peak_lr.max(1.0), "end {end}");
    }

    #[test]
    fn continuous_at_warmup_boundary() {
        let c = cfg();
        let before = lr_at(c.warmup_steps - 1, &c);
        let at = lr_at(c.warmup_steps, &c);
        let after = lr_at(c.warmup_steps + 1, &c);
        assert!((at - before) < c.peak_lr * 0.02);
        assert!((at - after) < c.peak_lr * 0.02);
        assert!(before <= at && after <= at);
    }

    #[test]
    fn constant_schedule_is_flat() {
        let mut c = cfg();
        c.schedule = ScheduleKind::Constant;
        for step in [0, 1, 500, 2000] {
            assert_eq!(lr_at(step, &c), c.peak_lr);
        }
    }
}

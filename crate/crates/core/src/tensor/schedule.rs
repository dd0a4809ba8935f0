use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear warmup to `peak_lr`, then step decay by `decay_factor` at each
/// listed step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub peak_lr: f64,
    pub warmup_steps: usize,
    pub decay_steps: Vec<usize>,
    pub decay_factor: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self { peak_lr: 0.05, warmup_steps: 100, decay_steps: vec![1000, 1500], decay_factor: 0.1 }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.peak_lr.is_finite() && self.peak_lr > 0.0) {
            return Err(Error::Config(format!("schedule.peak_lr must be > 0, got {}", self.peak_lr)));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return Err(Error::Config(format!(
                "schedule.decay_factor must be in (0,1), got {}",
                self.decay_factor
            )));
        }
        if self.decay_steps.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config("schedule.decay_steps must be sorted".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        lr_at(self, step)
    }
}

pub fn lr_at(schedule: &LrSchedule, step: usize) -> f64 {
    if step < schedule.warmup_steps {
        return schedule.peak_lr * (step as f64 / schedule.warmup_steps as f64);
    }
    let passed = schedule.decay_steps.iter().filter(|&&d| d <= step).count();
    schedule.peak_lr * schedule.decay_factor.powi(passed as i32)
}

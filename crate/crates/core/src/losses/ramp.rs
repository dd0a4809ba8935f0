use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampStyle {
    /// `min(c·t, cap)`.
    Linear,
    /// `0` before `start`, `cap` from `start` on.
    Step { start: usize },
}

/// Schedule for a coefficient that grows from 0 to `cap` during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampSchedule {
    pub cap: f64,
    pub slope_c: f64,
    pub style: RampStyle,
}

impl RampSchedule {
    pub fn linear(cap: f64, slope_c: f64) -> Self {
        Self { cap, slope_c, style: RampStyle::Linear }
    }

    /// Linear ramp that saturates after 10% of `total_steps`.
    pub fn saturating_at_tenth(cap: f64, total_steps: usize) -> Self {
        let span = (0.1 * total_steps as f64).max(1.0);
        Self::linear(cap, cap / span)
    }

    pub fn step(cap: f64, start: usize) -> Self {
        Self { cap, slope_c: f64::INFINITY, style: RampStyle::Step { start } }
    }
}

pub fn coefficient_at(sched: &RampSchedule, step: usize) -> f64 {
    match sched.style {
        RampStyle::Linear => {
            if sched.cap == 0.0 {
                return 0.0;
            }
            (sched.slope_c * step as f64).min(sched.cap)
        }
        RampStyle::Step { start } => {
            if step < start {
                0.0
            } else {
                sched.cap
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_examples() {
        let s = RampSchedule::linear(0.04, 0.001);
        assert!((coefficient_at(&s, 10) - 0.01).abs() < 1e-15);
        assert_eq!(coefficient_at(&s, 0), 0.0);
        assert_eq!(coefficient_at(&s, 1_000_000), 0.04);
    }

    #[test]
    fn step_style() {
        let s = RampSchedule::step(0.5, 100);
        assert_eq!(coefficient_at(&s, 99), 0.0);
        assert_eq!(coefficient_at(&s, 100), 0.5);
    }

    #[test]
    fn default_slope_saturates_at_tenth() {
        let s = RampSchedule::saturating_at_tenth(0.04, 2000);
        assert!(coefficient_at(&s, 199) < 0.04);
        assert_eq!(coefficient_at(&s, 200), 0.04);
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMode {
    Linear,
    Random,
}

/// Frame sampling interval over the course of training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalSchedule {
    pub start_interval: u32,
    pub end_interval: u32,
    pub mode: IntervalMode,
    pub total_steps: usize,
}

impl IntervalSchedule {
    pub fn new(start_interval: u32, end_interval: u32, mode: IntervalMode, total_steps: usize) -> Result<Self> {
        if start_interval == 0 || start_interval > end_interval || total_steps == 0 {
            return Err(Error::InvalidArgument(format!(
                "invalid interval schedule {start_interval}..={end_interval} over {total_steps} steps"
            )));
        }
        Ok(IntervalSchedule {
            start_interval,
            end_interval,
            mode,
            total_steps,
        })
    }
}

/// Frame interval to use at `step`.
pub fn sample_interval(schedule: &IntervalSchedule, step: usize, rng_seed: u64) -> Result<u32> {
    let (lo, hi) = (schedule.start_interval, schedule.end_interval);
    match schedule.mode {
        IntervalMode::Linear => {
            if step >= schedule.total_steps {
                return Err(Error::StepOutOfRange {
                    step,
                    total: schedule.total_steps,
                });
            }
            if schedule.total_steps == 1 {
                return Ok(lo);
            }
            let frac = step as f64 / (schedule.total_steps - 1) as f64;
            Ok((lo as f64 + (hi - lo) as f64 * frac).round() as u32)
        }
        IntervalMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed ^ (step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            Ok(rng.random_range(lo..=hi))
        }
    }
}

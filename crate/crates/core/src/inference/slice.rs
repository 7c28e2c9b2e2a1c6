//! Univariate slice sampling with stepping out and shrinkage.

use log::warn;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceConfig {
    /// Initial bracket width.
    pub width: f64,
    /// Maximum number of width-sized step-outs (split randomly between the
    /// two ends). Shrinkage gives up after twice this many contractions.
    pub max_stepouts: usize,
}

impl Default for SliceConfig {
    fn default() -> Self {
        Self {
            width: 1.0,
            max_stepouts: 50,
        }
    }
}

/// One slice-sampling update of `current` under the unnormalised
/// `log_density`. Returns `current` unchanged when shrinkage fails to find an
/// acceptable point within its budget.
pub fn slice_sample<F, R>(mut log_density: F, current: f64, cfg: &SliceConfig, rng: &mut R) -> f64
where
    F: FnMut(f64) -> f64,
    R: Rng + ?Sized,
{
    let f0 = log_density(current);
    if !f0.is_finite() {
        warn!("slice sampler started at a point of zero density ({current}); keeping it");
        return current;
    }
    let level = f0 + rng.random::<f64>().ln();

    let w = cfg.width;
    let mut left = current - rng.random::<f64>() * w;
    let mut right = left + w;
    let m = cfg.max_stepouts;
    let mut left_steps = (rng.random::<f64>() * m as f64).floor() as usize;
    let mut right_steps = m.saturating_sub(1).saturating_sub(left_steps);
    while left_steps > 0 && log_density(left) > level {
        left -= w;
        left_steps -= 1;
    }
    while right_steps > 0 && log_density(right) > level {
        right += w;
        right_steps -= 1;
    }

    for _ in 0..2 * m.max(1) {
        let proposal = left + rng.random::<f64>() * (right - left);
        if log_density(proposal) > level {
            return proposal;
        }
        if proposal < current {
            left = proposal;
        } else {
            right = proposal;
        }
    }
    warn!("slice sampler shrinkage exhausted around {current}; keeping current value");
    current
}

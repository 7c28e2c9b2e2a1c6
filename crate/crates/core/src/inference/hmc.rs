//! Hamiltonian Monte Carlo with a unit mass matrix.

use rand::Rng;

use crate::stats::sample_normal;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HmcConfig {
    pub step_size: f64,
    pub n_leapfrog: usize,
}

impl Default for HmcConfig {
    fn default() -> Self {
        Self {
            step_size: 0.01,
            n_leapfrog: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmcTransition {
    pub position: Vec<f64>,
    pub accepted: bool,
    /// `min(1, exp(-dH))`, zero for a non-finite proposal.
    pub accept_prob: f64,
    /// Proposed minus current Hamiltonian.
    pub energy_error: f64,
}

/// Leapfrog integration of `n` steps, updating position, momentum and the
/// gradient at the final position. Returns the final log density.
pub(crate) fn leapfrog<F>(
    target: &mut F,
    q: &mut [f64],
    p: &mut [f64],
    grad: &mut Vec<f64>,
    step_size: f64,
    n: usize,
) -> f64
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut logp = f64::NAN;
    for _ in 0..n {
        for (pi, gi) in p.iter_mut().zip(grad.iter()) {
            *pi += 0.5 * step_size * gi;
        }
        for (qi, pi) in q.iter_mut().zip(p.iter()) {
            *qi += step_size * pi;
        }
        let (lp, g) = target(q);
        logp = lp;
        *grad = g;
        for (pi, gi) in p.iter_mut().zip(grad.iter()) {
            *pi += 0.5 * step_size * gi;
        }
        if !lp.is_finite() {
            break;
        }
    }
    logp
}

pub(crate) fn kinetic(p: &[f64]) -> f64 {
    0.5 * p.iter().map(|v| v * v).sum::<f64>()
}

/// One HMC transition: fresh Gaussian momentum, `n_leapfrog` leapfrog steps,
/// Metropolis correction. A non-finite proposal energy is always rejected.
pub fn hmc_step<F, R>(
    target: &mut F,
    current: &[f64],
    cfg: &HmcConfig,
    rng: &mut R,
) -> HmcTransition
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
    R: Rng + ?Sized,
{
    let (logp0, mut grad) = target(current);
    let mut p: Vec<f64> = current
        .iter()
        .map(|_| sample_normal(rng, 0.0, 1.0))
        .collect();
    let h0 = kinetic(&p) - logp0;
    let mut q = current.to_vec();
    let logp1 = leapfrog(
        target,
        &mut q,
        &mut p,
        &mut grad,
        cfg.step_size,
        cfg.n_leapfrog,
    );
    let h1 = kinetic(&p) - logp1;
    let energy_error = h1 - h0;
    let accept_prob = if energy_error.is_finite() {
        (-energy_error).exp().min(1.0)
    } else {
        0.0
    };
    let accepted = accept_prob > 0.0 && rng.random::<f64>() < accept_prob;
    HmcTransition {
        position: if accepted { q } else { current.to_vec() },
        accepted,
        accept_prob,
        energy_error,
    }
}

/// Nesterov dual-averaging step-size adaptation.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DualAveraging {
    target_accept: f64,
    mu: f64,
    log_step: f64,
    log_step_bar: f64,
    h_bar: f64,
    count: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    pub fn new(initial_step: f64, target_accept: f64) -> Self {
        Self {
            target_accept,
            mu: (10.0 * initial_step).ln(),
            log_step: initial_step.ln(),
            log_step_bar: 0.0,
            h_bar: 0.0,
            count: 0.0,
        }
    }

    /// Feeds one acceptance statistic; returns the step size to use next.
    pub fn update(&mut self, accept_stat: f64) -> f64 {
        self.count += 1.0;
        let m = self.count;
        let eta = 1.0 / (m + Self::T0);
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target_accept - accept_stat);
        self.log_step = self.mu - m.sqrt() / Self::GAMMA * self.h_bar;
        let weight = m.powf(-Self::KAPPA);
        self.log_step_bar = weight * self.log_step + (1.0 - weight) * self.log_step_bar;
        self.log_step.exp()
    }

    /// Step size to freeze once adaptation ends.
    pub fn final_step(&self) -> f64 {
        self.log_step_bar.exp()
    }
}

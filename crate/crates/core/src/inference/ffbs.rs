//! Forward filtering, backward sampling of the hidden state sequence.

use rand::Rng;

use crate::chain::StateSequence;
use crate::emissions::LogLikelihoodMatrix;
use crate::error::{Result, ShgpError};
use crate::prior::TransitionMatrix;
use crate::stats::sample_categorical;

/// Filtered state probabilities `p(x_t | y_1..t)` (T x K, row-major) and the
/// log marginal likelihood `log p(y_1..T)`.
///
/// Each step works in linear space on likelihoods shifted by their row
/// maximum and renormalised, so long sequences do not underflow.
pub fn forward_filter(
    p: &TransitionMatrix,
    init: &[f64],
    loglik: &LogLikelihoodMatrix,
) -> Result<(Vec<f64>, f64)> {
    let k = p.k();
    if loglik.k() != k || init.len() != k {
        return Err(ShgpError::Dimension(format!(
            "forward filter: K={k}, likelihood has {} states, initial distribution {}",
            loglik.k(),
            init.len()
        )));
    }
    let t_len = loglik.len();
    let mut filtered = vec![0.0; t_len * k];
    let mut log_evidence = 0.0;
    let mut predicted = init.to_vec();
    for t in 0..t_len {
        let row = loglik.row(t);
        let peak = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if peak == f64::NEG_INFINITY || peak.is_nan() {
            return Err(ShgpError::ImpossibleObservation { t });
        }
        if t > 0 {
            let prev = &filtered[(t - 1) * k..t * k];
            for (c, slot) in predicted.iter_mut().enumerate() {
                *slot = (0..k).map(|i| prev[i] * p.get(i, c)).sum();
            }
        }
        let cur = &mut filtered[t * k..(t + 1) * k];
        for s in 0..k {
            cur[s] = predicted[s] * (row[s] - peak).exp();
        }
        let norm: f64 = cur.iter().sum();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(ShgpError::ImpossibleObservation { t });
        }
        cur.iter_mut().for_each(|v| *v /= norm);
        log_evidence += norm.ln() + peak;
    }
    Ok((filtered, log_evidence))
}

/// Exact joint draw of the state sequence from `p(x | y, P, theta)` with
/// `x_1` drawn from `init`.
pub fn ffbs<R: Rng + ?Sized>(
    p: &TransitionMatrix,
    init: &[f64],
    loglik: &LogLikelihoodMatrix,
    rng: &mut R,
) -> Result<StateSequence> {
    let (filtered, _) = forward_filter(p, init, loglik)?;
    let k = p.k();
    let t_len = loglik.len();
    let mut x = vec![0usize; t_len];
    x[t_len - 1] = sample_categorical(rng, &filtered[(t_len - 1) * k..]);
    let mut weights = vec![0.0; k];
    for t in (0..t_len - 1).rev() {
        let next = x[t + 1];
        let row = &filtered[t * k..(t + 1) * k];
        for (i, slot) in weights.iter_mut().enumerate() {
            *slot = row[i] * p.get(i, next);
        }
        x[t] = sample_categorical(rng, &weights);
    }
    StateSequence::new(x, k)
}

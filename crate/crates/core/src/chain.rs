//! Simulation from the transition matrix of a weight matrix, plus the
//! executable forms of its long-run properties: detailed balance, total
//! variation convergence and the transition-count sufficient statistic.
//!
//! States are 0-based indices.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShgpError};
use crate::prior::{
    normalize_rows, stationary_distribution, BaseWeights, TransitionMatrix, WeightMatrix,
};
use crate::stats::sample_categorical;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateSequence(Vec<usize>);

impl StateSequence {
    pub fn new(states: Vec<usize>, k: usize) -> Result<Self> {
        if states.is_empty() {
            return Err(ShgpError::InvalidParameter(
                "state sequence is empty".into(),
            ));
        }
        if let Some(&bad) = states.iter().find(|&&s| s >= k) {
            return Err(ShgpError::InvalidParameter(format!(
                "state {bad} out of range for K={k}"
            )));
        }
        Ok(Self(states))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of distinct states visited.
    pub fn occupied(&self, k: usize) -> usize {
        let mut seen = vec![false; k];
        for &s in &self.0 {
            seen[s] = true;
        }
        seen.into_iter().filter(|&b| b).count()
    }

    pub fn max_state(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionCounts {
    k: usize,
    counts: Vec<u64>,
    initial: usize,
}

impl TransitionCounts {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.k + j]
    }

    /// Number of transitions out of state `i`.
    pub fn row_total(&self, i: usize) -> u64 {
        self.counts[i * self.k..(i + 1) * self.k].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn simulate<R: Rng + ?Sized>(
    j: &WeightMatrix,
    w: &BaseWeights,
    t: usize,
    rng: &mut R,
) -> Result<StateSequence> {
    if t == 0 {
        return Err(ShgpError::InvalidParameter("T must be at least 1".into()));
    }
    if w.len() != j.k() {
        return Err(ShgpError::Dimension(format!(
            "{} base weights for a {}-state weight matrix",
            w.len(),
            j.k()
        )));
    }
    let p = normalize_rows(j)?;
    Ok(StateSequence(simulate_from(&p, &w.normalized(), t, rng)))
}

pub(crate) fn simulate_from<R: Rng + ?Sized>(
    p: &TransitionMatrix,
    init: &[f64],
    t: usize,
    rng: &mut R,
) -> Vec<usize> {
    let mut x = Vec::with_capacity(t);
    let mut cur = sample_categorical(rng, init);
    x.push(cur);
    for _ in 1..t {
        cur = sample_categorical(rng, p.row(cur));
        x.push(cur);
    }
    x
}

pub fn transition_counts(x: &StateSequence, k: usize) -> Result<TransitionCounts> {
    if x.max_state() >= k {
        return Err(ShgpError::Dimension(format!(
            "state {} out of range for K={k}",
            x.max_state()
        )));
    }
    let mut counts = vec![0u64; k * k];
    for pair in x.as_slice().windows(2) {
        counts[pair[0] * k + pair[1]] += 1;
    }
    Ok(TransitionCounts {
        k,
        counts,
        initial: x.as_slice()[0],
    })
}

/// `sum_ij C_ij log P_ij`, accumulated in fixed row-major order so that two
/// sequences with the same initial state and counts give bit-identical values.
pub fn path_log_likelihood(x: &StateSequence, j: &WeightMatrix) -> Result<f64> {
    let p = normalize_rows(j)?;
    let c = transition_counts(x, j.k())?;
    let k = j.k();
    let mut total = 0.0;
    for a in 0..k {
        for b in 0..k {
            let n = c.get(a, b);
            if n > 0 {
                total += n as f64 * p.get(a, b).ln();
            }
        }
    }
    Ok(total)
}

/// `max_ij |pi_i P_ij - pi_j P_ji|` with `pi` the row-sum distribution.
pub fn detailed_balance_residual(j: &WeightMatrix) -> Result<f64> {
    let p = normalize_rows(j)?;
    let pi = stationary_distribution(j);
    let k = j.k();
    let mut worst = 0.0f64;
    for a in 0..k {
        for b in a + 1..k {
            worst = worst.max((pi[a] * p.get(a, b) - pi[b] * p.get(b, a)).abs());
        }
    }
    Ok(worst)
}

/// Left Perron vector of a strictly positive stochastic matrix by power
/// iteration.
pub fn invariant_distribution(p: &TransitionMatrix) -> Vec<f64> {
    let k = p.k();
    let mut v = vec![1.0 / k as f64; k];
    for _ in 0..100_000 {
        let mut next: Vec<f64> = (0..k)
            .map(|c| (0..k).map(|i| v[i] * p.get(i, c)).sum())
            .collect();
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= s);
        let diff: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
        v = next;
        if diff < 1e-15 {
            break;
        }
    }
    v
}

/// `d(t) = max_i 0.5 * sum_j |P^t(i, j) - pi_j|` for `t = 1..=t_max`.
///
/// `pi` is the row-sum distribution for symmetric `J` and the power-iteration
/// invariant distribution otherwise.
pub fn tv_convergence_curve(j: &WeightMatrix, t_max: usize) -> Result<Vec<f64>> {
    if t_max == 0 {
        return Err(ShgpError::InvalidParameter(
            "t_max must be at least 1".into(),
        ));
    }
    let p = normalize_rows(j)?;
    let pi = if j.is_symmetric() {
        stationary_distribution(j)
    } else {
        invariant_distribution(&p)
    };
    let k = p.k();
    let mut power = p.as_slice().to_vec();
    let mut curve = Vec::with_capacity(t_max);
    let mut next = vec![0.0; k * k];
    for step in 1..=t_max {
        if step > 1 {
            for i in 0..k {
                for c in 0..k {
                    next[i * k + c] = (0..k).map(|m| power[i * k + m] * p.get(m, c)).sum();
                }
                let s: f64 = next[i * k..(i + 1) * k].iter().sum();
                next[i * k..(i + 1) * k].iter_mut().for_each(|v| *v /= s);
            }
            std::mem::swap(&mut power, &mut next);
        }
        let d = (0..k)
            .map(|i| {
                0.5 * (0..k)
                    .map(|c| (power[i * k + c] - pi[c]).abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        curve.push(d);
    }
    Ok(curve)
}

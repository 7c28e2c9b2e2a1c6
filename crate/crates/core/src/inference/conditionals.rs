//! Log full conditionals used by the Gibbs sweep, all on log scale with the
//! change-of-variables Jacobian included.

use statrs::function::gamma::ln_gamma;

use crate::chain::TransitionCounts;
use crate::prior::{free_cells, free_len, WeightMatrix};
use crate::stats::{gamma_ln_pdf, gamma_ln_pdf_log_x, POSITIVE_FLOOR};

/// `log p(alpha0 = e^u | w)` up to a constant, for `u = log alpha0`.
pub fn log_conditional_alpha0(u: f64, w: &[f64], gamma: f64, s0: f64, r0: f64) -> f64 {
    let alpha0 = u.exp();
    if !(alpha0 > 0.0 && alpha0.is_finite()) {
        return f64::NEG_INFINITY;
    }
    let k = w.len().max(1) as f64;
    let shape = alpha0 * gamma / k;
    gamma_ln_pdf(alpha0, s0, r0)
        + w.iter()
            .map(|&x| gamma_ln_pdf(x, shape, alpha0))
            .sum::<f64>()
        + u
}

/// `log p(alpha = e^u | J, w)` up to a constant, for `u = log alpha`.
pub fn log_conditional_alpha(u: f64, j: &WeightMatrix, w: &[f64], s: f64, r: f64) -> f64 {
    let alpha = u.exp();
    if !(alpha > 0.0 && alpha.is_finite()) {
        return f64::NEG_INFINITY;
    }
    gamma_ln_pdf(alpha, s, r) + crate::prior::weight_matrix_log_density(j, w, alpha) + u
}

/// `log p(w_k = e^u | w_-k, J, alpha, alpha0, x_1)` up to a constant.
///
/// Collects the base-weight prior of `w_k`, every stored edge whose shape
/// involves `w_k`, and the initial-state term `w_{x_1} / sum(w)`.
#[allow(clippy::too_many_arguments)]
pub fn log_conditional_base_weight(
    u: f64,
    k_idx: usize,
    w: &[f64],
    j: &WeightMatrix,
    alpha0: f64,
    alpha: f64,
    gamma: f64,
    initial_state: usize,
) -> f64 {
    let wk = u.exp();
    if !(wk > 0.0 && wk.is_finite()) {
        return f64::NEG_INFINITY;
    }
    let k = w.len();
    let weight = |i: usize| if i == k_idx { wk } else { w[i] };
    let mut total = gamma_ln_pdf(wk, alpha0 * gamma / k as f64, alpha0) + u;
    for other in 0..k {
        total += gamma_ln_pdf_log_x(j.get_log(k_idx, other), alpha * wk * weight(other), alpha);
        if !j.is_reversible() && other != k_idx {
            total += gamma_ln_pdf_log_x(j.get_log(other, k_idx), alpha * weight(other) * wk, alpha);
        }
    }
    let sum_w: f64 = (0..k).map(weight).sum();
    total + weight(initial_state).ln() - sum_w.ln()
}

/// Log posterior of the stored edge weights on log scale,
///
/// `sum_f log Gamma(J_f; alpha w_i w_j, alpha) + sum_f log J_f
///  + sum_ij C_ij log J_ij - sum_i N_i log(sum_c J_ic)`,
///
/// with `N_i` the number of transitions out of `i`. In reversible mode an
/// off-diagonal coordinate collects counts from both `(i, j)` and `(j, i)`.
#[derive(Debug, Clone)]
pub struct WeightMatrixPosterior {
    k: usize,
    reversible: bool,
    cells: Vec<(usize, usize)>,
    shapes: Vec<f64>,
    alpha: f64,
    constant: f64,
    /// Count attached to each stored coordinate.
    cell_counts: Vec<f64>,
    /// Transitions out of each state.
    out_counts: Vec<f64>,
}

impl WeightMatrixPosterior {
    pub fn new(w: &[f64], alpha: f64, counts: &TransitionCounts, reversible: bool) -> Self {
        let k = w.len();
        let cells = free_cells(k, reversible);
        let shapes: Vec<f64> = cells
            .iter()
            .map(|&(a, b)| (alpha * w[a] * w[b]).max(POSITIVE_FLOOR))
            .collect();
        let ln_alpha = alpha.ln();
        let constant = shapes.iter().map(|&s| s * ln_alpha - ln_gamma(s)).sum();
        let cell_counts = cells
            .iter()
            .map(|&(a, b)| {
                if reversible && a != b {
                    (counts.get(a, b) + counts.get(b, a)) as f64
                } else {
                    counts.get(a, b) as f64
                }
            })
            .collect();
        let out_counts = (0..k).map(|i| counts.row_total(i) as f64).collect();
        Self {
            k,
            reversible,
            cells,
            shapes,
            alpha,
            constant,
            cell_counts,
            out_counts,
        }
    }

    pub fn dim(&self) -> usize {
        free_len(self.k, self.reversible)
    }

    /// Value and gradient at `log_j` (stored-coordinate order). Row sums
    /// are taken on log scale, so underflowed weights still compete.
    pub fn evaluate(&self, log_j: &[f64]) -> (f64, Vec<f64>) {
        let k = self.k;
        let mut row_max = vec![f64::NEG_INFINITY; k];
        for (&(a, b), &u) in self.cells.iter().zip(log_j) {
            row_max[a] = row_max[a].max(u);
            if self.reversible && a != b {
                row_max[b] = row_max[b].max(u);
            }
        }
        // Row sums scaled by exp(-row_max).
        let mut scaled_sums = vec![0.0; k];
        for (&(a, b), &u) in self.cells.iter().zip(log_j) {
            scaled_sums[a] += (u - row_max[a]).exp();
            if self.reversible && a != b {
                scaled_sums[b] += (u - row_max[b]).exp();
            }
        }
        let log_sums: Vec<f64> = row_max
            .iter()
            .zip(&scaled_sums)
            .map(|(m, s)| m + s.ln())
            .collect();
        let mut value = self.constant;
        let mut grad = Vec::with_capacity(log_j.len());
        for (f, &(a, b)) in self.cells.iter().enumerate() {
            let u = log_j[f];
            let shape = self.shapes[f];
            let e = u.exp();
            // Gamma prior on log scale with Jacobian: shape * u - alpha * e^u.
            value += shape * u - self.alpha * e + self.cell_counts[f] * u;
            let mut outflow = self.out_counts[a] * (u - log_sums[a]).exp();
            if self.reversible && a != b {
                outflow += self.out_counts[b] * (u - log_sums[b]).exp();
            }
            grad.push(shape - self.alpha * e + self.cell_counts[f] - outflow);
        }
        for (i, &n) in self.out_counts.iter().enumerate() {
            if n > 0.0 {
                value -= n * log_sums[i];
            }
        }
        (value, grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{transition_counts, StateSequence};
    use crate::prior::weight_matrix_log_density;

    #[test]
    fn zero_counts_reduce_to_prior_plus_jacobian() {
        let w = [0.6, 1.4, 0.9];
        let j = WeightMatrix::from_free(3, true, vec![0.5, 1.2, 0.3, 2.0, 0.7, 0.9]).unwrap();
        let x = StateSequence::new(vec![1], 3).unwrap();
        let counts = transition_counts(&x, 3).unwrap();
        let target = WeightMatrixPosterior::new(&w, 1.7, &counts, true);
        let log_j = j.free_log_values().to_vec();
        let (value, _) = target.evaluate(&log_j);
        let expected = weight_matrix_log_density(&j, &w, 1.7) + log_j.iter().sum::<f64>();
        assert!((value - expected).abs() < 1e-12);
    }

    #[test]
    fn single_state_gradient_is_prior_only() {
        let x = StateSequence::new(vec![0; 10], 1).unwrap();
        let counts = transition_counts(&x, 1).unwrap();
        let target = WeightMatrixPosterior::new(&[1.3], 2.0, &counts, true);
        let u = 0.4f64;
        let (_, g) = target.evaluate(&[u]);
        let shape = 2.0 * 1.3 * 1.3;
        assert!((g[0] - (shape - 2.0 * u.exp())).abs() < 1e-12);
    }

    #[test]
    fn initial_state_term_enters_base_weight_conditional() {
        let j = WeightMatrix::from_free(2, true, vec![1.0, 1.0, 1.0]).unwrap();
        let w = [1.0, 1.0];
        let a = log_conditional_base_weight(0.5, 0, &w, &j, 1.0, 1.0, 1.0, 0);
        let b = log_conditional_base_weight(0.5, 0, &w, &j, 1.0, 1.0, 1.0, 1);
        assert!((a - b - 0.5).abs() < 1e-12);
    }

    #[test]
    fn underflowed_row_keeps_its_proportions() {
        // Row 0 lies entirely below the floor but has outgoing transitions.
        let x = StateSequence::new(vec![0, 1, 0, 1, 1], 2).unwrap();
        let counts = transition_counts(&x, 2).unwrap();
        let target = WeightMatrixPosterior::new(&[1e-3, 1.0], 1.0, &counts, false);
        let log_j = [-5000.0, -4000.0, 0.2, -0.3];
        let (value, grad) = target.evaluate(&log_j);
        let shifted = [-1000.0, 0.0, 0.2, -0.3];
        let (value2, grad2) = target.evaluate(&shifted);
        assert!(value.is_finite() && grad.iter().all(|g| g.is_finite()));
        // Shifting row 0 leaves its transition probabilities alone, so only
        // the prior terms change: shape * du - alpha * d(e^u) per cell.
        assert!((grad[0] - grad2[0]).abs() < 1e-12);
        assert!((grad[1] - grad2[1] - 1.0).abs() < 1e-12);
        let expected = 1e-6 * -4000.0 + 1e-3 * -4000.0 + 1.0;
        assert!((value - value2 - expected).abs() < 1e-9);
    }
}

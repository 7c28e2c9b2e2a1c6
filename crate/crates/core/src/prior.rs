//! Finite-K symmetric hierarchical gamma process.
//!
//! Base weights `w_i ~ Gamma(alpha0 * gamma / K, alpha0)` play the role of the
//! truncated gamma-process measure `G0`; edge weights
//! `J_ij ~ Gamma(alpha * w_i * w_j, alpha)` are drawn once per unordered pair
//! in reversible mode and mirrored, or independently per ordered pair in
//! non-reversible mode. Row-normalising `J` gives the transition matrix.
//!
//! All gamma distributions are shape-rate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShgpError};
use crate::stats::{
    gamma_ln_pdf, gamma_ln_pdf_log_x, sample_gamma, sample_log_gamma, POSITIVE_FLOOR,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Concentration of the base gamma process.
    pub alpha0: f64,
    /// Concentration of the edge-weight gamma process.
    pub alpha: f64,
    /// Total mass of the base measure.
    pub gamma: f64,
    /// Truncation level.
    pub k: usize,
    /// Shape and rate of the gamma hyperprior on `alpha0`.
    pub s0: f64,
    pub r0: f64,
    /// Shape and rate of the gamma hyperprior on `alpha`.
    pub s: f64,
    pub r: f64,
    /// Symmetric edge weights when true.
    pub reversible: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            alpha0: 1.0,
            alpha: 1.0,
            gamma: 1.0,
            k: 20,
            s0: 1.0,
            r0: 1.0,
            s: 1.0,
            r: 1.0,
            reversible: true,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let reals = [
            ("alpha0", self.alpha0),
            ("alpha", self.alpha),
            ("gamma", self.gamma),
            ("s0", self.s0),
            ("r0", self.r0),
            ("s", self.s),
            ("r", self.r),
        ];
        for (name, v) in reals {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ShgpError::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.k == 0 {
            return Err(ShgpError::InvalidParameter("K must be at least 1".into()));
        }
        Ok(())
    }

    /// Shape of each base weight, `alpha0 * gamma / K`.
    pub fn base_shape(&self) -> f64 {
        self.alpha0 * self.gamma / self.k as f64
    }
}

/// Atom weights of the truncated base measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BaseWeights(Vec<f64>);

impl BaseWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(ShgpError::InvalidParameter("no base weights".into()));
        }
        if let Some(bad) = w.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(ShgpError::InvalidParameter(format!(
                "base weights must be positive and finite, got {bad}"
            )));
        }
        Ok(Self(w))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// `w / sum(w)`, the initial-state distribution.
    pub fn normalized(&self) -> Vec<f64> {
        let total = self.total();
        self.0.iter().map(|w| w / total).collect()
    }
}

impl TryFrom<Vec<f64>> for BaseWeights {
    type Error = ShgpError;
    fn try_from(w: Vec<f64>) -> Result<Self> {
        Self::new(w)
    }
}

impl From<BaseWeights> for Vec<f64> {
    fn from(w: BaseWeights) -> Self {
        w.0
    }
}

/// Positive K x K edge-weight matrix.
///
/// In reversible mode only the upper triangle (diagonal included) is stored,
/// packed row by row; `get(i, j)` and `get(j, i)` read the same cell, so the
/// matrix is symmetric by construction. In non-reversible mode all `K^2` cells
/// are stored row-major. The stored cells are the "free" coordinates sampled by
/// the gradient-based updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeightMatrix", into = "RawWeightMatrix")]
pub struct WeightMatrix {
    k: usize,
    reversible: bool,
    values: Vec<f64>,
    /// Exact logs of the stored cells. `values` is `exp(log_values)` clamped
    /// to the positive floor, so the two differ only for underflowed cells.
    /// Transition probabilities and densities are computed from these.
    log_values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawWeightMatrix {
    k: usize,
    reversible: bool,
    values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    log_values: Option<Vec<f64>>,
}

impl TryFrom<RawWeightMatrix> for WeightMatrix {
    type Error = ShgpError;
    fn try_from(raw: RawWeightMatrix) -> Result<Self> {
        match raw.log_values {
            Some(logs) => WeightMatrix::from_log_free(raw.k, raw.reversible, logs),
            None => WeightMatrix::from_free(raw.k, raw.reversible, raw.values),
        }
    }
}

impl From<WeightMatrix> for RawWeightMatrix {
    fn from(m: WeightMatrix) -> Self {
        let exact = m
            .values
            .iter()
            .zip(&m.log_values)
            .all(|(v, l)| v.ln() == *l);
        RawWeightMatrix {
            k: m.k,
            reversible: m.reversible,
            values: m.values,
            log_values: (!exact).then_some(m.log_values),
        }
    }
}

pub fn free_len(k: usize, reversible: bool) -> usize {
    if reversible {
        k * (k + 1) / 2
    } else {
        k * k
    }
}

impl WeightMatrix {
    /// Builds a matrix from its stored coordinates.
    pub fn from_free(k: usize, reversible: bool, values: Vec<f64>) -> Result<Self> {
        if k == 0 {
            return Err(ShgpError::InvalidParameter("K must be at least 1".into()));
        }
        if values.len() != free_len(k, reversible) {
            return Err(ShgpError::Dimension(format!(
                "weight matrix with K={k} needs {} stored values, got {}",
                free_len(k, reversible),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(ShgpError::InvalidParameter(format!(
                "edge weights must be positive and finite, got {bad}"
            )));
        }
        let log_values = values.iter().map(|v| v.ln()).collect();
        Ok(Self {
            k,
            reversible,
            values,
            log_values,
        })
    }

    /// Builds a matrix from the logs of its stored coordinates. Cells whose
    /// exponential underflows keep their exact log and are floored in value.
    pub fn from_log_free(k: usize, reversible: bool, log_values: Vec<f64>) -> Result<Self> {
        if k == 0 {
            return Err(ShgpError::InvalidParameter("K must be at least 1".into()));
        }
        if log_values.len() != free_len(k, reversible) {
            return Err(ShgpError::Dimension(format!(
                "weight matrix with K={k} needs {} stored values, got {}",
                free_len(k, reversible),
                log_values.len()
            )));
        }
        if let Some(bad) = log_values.iter().find(|v| !v.is_finite()) {
            return Err(ShgpError::InvalidParameter(format!(
                "log edge weights must be finite, got {bad}"
            )));
        }
        let values = log_values
            .iter()
            .map(|l| l.exp().clamp(POSITIVE_FLOOR, f64::MAX))
            .collect();
        Ok(Self {
            k,
            reversible,
            values,
            log_values,
        })
    }

    /// Builds a matrix from dense rows. In reversible mode the rows must be
    /// exactly symmetric.
    pub fn from_rows(rows: &[Vec<f64>], reversible: bool) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(ShgpError::Dimension("weight matrix must be square".into()));
        }
        let values = if reversible {
            let mut v = Vec::with_capacity(free_len(k, true));
            for i in 0..k {
                for j in i..k {
                    if rows[i][j] != rows[j][i] {
                        return Err(ShgpError::InvalidParameter(format!(
                            "reversible weight matrix is not symmetric at ({i}, {j})"
                        )));
                    }
                    v.push(rows[i][j]);
                }
            }
            v
        } else {
            rows.iter().flatten().copied().collect()
        };
        Self::from_free(k, reversible, values)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn is_reversible(&self) -> bool {
        self.reversible
    }

    pub fn free_values(&self) -> &[f64] {
        &self.values
    }

    pub fn free_log_values(&self) -> &[f64] {
        &self.log_values
    }

    /// Index of cell `(i, j)` in the stored coordinates.
    #[inline]
    pub fn free_index(&self, i: usize, j: usize) -> usize {
        if self.reversible {
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            a * (2 * self.k - a + 1) / 2 + (b - a)
        } else {
            i * self.k + j
        }
    }

    /// Cell `(i, j)` (row, column) for each stored coordinate, in storage order.
    pub fn free_cells(&self) -> Vec<(usize, usize)> {
        free_cells(self.k, self.reversible)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.free_index(i, j)]
    }

    #[inline]
    pub fn get_log(&self, i: usize, j: usize) -> f64 {
        self.log_values[self.free_index(i, j)]
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        (0..self.k).map(|j| self.get(i, j)).sum()
    }

    /// `log sum_c J_ic` from the exact logs.
    pub fn row_log_sum(&self, i: usize) -> f64 {
        log_sum_exp((0..self.k).map(|j| self.get_log(i, j)))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.k)
            .map(|i| (0..self.k).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// True when `J_ij == J_ji` holds exactly for every pair.
    pub fn is_symmetric(&self) -> bool {
        self.reversible
            || (0..self.k).all(|i| (i + 1..self.k).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Multiplies every entry by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            k: self.k,
            reversible: self.reversible,
            values: self
                .values
                .iter()
                .map(|v| (v * c).clamp(POSITIVE_FLOOR, f64::MAX))
                .collect(),
            log_values: self.log_values.iter().map(|l| l + c.ln()).collect(),
        }
    }
}

pub fn free_cells(k: usize, reversible: bool) -> Vec<(usize, usize)> {
    if reversible {
        (0..k).flat_map(|i| (i..k).map(move |j| (i, j))).collect()
    } else {
        (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).collect()
    }
}

/// Row-stochastic K x K matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    k: usize,
    p: Vec<f64>,
}

impl TransitionMatrix {
    /// Wraps a row-major matrix, checking each row sums to one.
    pub fn new(k: usize, p: Vec<f64>) -> Result<Self> {
        if p.len() != k * k {
            return Err(ShgpError::Dimension(format!(
                "transition matrix with K={k} needs {} entries",
                k * k
            )));
        }
        for (i, row) in p.chunks(k).enumerate() {
            let s: f64 = row.iter().sum();
            if row.iter().any(|v| !(*v >= 0.0)) || (s - 1.0).abs() > 1e-9 {
                return Err(ShgpError::InvalidParameter(format!(
                    "row {i} of transition matrix is not a probability vector"
                )));
            }
        }
        Ok(Self { k, p })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.k + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.p[i * self.k..(i + 1) * self.k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    /// Every entry strictly positive: the chain is then irreducible and
    /// aperiodic (every state reachable from every other in one step), and on
    /// a finite state space also positive recurrent.
    pub fn is_strictly_positive(&self) -> bool {
        self.p.iter().all(|&v| v > 0.0)
    }
}

pub fn sample_base_weights<R: Rng + ?Sized>(h: &Hyperparams, rng: &mut R) -> Result<BaseWeights> {
    h.validate()?;
    let shape = h.base_shape();
    BaseWeights::new(
        (0..h.k)
            .map(|_| sample_gamma(rng, shape, h.alpha0))
            .collect(),
    )
}

pub fn sample_weight_matrix<R: Rng + ?Sized>(
    w: &BaseWeights,
    h: &Hyperparams,
    rng: &mut R,
) -> Result<WeightMatrix> {
    let k = w.len();
    let ws = w.as_slice();
    let log_values = free_cells(k, h.reversible)
        .into_iter()
        .map(|(i, j)| sample_log_gamma(rng, h.alpha * ws[i] * ws[j], h.alpha))
        .collect();
    WeightMatrix::from_log_free(k, h.reversible, log_values)
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `P_ij = J_ij / sum_k J_ik`, computed on log scale so that rows whose
/// weights all underflow keep their exact proportions.
pub fn normalize_rows(j: &WeightMatrix) -> Result<TransitionMatrix> {
    let k = j.k();
    let mut p = Vec::with_capacity(k * k);
    for i in 0..k {
        let total = j.row_log_sum(i);
        if !total.is_finite() {
            return Err(ShgpError::Numerical(format!(
                "row {i} of the weight matrix has log sum {total}"
            )));
        }
        p.extend((0..k).map(|c| (j.get_log(i, c) - total).exp().max(f64::MIN_POSITIVE)));
    }
    Ok(TransitionMatrix { k, p })
}

/// `pi_i = sum_k J_ik / sum_lk J_lk`. This is the invariant distribution of
/// `normalize_rows(J)` whenever `J` is symmetric.
pub fn stationary_distribution(j: &WeightMatrix) -> Vec<f64> {
    let sums: Vec<f64> = (0..j.k()).map(|i| j.row_log_sum(i)).collect();
    let total = log_sum_exp(sums.iter().copied());
    sums.into_iter().map(|s| (s - total).exp()).collect()
}

pub fn log_prior_base_weights(w: &BaseWeights, h: &Hyperparams) -> f64 {
    base_weights_log_density(w.as_slice(), h.alpha0, h.gamma)
}

/// `sum_i log Gamma(w_i; alpha0 * gamma / K, alpha0)` over a raw slice.
pub fn base_weights_log_density(w: &[f64], alpha0: f64, gamma: f64) -> f64 {
    let shape = alpha0 * gamma / w.len() as f64;
    w.iter().map(|&x| gamma_ln_pdf(x, shape, alpha0)).sum()
}

pub fn log_prior_weight_matrix(j: &WeightMatrix, w: &BaseWeights, h: &Hyperparams) -> f64 {
    weight_matrix_log_density(j, w.as_slice(), h.alpha)
}

/// `sum log Gamma(J_ij; alpha w_i w_j, alpha)` over the stored cells, so each
/// symmetric pair is counted once in reversible mode. Evaluated at the exact
/// logs, so underflowed cells keep their true density.
pub fn weight_matrix_log_density(j: &WeightMatrix, w: &[f64], alpha: f64) -> f64 {
    j.free_cells()
        .into_iter()
        .zip(j.free_log_values())
        .map(|((a, b), &l)| gamma_ln_pdf_log_x(l, alpha * w[a] * w[b], alpha))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_test, mean, variance};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ContinuousCDF, Gamma};
    use statrs::function::gamma::ln_gamma;

    fn hp(alpha0: f64, gamma: f64, k: usize) -> Hyperparams {
        Hyperparams {
            alpha0,
            gamma,
            k,
            ..Default::default()
        }
    }

    #[test]
    fn unit_gamma_base_weights_have_unit_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = hp(1.0, 5.0, 5);
        let draws: Vec<f64> = (0..20_000)
            .flat_map(|_| sample_base_weights(&h, &mut rng).unwrap().0)
            .collect();
        assert_eq!(draws.len(), 100_000);
        assert!((mean(&draws) - 1.0).abs() < 0.02);
    }

    #[test]
    fn single_weight_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = hp(2.0, 1.0, 1);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| sample_base_weights(&h, &mut rng).unwrap().0[0])
            .collect();
        assert!((mean(&draws) - 1.0).abs() < 0.01);
        assert!((variance(&draws) - 0.5).abs() < 0.02);
    }

    #[test]
    fn summed_weights_follow_total_mass_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in [1, 4, 16] {
            let h = hp(2.5, 1.0, k);
            let sums: Vec<f64> = (0..10_000)
                .map(|_| sample_base_weights(&h, &mut rng).unwrap().total())
                .collect();
            let oracle = Gamma::new(2.5, 2.5).unwrap();
            let (_, p) = ks_test(&sums, |x| oracle.cdf(x));
            assert!(p > 0.01, "K={k}: p={p}");
        }
    }

    #[test]
    fn reversible_matrix_is_exactly_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = hp(1.0, 1.0, 7);
        let w = sample_base_weights(&h, &mut rng).unwrap();
        let j = sample_weight_matrix(&w, &h, &mut rng).unwrap();
        assert_eq!(j.free_values().len(), 28);
        let rows = j.to_rows();
        for i in 0..7 {
            for c in 0..7 {
                assert_eq!(rows[i][c] - rows[c][i], 0.0);
            }
        }
        let h = Hyperparams {
            reversible: false,
            ..h
        };
        let j = sample_weight_matrix(&w, &h, &mut rng).unwrap();
        assert_eq!(j.free_values().len(), 49);
        assert!(!j.is_symmetric());
    }

    #[test]
    fn single_state_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = hp(1.0, 1.0, 1);
        let w = BaseWeights::new(vec![1.0]).unwrap();
        let j = sample_weight_matrix(&w, &h, &mut rng).unwrap();
        assert_eq!(j.k(), 1);
        let p = normalize_rows(&j).unwrap();
        assert_eq!(p.as_slice(), &[1.0]);
    }

    #[test]
    fn off_diagonal_edge_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = Hyperparams {
            alpha: 3.0,
            k: 2,
            ..Default::default()
        };
        let w = BaseWeights::new(vec![1.0, 2.0]).unwrap();
        let draws: Vec<f64> = (0..100_000)
            .map(|_| sample_weight_matrix(&w, &h, &mut rng).unwrap().get(0, 1))
            .collect();
        // Gamma(6, 3): mean 2, sd sqrt(6)/3.
        let se = (6.0f64).sqrt() / 3.0 / (draws.len() as f64).sqrt();
        assert!((mean(&draws) - 2.0).abs() < 4.0 * se);
    }

    #[test]
    fn normalize_rows_examples() {
        let j = WeightMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]], true).unwrap();
        assert_eq!(
            normalize_rows(&j).unwrap().as_slice(),
            &[0.5, 0.5, 0.5, 0.5]
        );
        let j = WeightMatrix::from_rows(&[vec![2.0, 6.0], vec![6.0, 4.0]], true).unwrap();
        let p = normalize_rows(&j).unwrap();
        let expected = [0.25, 0.75, 0.6, 0.4];
        for (a, b) in p.as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let j = WeightMatrix::from_rows(&[vec![3.7]], true).unwrap();
        assert_eq!(normalize_rows(&j).unwrap().as_slice(), &[1.0]);
    }

    #[test]
    fn normalize_rows_survives_overflowing_and_underflowed_rows() {
        let j =
            WeightMatrix::from_rows(&[vec![f64::MAX, f64::MAX], vec![1.0, 1.0]], false).unwrap();
        let p = normalize_rows(&j).unwrap();
        assert!(p.as_slice().iter().all(|v| (v - 0.5).abs() < 1e-12));
        let j = WeightMatrix::from_log_free(2, false, vec![-3000.0, -3000.0 + 3f64.ln(), 0.0, 0.0])
            .unwrap();
        let p = normalize_rows(&j).unwrap();
        assert!((p.get(0, 1) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn invalid_construction_is_rejected() {
        assert!(BaseWeights::new(vec![1.0, 0.0]).is_err());
        assert!(WeightMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 1.0]], true).is_err());
        assert!(WeightMatrix::from_free(2, true, vec![1.0, 2.0]).is_err());
        assert!(WeightMatrix::from_free(2, true, vec![1.0, -2.0, 1.0]).is_err());
        assert!(Hyperparams {
            k: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(Hyperparams {
            alpha: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    /// Power-iteration oracle for the left eigenvector of `P`.
    fn power_stationary(p: &TransitionMatrix) -> Vec<f64> {
        let k = p.k();
        let mut v = vec![1.0 / k as f64; k];
        for _ in 0..10_000 {
            v = (0..k)
                .map(|j| (0..k).map(|i| v[i] * p.get(i, j)).sum())
                .collect();
        }
        v
    }

    #[test]
    fn stationary_examples() {
        let j = WeightMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]], true).unwrap();
        assert_eq!(stationary_distribution(&j), vec![0.5, 0.5]);
        let j = WeightMatrix::from_rows(&[vec![2.0, 6.0], vec![6.0, 4.0]], true).unwrap();
        let pi = stationary_distribution(&j);
        assert!((pi[0] - 8.0 / 18.0).abs() < 1e-15);
        assert!((pi[1] - 10.0 / 18.0).abs() < 1e-15);
        let oracle = power_stationary(&normalize_rows(&j).unwrap());
        for (a, b) in pi.iter().zip(oracle) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn stationary_is_invariant_for_symmetric_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = hp(3.0, 6.0, 6);
        for _ in 0..50 {
            let w = sample_base_weights(&h, &mut rng).unwrap();
            let j = sample_weight_matrix(&w, &h, &mut rng).unwrap();
            let p = normalize_rows(&j).unwrap();
            let pi = stationary_distribution(&j);
            for c in 0..6 {
                let pi_p: f64 = (0..6).map(|i| pi[i] * p.get(i, c)).sum();
                assert!((pi_p - pi[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn log_prior_examples() {
        let h = hp(1.0, 1.0, 1);
        let w = BaseWeights::new(vec![1.0]).unwrap();
        assert!((log_prior_base_weights(&w, &h) + 1.0).abs() < 1e-14);

        let gamma_lpdf =
            |x: f64, a: f64, b: f64| a * b.ln() - ln_gamma(a) + (a - 1.0) * x.ln() - b * x;
        let h = Hyperparams {
            alpha: 1.5,
            k: 2,
            ..Default::default()
        };
        let w = BaseWeights::new(vec![0.7, 1.3]).unwrap();
        let j = WeightMatrix::from_rows(&[vec![0.4, 2.0], vec![2.0, 0.9]], true).unwrap();
        let three_terms = gamma_lpdf(0.4, 1.5 * 0.49, 1.5)
            + gamma_lpdf(2.0, 1.5 * 0.91, 1.5)
            + gamma_lpdf(0.9, 1.5 * 1.69, 1.5);
        let lp = log_prior_weight_matrix(&j, &w, &h);
        assert!((lp - three_terms).abs() < 1e-12);
        let full: f64 = (0..2)
            .flat_map(|a| (0..2).map(move |b| (a, b)))
            .map(|(a, b)| gamma_lpdf(j.get(a, b), 1.5 * w.0[a] * w.0[b], 1.5))
            .sum();
        assert!(
            (lp - full).abs() > 1e-3,
            "full-matrix sum double counts the pair"
        );

        let h2 = Hyperparams {
            alpha: 3.0,
            ..h.clone()
        };
        let doubled = gamma_lpdf(0.4, 3.0 * 0.49, 3.0)
            + gamma_lpdf(2.0, 3.0 * 0.91, 3.0)
            + gamma_lpdf(0.9, 3.0 * 1.69, 3.0);
        let delta = log_prior_weight_matrix(&j, &w, &h2) - lp;
        assert!((delta - (doubled - three_terms)).abs() < 1e-12);
    }

    #[test]
    fn log_prior_is_neg_inf_off_support() {
        let j = WeightMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]], true).unwrap();
        assert!(weight_matrix_log_density(&j, &[1.0, 1.0], 1.0).is_finite());
        assert_eq!(
            base_weights_log_density(&[1.0, -1.0], 1.0, 1.0),
            f64::NEG_INFINITY
        );
        assert_eq!(
            base_weights_log_density(&[1.0, 0.0], 1.0, 1.0),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn underflowed_cells_keep_their_log() {
        let logs = vec![-2000.0, 0.5, -1.0, 0.0];
        let j = WeightMatrix::from_log_free(2, false, logs.clone()).unwrap();
        assert_eq!(j.get(0, 0), POSITIVE_FLOOR);
        assert_eq!(j.get_log(0, 0), -2000.0);
        let back: WeightMatrix = serde_json::from_str(&serde_json::to_string(&j).unwrap()).unwrap();
        assert_eq!(back.free_log_values(), &logs[..]);
        assert_eq!(back, j);

        // Plain matrices serialise without the log field.
        let plain = WeightMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 3.0]], true).unwrap();
        assert!(!serde_json::to_string(&plain)
            .unwrap()
            .contains("log_values"));
        assert!(WeightMatrix::from_log_free(1, true, vec![f64::NEG_INFINITY]).is_err());
    }
}

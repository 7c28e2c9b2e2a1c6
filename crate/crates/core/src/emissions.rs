//! Observation models and their conjugate posterior updates.
//!
//! * Poisson counts, one rate per (dimension, state), Gamma prior.
//! * Gaussian reals, one (mean, sd) per (dimension, state), Normal-Inverse-Gamma prior.
//! * Multinomial symbols (single dimension), one probability vector per state,
//!   Dirichlet prior.
//!
//! Masked cells carry no evidence: they contribute zero to the log-likelihood
//! and are skipped by the sufficient statistics.

use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::chain::StateSequence;
use crate::error::{Result, ShgpError};
use crate::stats::{
    normal_ln_pdf, poisson_ln_pmf, sample_categorical, sample_gamma, sample_normal,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "family")]
pub enum Family {
    Poisson,
    Gaussian,
    Multinomial { symbols: usize },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Poisson => "poisson",
            Family::Gaussian => "gaussian",
            Family::Multinomial { .. } => "multinomial",
        }
    }
}

/// T x L observations stored row-major, with a same-shape mask where `true`
/// marks a held-out or missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix {
    t: usize,
    l: usize,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl ObservationMatrix {
    pub fn new(t: usize, l: usize, values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if t == 0 || l == 0 {
            return Err(ShgpError::Dimension("observation matrix is empty".into()));
        }
        if values.len() != t * l || mask.len() != t * l {
            return Err(ShgpError::Dimension(format!(
                "expected {t}x{l} values and mask, got {} values and {} mask cells",
                values.len(),
                mask.len()
            )));
        }
        Ok(Self { t, l, values, mask })
    }

    pub fn unmasked(t: usize, l: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(t, l, values, vec![false; t * l])
    }

    pub fn len(&self) -> usize {
        self.t
    }

    pub fn is_empty(&self) -> bool {
        self.t == 0
    }

    pub fn dims(&self) -> usize {
        self.l
    }

    #[inline]
    pub fn value(&self, t: usize, l: usize) -> f64 {
        self.values[t * self.l + l]
    }

    #[inline]
    pub fn is_masked(&self, t: usize, l: usize) -> bool {
        self.mask[t * self.l + l]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn with_mask(&self, mask: Vec<bool>) -> Result<Self> {
        Self::new(self.t, self.l, self.values.clone(), mask)
    }

    /// Checks the observed values lie in the family's support.
    pub fn validate(&self, family: Family) -> Result<()> {
        if let Family::Multinomial { .. } = family {
            if self.l != 1 {
                return Err(ShgpError::Dimension(
                    "multinomial observations must have a single column".into(),
                ));
            }
        }
        for t in 0..self.t {
            for l in 0..self.l {
                if self.is_masked(t, l) {
                    continue;
                }
                let y = self.value(t, l);
                let ok = match family {
                    Family::Poisson => y >= 0.0 && y.fract() == 0.0 && y.is_finite(),
                    Family::Gaussian => y.is_finite(),
                    Family::Multinomial { symbols } => {
                        y >= 0.0 && y.fract() == 0.0 && (y as usize) < symbols
                    }
                };
                if !ok {
                    return Err(ShgpError::InvalidParameter(format!(
                        "observation {y} at (t={t}, l={l}) is outside the {} support",
                        family.name()
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionPriors {
    /// Gamma shape and rate on each Poisson rate.
    pub rate_shape: f64,
    pub rate_rate: f64,
    /// Normal-Inverse-Gamma on each Gaussian (mean, variance).
    pub mean0: f64,
    pub kappa0: f64,
    pub var_shape: f64,
    pub var_scale: f64,
    /// Symmetric Dirichlet concentration per symbol.
    pub beta: f64,
}

impl Default for EmissionPriors {
    fn default() -> Self {
        Self {
            rate_shape: 1.0,
            rate_rate: 1.0,
            mean0: 0.0,
            kappa0: 0.01,
            var_shape: 2.0,
            var_scale: 1.0,
            beta: 1.0,
        }
    }
}

impl EmissionPriors {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rate_shape", self.rate_shape),
            ("rate_rate", self.rate_rate),
            ("kappa0", self.kappa0),
            ("var_shape", self.var_shape),
            ("var_scale", self.var_scale),
            ("beta", self.beta),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ShgpError::InvalidParameter(format!(
                    "emission prior {name} must be positive, got {v}"
                )));
            }
        }
        if !self.mean0.is_finite() {
            return Err(ShgpError::InvalidParameter(
                "emission prior mean0 must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Per-state observation parameters. Poisson and Gaussian parameters are
/// L x K row-major (dimension-major); multinomial probabilities are K x V.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "family")]
pub enum EmissionParams {
    Poisson {
        l: usize,
        k: usize,
        rates: Vec<f64>,
    },
    Gaussian {
        l: usize,
        k: usize,
        mean: Vec<f64>,
        sd: Vec<f64>,
    },
    Multinomial {
        k: usize,
        symbols: usize,
        probs: Vec<f64>,
    },
}

impl EmissionParams {
    pub fn family(&self) -> Family {
        match self {
            EmissionParams::Poisson { .. } => Family::Poisson,
            EmissionParams::Gaussian { .. } => Family::Gaussian,
            EmissionParams::Multinomial { symbols, .. } => {
                Family::Multinomial { symbols: *symbols }
            }
        }
    }

    pub fn k(&self) -> usize {
        match self {
            EmissionParams::Poisson { k, .. }
            | EmissionParams::Gaussian { k, .. }
            | EmissionParams::Multinomial { k, .. } => *k,
        }
    }

    pub fn dims(&self) -> usize {
        match self {
            EmissionParams::Poisson { l, .. } | EmissionParams::Gaussian { l, .. } => *l,
            EmissionParams::Multinomial { .. } => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |xs: &[f64], what: &str| -> Result<()> {
            if xs.iter().all(|v| *v > 0.0 && v.is_finite()) {
                Ok(())
            } else {
                Err(ShgpError::InvalidParameter(format!(
                    "{what} must be positive"
                )))
            }
        };
        match self {
            EmissionParams::Poisson { l, k, rates } => {
                if rates.len() != l * k {
                    return Err(ShgpError::Dimension("rate matrix shape".into()));
                }
                positive(rates, "Poisson rates")
            }
            EmissionParams::Gaussian { l, k, mean, sd } => {
                if mean.len() != l * k || sd.len() != l * k {
                    return Err(ShgpError::Dimension("Gaussian parameter shape".into()));
                }
                if mean.iter().any(|m| !m.is_finite()) {
                    return Err(ShgpError::InvalidParameter(
                        "Gaussian means must be finite".into(),
                    ));
                }
                positive(sd, "Gaussian standard deviations")
            }
            EmissionParams::Multinomial { k, symbols, probs } => {
                if probs.len() != k * symbols {
                    return Err(ShgpError::Dimension("probability matrix shape".into()));
                }
                for row in probs.chunks(*symbols) {
                    if row.iter().any(|p| !(*p >= 0.0))
                        || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9
                    {
                        return Err(ShgpError::InvalidParameter(
                            "multinomial rows must be probability vectors".into(),
                        ));
                    }
                }
                Ok(())
            }
        }
    }

    /// `log f(y | theta_state)` for dimension `l`.
    #[inline]
    pub fn log_density(&self, y: f64, l: usize, state: usize) -> f64 {
        match self {
            EmissionParams::Poisson { k, rates, .. } => poisson_ln_pmf(y, rates[l * k + state]),
            EmissionParams::Gaussian { k, mean, sd, .. } => {
                normal_ln_pdf(y, mean[l * k + state], sd[l * k + state])
            }
            EmissionParams::Multinomial { symbols, probs, .. } => {
                if y >= 0.0 && y.fract() == 0.0 && (y as usize) < *symbols {
                    probs[state * symbols + y as usize].ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// Mean and variance of `y` in dimension `l` given the state. For the
    /// multinomial family these are moments of the symbol index.
    pub fn moments(&self, l: usize, state: usize) -> (f64, f64) {
        match self {
            EmissionParams::Poisson { k, rates, .. } => {
                let r = rates[l * k + state];
                (r, r)
            }
            EmissionParams::Gaussian { k, mean, sd, .. } => {
                (mean[l * k + state], sd[l * k + state].powi(2))
            }
            EmissionParams::Multinomial { symbols, probs, .. } => {
                let row = &probs[state * symbols..(state + 1) * symbols];
                let m: f64 = row.iter().enumerate().map(|(v, p)| v as f64 * p).sum();
                let m2: f64 = row
                    .iter()
                    .enumerate()
                    .map(|(v, p)| (v * v) as f64 * p)
                    .sum();
                (m, m2 - m * m)
            }
        }
    }

    /// Copy of `self` with the parameters of `state` taken from `other`.
    pub fn with_state_from(&self, other: &Self, state: usize) -> Self {
        let mut out = self.clone();
        match (&mut out, other) {
            (
                EmissionParams::Poisson { l, k, rates },
                EmissionParams::Poisson { rates: src, .. },
            ) => {
                for d in 0..*l {
                    rates[d * *k + state] = src[d * *k + state];
                }
            }
            (
                EmissionParams::Gaussian { l, k, mean, sd },
                EmissionParams::Gaussian {
                    mean: m_src,
                    sd: s_src,
                    ..
                },
            ) => {
                for d in 0..*l {
                    mean[d * *k + state] = m_src[d * *k + state];
                    sd[d * *k + state] = s_src[d * *k + state];
                }
            }
            (
                EmissionParams::Multinomial { symbols, probs, .. },
                EmissionParams::Multinomial { probs: src, .. },
            ) => {
                let range = state * *symbols..(state + 1) * *symbols;
                probs[range.clone()].copy_from_slice(&src[range]);
            }
            _ => panic!("with_state_from: emission families differ"),
        }
        out
    }

    /// Applies a state relabeling: new state `perm[s]` takes old state `s`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let remap = |xs: &[f64], l: usize, k: usize| {
            let mut out = vec![0.0; xs.len()];
            for d in 0..l {
                for s in 0..k {
                    out[d * k + perm[s]] = xs[d * k + s];
                }
            }
            out
        };
        match self {
            EmissionParams::Poisson { l, k, rates } => EmissionParams::Poisson {
                l: *l,
                k: *k,
                rates: remap(rates, *l, *k),
            },
            EmissionParams::Gaussian { l, k, mean, sd } => EmissionParams::Gaussian {
                l: *l,
                k: *k,
                mean: remap(mean, *l, *k),
                sd: remap(sd, *l, *k),
            },
            EmissionParams::Multinomial { k, symbols, probs } => {
                let mut out = vec![0.0; probs.len()];
                for s in 0..*k {
                    out[perm[s] * symbols..(perm[s] + 1) * symbols]
                        .copy_from_slice(&probs[s * symbols..(s + 1) * symbols]);
                }
                EmissionParams::Multinomial {
                    k: *k,
                    symbols: *symbols,
                    probs: out,
                }
            }
        }
    }
}

/// T x K matrix of per-state observation log-likelihoods.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLikelihoodMatrix {
    t: usize,
    k: usize,
    values: Vec<f64>,
}

impl LogLikelihoodMatrix {
    pub fn new(t: usize, k: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != t * k || t == 0 || k == 0 {
            return Err(ShgpError::Dimension(format!(
                "log-likelihood matrix {t}x{k} with {} entries",
                values.len()
            )));
        }
        Ok(Self { t, k, values })
    }

    pub fn len(&self) -> usize {
        self.t
    }

    pub fn is_empty(&self) -> bool {
        self.t == 0
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.k..(t + 1) * self.k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

pub fn log_likelihood_matrix(
    y: &ObservationMatrix,
    params: &EmissionParams,
) -> Result<LogLikelihoodMatrix> {
    if params.dims() != y.dims() {
        return Err(ShgpError::Dimension(format!(
            "{} observation columns but emission parameters for {}",
            y.dims(),
            params.dims()
        )));
    }
    let k = params.k();
    let mut values = vec![0.0; y.len() * k];
    for t in 0..y.len() {
        let row = &mut values[t * k..(t + 1) * k];
        for l in 0..y.dims() {
            if y.is_masked(t, l) {
                continue;
            }
            let v = y.value(t, l);
            for (s, cell) in row.iter_mut().enumerate() {
                *cell += params.log_density(v, l, s);
            }
        }
    }
    LogLikelihoodMatrix::new(y.len(), k, values)
}

/// Observed-cell sufficient statistics per (dimension, state) or, for the
/// multinomial family, per (state, symbol).
#[derive(Debug, Clone, PartialEq)]
pub enum SufficientStats {
    Poisson {
        k: usize,
        count: Vec<u64>,
        sum: Vec<f64>,
    },
    Gaussian {
        k: usize,
        count: Vec<u64>,
        mean: Vec<f64>,
        /// Sum of squared deviations from the cell mean.
        sq_dev: Vec<f64>,
    },
    Multinomial {
        symbols: usize,
        counts: Vec<u64>,
    },
}

pub fn sufficient_statistics(
    y: &ObservationMatrix,
    x: &StateSequence,
    family: Family,
    k: usize,
) -> Result<SufficientStats> {
    if x.len() != y.len() {
        return Err(ShgpError::Dimension(format!(
            "{} states for {} observations",
            x.len(),
            y.len()
        )));
    }
    if x.max_state() >= k {
        return Err(ShgpError::Dimension(format!(
            "state {} out of range",
            x.max_state()
        )));
    }
    let l_dims = y.dims();
    let cells = || {
        (0..y.len()).flat_map(move |t| {
            (0..l_dims).filter_map(move |l| (!y.is_masked(t, l)).then_some((t, l)))
        })
    };
    let xs = x.as_slice();
    Ok(match family {
        Family::Poisson => {
            let mut count = vec![0u64; l_dims * k];
            let mut sum = vec![0.0; l_dims * k];
            for (t, l) in cells() {
                let idx = l * k + xs[t];
                count[idx] += 1;
                sum[idx] += y.value(t, l);
            }
            SufficientStats::Poisson { k, count, sum }
        }
        Family::Gaussian => {
            // Welford accumulation, one cell at a time in time order.
            let mut count = vec![0u64; l_dims * k];
            let mut mean = vec![0.0; l_dims * k];
            let mut sq_dev = vec![0.0; l_dims * k];
            for (t, l) in cells() {
                let idx = l * k + xs[t];
                let v = y.value(t, l);
                count[idx] += 1;
                let delta = v - mean[idx];
                mean[idx] += delta / count[idx] as f64;
                sq_dev[idx] += delta * (v - mean[idx]);
            }
            SufficientStats::Gaussian {
                k,
                count,
                mean,
                sq_dev,
            }
        }
        Family::Multinomial { symbols } => {
            let mut counts = vec![0u64; k * symbols];
            for (t, l) in cells() {
                let v = y.value(t, l);
                if !(v >= 0.0 && (v as usize) < symbols) {
                    return Err(ShgpError::InvalidParameter(format!(
                        "symbol {v} at t={t} outside 0..{symbols}"
                    )));
                }
                counts[xs[t] * symbols + v as usize] += 1;
            }
            SufficientStats::Multinomial { symbols, counts }
        }
    })
}

pub fn sample_emission_prior<R: Rng + ?Sized>(
    family: Family,
    l: usize,
    k: usize,
    priors: &EmissionPriors,
    rng: &mut R,
) -> EmissionParams {
    match family {
        Family::Poisson => EmissionParams::Poisson {
            l,
            k,
            rates: (0..l * k)
                .map(|_| sample_gamma(rng, priors.rate_shape, priors.rate_rate))
                .collect(),
        },
        Family::Gaussian => {
            let (mean, sd) = (0..l * k)
                .map(|_| {
                    sample_normal_inverse_gamma(
                        rng,
                        priors.mean0,
                        priors.kappa0,
                        priors.var_shape,
                        priors.var_scale,
                    )
                })
                .unzip();
            EmissionParams::Gaussian { l, k, mean, sd }
        }
        Family::Multinomial { symbols } => {
            let beta = vec![priors.beta; symbols];
            EmissionParams::Multinomial {
                k,
                symbols,
                probs: (0..k).flat_map(|_| sample_dirichlet(rng, &beta)).collect(),
            }
        }
    }
}

/// Draws `y_t ~ f(. | theta_{x_t})` for every cell; the result is unmasked.
pub fn sample_observations<R: Rng + ?Sized>(
    params: &EmissionParams,
    x: &StateSequence,
    rng: &mut R,
) -> Result<ObservationMatrix> {
    params.validate()?;
    if x.max_state() >= params.k() {
        return Err(ShgpError::Dimension(format!(
            "state {} outside {} emission states",
            x.max_state(),
            params.k()
        )));
    }
    let l = params.dims();
    let mut values = Vec::with_capacity(x.len() * l);
    for &s in x.as_slice() {
        for d in 0..l {
            let v = match params {
                EmissionParams::Poisson { k, rates, .. } => {
                    let rate = rates[d * k + s];
                    if rate > 0.0 {
                        rand_distr::Poisson::new(rate)
                            .map_err(|e| ShgpError::Numerical(e.to_string()))?
                            .sample(rng)
                    } else {
                        0.0
                    }
                }
                EmissionParams::Gaussian { k, mean, sd, .. } => {
                    sample_normal(rng, mean[d * k + s], sd[d * k + s])
                }
                EmissionParams::Multinomial { symbols, probs, .. } => {
                    sample_categorical(rng, &probs[s * symbols..(s + 1) * symbols]) as f64
                }
            };
            values.push(v);
        }
    }
    ObservationMatrix::unmasked(x.len(), l, values)
}

/// Exact draw from the conjugate posterior of the emission parameters given
/// the state sequence. States with no observed cells draw from the prior.
pub fn sample_emission_posterior<R: Rng + ?Sized>(
    y: &ObservationMatrix,
    x: &StateSequence,
    family: Family,
    k: usize,
    priors: &EmissionPriors,
    rng: &mut R,
) -> Result<EmissionParams> {
    let stats = sufficient_statistics(y, x, family, k)?;
    let l = y.dims();
    Ok(match stats {
        SufficientStats::Poisson { count, sum, .. } => EmissionParams::Poisson {
            l,
            k,
            rates: count
                .iter()
                .zip(&sum)
                .map(|(&n, &s)| {
                    sample_gamma(rng, priors.rate_shape + s, priors.rate_rate + n as f64)
                })
                .collect(),
        },
        SufficientStats::Gaussian {
            count,
            mean,
            sq_dev,
            ..
        } => {
            let (means, sds) = (0..l * k)
                .map(|i| {
                    let post = nig_posterior(priors, count[i], mean[i], sq_dev[i]);
                    sample_normal_inverse_gamma(rng, post.0, post.1, post.2, post.3)
                })
                .unzip();
            EmissionParams::Gaussian {
                l,
                k,
                mean: means,
                sd: sds,
            }
        }
        SufficientStats::Multinomial { symbols, counts } => {
            let mut probs = Vec::with_capacity(k * symbols);
            for s in 0..k {
                let conc: Vec<f64> = counts[s * symbols..(s + 1) * symbols]
                    .iter()
                    .map(|&c| priors.beta + c as f64)
                    .collect();
                probs.extend(sample_dirichlet(rng, &conc));
            }
            EmissionParams::Multinomial { k, symbols, probs }
        }
    })
}

/// Normal-Inverse-Gamma posterior hyperparameters `(m_n, kappa_n, a_n, b_n)`
/// after `n` observations with the given mean and squared deviations.
pub fn nig_posterior(
    priors: &EmissionPriors,
    n: u64,
    mean: f64,
    sq_dev: f64,
) -> (f64, f64, f64, f64) {
    let nf = n as f64;
    let kappa_n = priors.kappa0 + nf;
    if n == 0 {
        return (
            priors.mean0,
            priors.kappa0,
            priors.var_shape,
            priors.var_scale,
        );
    }
    let m_n = (priors.kappa0 * priors.mean0 + nf * mean) / kappa_n;
    let a_n = priors.var_shape + 0.5 * nf;
    let b_n = priors.var_scale
        + 0.5 * sq_dev
        + 0.5 * priors.kappa0 * nf * (mean - priors.mean0).powi(2) / kappa_n;
    (m_n, kappa_n, a_n, b_n)
}

/// `sigma^2 ~ InvGamma(a, b)`, `mu | sigma^2 ~ N(m, sigma^2 / kappa)`;
/// returns `(mu, sigma)`.
fn sample_normal_inverse_gamma<R: Rng + ?Sized>(
    rng: &mut R,
    m: f64,
    kappa: f64,
    a: f64,
    b: f64,
) -> (f64, f64) {
    let var = 1.0 / sample_gamma(rng, a, b);
    let mu = sample_normal(rng, m, (var / kappa).sqrt());
    (mu, var.sqrt())
}

fn sample_dirichlet<R: Rng + ?Sized>(rng: &mut R, conc: &[f64]) -> Vec<f64> {
    let g: Vec<f64> = conc.iter().map(|&a| sample_gamma(rng, a, 1.0)).collect();
    let total: f64 = g.iter().sum();
    g.into_iter().map(|v| v / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_test, mean, LN_SQRT_2PI};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ContinuousCDF, Gamma};

    #[test]
    fn fully_masked_row_has_no_evidence() {
        let y = ObservationMatrix::new(
            2,
            2,
            vec![3.0, 1.0, 4.0, 2.0],
            vec![true, true, false, false],
        )
        .unwrap();
        let params = EmissionParams::Poisson {
            l: 2,
            k: 3,
            rates: vec![1.0, 2.0, 3.0, 0.5, 0.7, 9.0],
        };
        let ll = log_likelihood_matrix(&y, &params).unwrap();
        assert_eq!(ll.row(0), &[0.0, 0.0, 0.0]);
        assert!(ll.row(1).iter().all(|v| *v < 0.0));
    }

    #[test]
    fn poisson_and_gaussian_cells() {
        let y = ObservationMatrix::unmasked(1, 1, vec![3.0]).unwrap();
        let params = EmissionParams::Poisson {
            l: 1,
            k: 1,
            rates: vec![2.0],
        };
        let ll = log_likelihood_matrix(&y, &params).unwrap();
        assert!((ll.row(0)[0] + 1.7123).abs() < 1e-4);

        let y = ObservationMatrix::unmasked(1, 1, vec![0.3]).unwrap();
        let params = EmissionParams::Gaussian {
            l: 1,
            k: 2,
            mean: vec![0.3, 5.0],
            sd: vec![1.0, 1.0],
        };
        let ll = log_likelihood_matrix(&y, &params).unwrap();
        assert!((ll.row(0)[0] + LN_SQRT_2PI).abs() < 1e-15);
    }

    #[test]
    fn negative_count_is_outside_support() {
        let y = ObservationMatrix::unmasked(1, 1, vec![-1.0]).unwrap();
        let params = EmissionParams::Poisson {
            l: 1,
            k: 2,
            rates: vec![1.0, 2.0],
        };
        let ll = log_likelihood_matrix(&y, &params).unwrap();
        assert!(ll.row(0).iter().all(|v| *v == f64::NEG_INFINITY));
        assert!(y.validate(Family::Poisson).is_err());
    }

    #[test]
    fn all_masked_posterior_is_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let priors = EmissionPriors {
            rate_shape: 2.0,
            rate_rate: 3.0,
            ..Default::default()
        };
        let y = ObservationMatrix::new(4, 1, vec![100.0; 4], vec![true; 4]).unwrap();
        let x = StateSequence::new(vec![0; 4], 1).unwrap();
        let draws: Vec<f64> = (0..10_000)
            .map(|_| {
                match sample_emission_posterior(&y, &x, Family::Poisson, 1, &priors, &mut rng)
                    .unwrap()
                {
                    EmissionParams::Poisson { rates, .. } => rates[0],
                    _ => unreachable!(),
                }
            })
            .collect();
        let oracle = Gamma::new(2.0, 3.0).unwrap();
        let (_, p) = ks_test(&draws, |v| oracle.cdf(v));
        assert!(p > 0.01);
    }

    #[test]
    fn poisson_posterior_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let priors = EmissionPriors::default();
        let y = ObservationMatrix::unmasked(3, 1, vec![2.0, 4.0, 7.0]).unwrap();
        let x = StateSequence::new(vec![1, 1, 0], 2).unwrap();
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| {
                match sample_emission_posterior(&y, &x, Family::Poisson, 2, &priors, &mut rng)
                    .unwrap()
                {
                    EmissionParams::Poisson { rates, .. } => rates[1],
                    _ => unreachable!(),
                }
            })
            .collect();
        // Gamma(1 + 6, 1 + 2)
        let (shape, rate): (f64, f64) = (7.0, 3.0);
        let se = shape.sqrt() / rate / (n as f64).sqrt();
        assert!((mean(&draws) - shape / rate).abs() < 3.0 * se);
    }

    #[test]
    fn dirichlet_posterior_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let priors = EmissionPriors::default();
        let family = Family::Multinomial { symbols: 3 };
        let y = ObservationMatrix::unmasked(5, 1, vec![0.0, 2.0, 2.0, 1.0, 2.0]).unwrap();
        let x = StateSequence::new(vec![0; 5], 1).unwrap();
        let n = 100_000;
        let mut sums = [0.0; 3];
        for _ in 0..n {
            if let EmissionParams::Multinomial { probs, .. } =
                sample_emission_posterior(&y, &x, family, 1, &priors, &mut rng).unwrap()
            {
                for (s, p) in sums.iter_mut().zip(probs) {
                    *s += p;
                }
            }
        }
        let conc = [2.0, 2.0, 4.0];
        for (s, c) in sums.iter().zip(conc) {
            assert!((s / n as f64 - c / 8.0).abs() < 0.005);
        }
    }

    #[test]
    fn masked_values_do_not_leak() {
        let x = StateSequence::new(vec![0, 1, 1, 0], 2).unwrap();
        let mask = vec![false, true, false, false, true, false, false, false];
        let a = ObservationMatrix::new(
            4,
            2,
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
            mask.clone(),
        )
        .unwrap();
        let b = ObservationMatrix::new(4, 2, vec![1.0, -99.5, 3.0, 4.0, 1e9, 6.0, 7.0, 8.0], mask)
            .unwrap();
        for family in [Family::Poisson, Family::Gaussian] {
            assert_eq!(
                sufficient_statistics(&a, &x, family, 2).unwrap(),
                sufficient_statistics(&b, &x, family, 2).unwrap()
            );
        }
        let params = EmissionParams::Gaussian {
            l: 2,
            k: 2,
            mean: vec![0.0, 1.0, 2.0, 3.0],
            sd: vec![1.0, 2.0, 0.5, 1.5],
        };
        let la = log_likelihood_matrix(&a, &params).unwrap();
        let lb = log_likelihood_matrix(&b, &params).unwrap();
        let bits =
            |m: &LogLikelihoodMatrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&la), bits(&lb));
    }

    #[test]
    fn sampled_params_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let priors = EmissionPriors::default();
        for family in [
            Family::Poisson,
            Family::Gaussian,
            Family::Multinomial { symbols: 4 },
        ] {
            let l = if matches!(family, Family::Multinomial { .. }) {
                1
            } else {
                2
            };
            let p = sample_emission_prior(family, l, 5, &priors, &mut rng);
            p.validate().unwrap();
            assert_eq!(p.family(), family);
        }
    }

    #[test]
    fn permutation_moves_states() {
        let p = EmissionParams::Poisson {
            l: 2,
            k: 3,
            rates: vec![1.0, 2.0, 3.0, 10.0, 20.0, 30.0],
        };
        let q = p.permuted(&[2, 0, 1]);
        assert_eq!(
            q,
            EmissionParams::Poisson {
                l: 2,
                k: 3,
                rates: vec![2.0, 3.0, 1.0, 20.0, 30.0, 10.0]
            }
        );
    }
}

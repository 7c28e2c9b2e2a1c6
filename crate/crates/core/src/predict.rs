//! Monte Carlo predictive distributions over retained posterior samples and
//! the train/test summary metrics.
//!
//! For a cell `(t, l)` the predictive density of `y` is the average over
//! samples `m` of `f(y | theta^(m)_{x^(m)_t})`. Train metrics use unmasked
//! cells, test metrics the masked (held-out) ones.
//!
//! The error metric is the mean absolute error of the predictive mean (or its
//! root mean square, on request). For multinomial data it is instead the rate
//! at which the predictive mode misses the observed symbol.

use serde::{Deserialize, Serialize};

use crate::emissions::{EmissionParams, Family, ObservationMatrix};
use crate::error::{Result, ShgpError};
use crate::inference::SamplerState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ErrorMetric {
    #[default]
    Mae,
    Rmse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub metric: ErrorMetric,
    pub train_error: f64,
    pub test_error: f64,
    /// Mean log predictive density over the respective cells.
    pub train_loglik: f64,
    pub test_loglik: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub n_samples: usize,
    pub t: usize,
    pub l: usize,
    /// Per-cell predictive mean and variance, T x L row-major.
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl PredictionReport {
    pub fn validate(&self) -> Result<()> {
        let cells = self.t * self.l;
        if self.mean.len() != cells || self.variance.len() != cells {
            return Err(ShgpError::Dimension("prediction report cell arrays".into()));
        }
        if self.n_train + self.n_test != cells {
            return Err(ShgpError::Dimension(
                "train and test cells must partition the data".into(),
            ));
        }
        let scalars = [
            self.train_error,
            self.test_error,
            self.train_loglik,
            self.test_loglik,
        ];
        if scalars
            .iter()
            .chain(&self.mean)
            .chain(&self.variance)
            .any(|v| !v.is_finite())
        {
            return Err(ShgpError::Numerical(
                "prediction report has non-finite values".into(),
            ));
        }
        Ok(())
    }
}

fn log_mean_exp(values: &[f64]) -> f64 {
    let peak = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = values.iter().map(|v| (v - peak).exp()).sum();
    peak + (s / values.len() as f64).ln()
}

fn check_samples(samples: &[&SamplerState], t: usize, l: usize) -> Result<()> {
    if samples.is_empty() {
        return Err(ShgpError::InvalidParameter("no posterior samples".into()));
    }
    for s in samples {
        if s.x.len() <= t || s.params.dims() <= l {
            return Err(ShgpError::Dimension(format!(
                "cell ({t}, {l}) outside a sample with T={} and L={}",
                s.x.len(),
                s.params.dims()
            )));
        }
    }
    Ok(())
}

/// Log of the Monte Carlo predictive density of value `y` in cell `(t, l)`.
pub fn log_predictive_density<'s, I>(y: f64, t: usize, l: usize, samples: I) -> Result<f64>
where
    I: IntoIterator<Item = &'s SamplerState>,
{
    let samples: Vec<&SamplerState> = samples.into_iter().collect();
    check_samples(&samples, t, l)?;
    let terms: Vec<f64> = samples
        .iter()
        .map(|s| s.params.log_density(y, l, s.x.as_slice()[t]))
        .collect();
    Ok(log_mean_exp(&terms))
}

/// Monte Carlo predictive density (pmf for counts and symbols, pdf for reals).
pub fn predictive_density<'s, I>(y: f64, t: usize, l: usize, samples: I) -> Result<f64>
where
    I: IntoIterator<Item = &'s SamplerState>,
{
    log_predictive_density(y, t, l, samples).map(f64::exp)
}

/// Predictive mean and variance of cell `(t, l)` by the law of total variance.
fn predictive_moments(samples: &[&SamplerState], t: usize, l: usize) -> (f64, f64) {
    let m = samples.len() as f64;
    let (mut first, mut second) = (0.0, 0.0);
    for s in samples {
        let (mu, var) = s.params.moments(l, s.x.as_slice()[t]);
        first += mu;
        second += var + mu * mu;
    }
    let mean = first / m;
    (mean, (second / m - mean * mean).max(0.0))
}

/// Predictive mode of a symbol cell.
fn predictive_mode(samples: &[&SamplerState], t: usize, symbols: usize) -> usize {
    let mut probs = vec![0.0; symbols];
    for s in samples {
        if let EmissionParams::Multinomial { probs: p, .. } = &s.params {
            let state = s.x.as_slice()[t];
            for (acc, v) in probs
                .iter_mut()
                .zip(&p[state * symbols..(state + 1) * symbols])
            {
                *acc += v;
            }
        }
    }
    probs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

pub fn report<'s, I>(
    y: &ObservationMatrix,
    samples: I,
    metric: ErrorMetric,
) -> Result<PredictionReport>
where
    I: IntoIterator<Item = &'s SamplerState>,
{
    let samples: Vec<&SamplerState> = samples.into_iter().collect();
    let (t_len, l_len) = (y.len(), y.dims());
    check_samples(&samples, t_len - 1, l_len - 1)?;
    let family = samples[0].params.family();

    let mut mean = Vec::with_capacity(t_len * l_len);
    let mut variance = Vec::with_capacity(t_len * l_len);
    // (error sum, loglik sum, count) for train and test cells.
    let mut train = (0.0, 0.0, 0usize);
    let mut test = (0.0, 0.0, 0usize);
    let mut terms = vec![0.0; samples.len()];
    for t in 0..t_len {
        for l in 0..l_len {
            let truth = y.value(t, l);
            let (mu, var) = predictive_moments(&samples, t, l);
            mean.push(mu);
            variance.push(var);
            let err = match family {
                Family::Multinomial { symbols } => {
                    (predictive_mode(&samples, t, symbols) as f64 != truth) as u8 as f64
                }
                _ => match metric {
                    ErrorMetric::Mae => (mu - truth).abs(),
                    ErrorMetric::Rmse => (mu - truth).powi(2),
                },
            };
            for (slot, s) in terms.iter_mut().zip(&samples) {
                *slot = s.params.log_density(truth, l, s.x.as_slice()[t]);
            }
            let ll = log_mean_exp(&terms);
            let acc = if y.is_masked(t, l) {
                &mut test
            } else {
                &mut train
            };
            acc.0 += err;
            acc.1 += ll;
            acc.2 += 1;
        }
    }
    let finish = |(err, ll, n): (f64, f64, usize)| -> (f64, f64) {
        if n == 0 {
            return (0.0, 0.0);
        }
        let e = err / n as f64;
        let e = match (family, metric) {
            (Family::Multinomial { .. }, _) | (_, ErrorMetric::Mae) => e,
            (_, ErrorMetric::Rmse) => e.sqrt(),
        };
        (e, ll / n as f64)
    };
    let (train_error, train_loglik) = finish(train);
    let (test_error, test_loglik) = finish(test);
    Ok(PredictionReport {
        metric,
        train_error,
        test_error,
        train_loglik,
        test_loglik,
        n_train: train.2,
        n_test: test.2,
        n_samples: samples.len(),
        t: t_len,
        l: l_len,
        mean,
        variance,
    })
}

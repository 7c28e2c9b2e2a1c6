//! Log-densities, random draws and the small set of goodness-of-fit tools the
//! sampler diagnostics rely on.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

/// Smallest value a gamma draw or a gamma shape is allowed to take.
///
/// Shapes like `alpha * w_i * w_j` can be astronomically small, in which case
/// the sampler returns exactly zero. Every positive quantity is floored here so
/// that weight matrices stay strictly positive.
pub const POSITIVE_FLOOR: f64 = 1e-300;

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Shape-rate gamma log-density. Returns `-inf` outside the support.
pub fn gamma_ln_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if !(x > 0.0) || !x.is_finite() {
        return f64::NEG_INFINITY;
    }
    let shape = shape.max(POSITIVE_FLOOR);
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Gamma log-density evaluated at `x = exp(log_x)` without leaving log space.
pub fn gamma_ln_pdf_log_x(log_x: f64, shape: f64, rate: f64) -> f64 {
    let shape = shape.max(POSITIVE_FLOOR);
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * log_x - rate * log_x.exp()
}

pub fn poisson_ln_pmf(y: f64, rate: f64) -> f64 {
    if y < 0.0 || y.fract() != 0.0 || !y.is_finite() {
        return f64::NEG_INFINITY;
    }
    y * rate.ln() - rate - ln_gamma(y + 1.0)
}

pub fn normal_ln_pdf(y: f64, mean: f64, sd: f64) -> f64 {
    let z = (y - mean) / sd;
    -LN_SQRT_2PI - sd.ln() - 0.5 * z * z
}

/// Shape-rate gamma draw, floored at [`POSITIVE_FLOOR`].
pub fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    let shape = shape.max(POSITIVE_FLOOR);
    let draw = match Gamma::new(shape, 1.0 / rate) {
        Ok(dist) => dist.sample(rng),
        Err(_) => 0.0,
    };
    if draw.is_finite() {
        draw.max(POSITIVE_FLOOR)
    } else {
        f64::MAX
    }
}

/// Log of a shape-rate gamma draw. For `shape < 1` uses
/// `G(a) = G(a + 1) U^(1/a)` so that the log stays exact where the draw itself
/// would underflow.
pub fn sample_log_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    let shape = shape.max(POSITIVE_FLOOR);
    if shape >= 1.0 {
        return sample_gamma(rng, shape, rate).ln();
    }
    let boosted = sample_gamma(rng, shape + 1.0, rate).ln();
    let u: f64 = rng.random::<f64>();
    boosted + (1.0 - u).ln() / shape
}

pub fn sample_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    mean + sd * z
}

/// Draws an index with probability proportional to `weights` (nonnegative,
/// not necessarily normalised).
pub fn sample_categorical<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    // Rounding can leave u marginally above the last weight.
    weights
        .iter()
        .rposition(|&w| w > 0.0)
        .unwrap_or(weights.len() - 1)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Standard error of the mean for independent draws.
pub fn standard_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Standard error of the mean of an autocorrelated series by the method of
/// non-overlapping batch means.
pub fn batch_means_se(xs: &[f64], n_batches: usize) -> f64 {
    let n_batches = n_batches.max(2).min(xs.len());
    let size = xs.len() / n_batches;
    let means: Vec<f64> = (0..n_batches)
        .map(|b| mean(&xs[b * size..(b + 1) * size]))
        .collect();
    (variance(&means) / n_batches as f64).sqrt()
}

/// Effective sample size of a stationary series, using Geyer's initial
/// positive sequence estimate of the integrated autocorrelation time.
pub fn effective_sample_size(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return n as f64;
    }
    let m = mean(xs);
    let c0: f64 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return n as f64;
    }
    let rho = |lag: usize| -> f64 {
        (0..n - lag)
            .map(|i| (xs[i] - m) * (xs[i + lag] - m))
            .sum::<f64>()
            / (n as f64 * c0)
    };
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = (rho(lag) + rho(lag + 1)).min(prev_pair);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        prev_pair = pair;
        lag += 2;
    }
    n as f64 / tau.max(1.0 / n as f64)
}

/// Standard error of the mean of an autocorrelated series from its
/// effective sample size.
pub fn mcmc_standard_error(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let var = variance(xs) * (n - 1.0) / n;
    (var / effective_sample_size(xs)).sqrt()
}

/// Complementary Kolmogorov distribution function, `P(K > lambda)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let lo = f - i as f64 / n;
            let hi = (i as f64 + 1.0) / n - f;
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}

/// One-sample KS test; returns `(statistic, p_value)`.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> (f64, f64) {
    let d = ks_statistic(samples, cdf);
    let sqrt_n = (samples.len() as f64).sqrt();
    (d, kolmogorov_q((sqrt_n + 0.12 + 0.11 / sqrt_n) * d))
}

/// Two-sample KS test; returns `(statistic, p_value)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.total_cmp(y));
    b.sort_by(|x, y| x.total_cmp(y));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    (d, kolmogorov_q((ne + 0.12 + 0.11 / ne) * d))
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must cover the same items");
    let choose2 = |n: u64| (n * n.saturating_sub(1)) as f64 / 2.0;
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&n| choose2(n)).sum();
    let sum_rows: f64 = rows.values().map(|&n| choose2(n)).sum();
    let sum_cols: f64 = cols.values().map(|&n| choose2(n)).sum();
    let expected = sum_rows * sum_cols / choose2(a.len() as u64);
    let max_index = 0.5 * (sum_rows + sum_cols);
    if max_index == expected {
        // Both partitions trivial (all-in-one or all singletons).
        return 1.0;
    }
    (index - expected) / (max_index - expected)
}

/// Normal density without the log, used by predictive averaging.
pub fn normal_pdf(y: f64, mean: f64, sd: f64) -> f64 {
    let z = (y - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
}

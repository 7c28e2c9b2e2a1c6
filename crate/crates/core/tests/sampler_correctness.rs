//! Each Gibbs block, run against its own conditional while everything it
//! conditions on is redrawn exactly, must leave the prior marginal of its
//! variables invariant. Moments are checked against closed forms.

mod common;

use shgp::chain::simulate;
use shgp::emissions::{
    log_likelihood_matrix, sample_emission_posterior, sample_emission_prior, sample_observations,
    EmissionParams, EmissionPriors, Family,
};
use shgp::inference::{
    ffbs, hmc_step, log_posterior_j, nuts_step, sample_base_weights_posterior,
    sample_concentrations, HmcConfig, NutsConfig, SamplerConfig, SamplerState,
};
use shgp::prior::{
    normalize_rows, sample_base_weights, sample_weight_matrix, BaseWeights, Hyperparams,
    WeightMatrix,
};
use shgp::stats::{batch_means_se, mean};

use common::*;

/// Two-sided p-value of the chain mean of `xs` against `expected`.
fn p_value(xs: &[f64], expected: f64) -> f64 {
    two_sided_p((mean(xs) - expected) / batch_means_se(xs, 50))
}

/// Asserts every `(label, samples, expected mean)` at overall level 0.01.
fn assert_moments(checks: &[(String, Vec<f64>, f64)]) {
    let threshold = 0.01 / checks.len() as f64;
    for (label, xs, expected) in checks {
        let p = p_value(xs, *expected);
        assert!(
            p > threshold,
            "{label}: chain mean {:.4} vs {expected:.4} (p={p:.2e})",
            mean(xs)
        );
    }
}

fn first_and_second(label: &str, xs: Vec<f64>, m1: f64, m2: f64) -> [(String, Vec<f64>, f64); 2] {
    let sq = xs.iter().map(|v| v * v).collect();
    [(label.to_string(), xs, m1), (format!("{label}^2"), sq, m2)]
}

fn initial_state(h: &Hyperparams, t: usize, seed: u64) -> SamplerState {
    let mut r = rng(seed);
    let w = sample_base_weights(h, &mut r).unwrap();
    let j = sample_weight_matrix(&w, h, &mut r).unwrap();
    let x = simulate(&j, &w, t, &mut r).unwrap();
    let params = sample_emission_prior(Family::Poisson, 1, h.k, &EmissionPriors::default(), &mut r);
    SamplerState {
        h: h.clone(),
        w,
        j,
        x,
        params,
        iteration: 0,
    }
}

#[test]
fn concentration_updates_preserve_their_priors() {
    let h = Hyperparams {
        k: 3,
        gamma: 3.0,
        s0: 3.0,
        r0: 2.0,
        s: 4.0,
        r: 3.0,
        ..Default::default()
    };
    let cfg = SamplerConfig::default();
    let mut s = initial_state(&h, 1, 1);
    let mut r = rng(2);
    let (mut a0, mut a) = (Vec::new(), Vec::new());
    for _ in 0..40_000 {
        sample_concentrations(&mut s, &cfg, &mut r);
        s.w = sample_base_weights(&s.h, &mut r).unwrap();
        s.j = sample_weight_matrix(&s.w, &s.h, &mut r).unwrap();
        a0.push(s.h.alpha0);
        a.push(s.h.alpha);
    }
    let mut checks = Vec::new();
    checks.extend(first_and_second("alpha0", a0, 1.5, 3.0 * 4.0 / 4.0));
    checks.extend(first_and_second("alpha", a, 4.0 / 3.0, 4.0 * 5.0 / 9.0));
    assert_moments(&checks);
}

#[test]
fn base_weight_update_preserves_its_prior() {
    for reversible in [true, false] {
        let h = Hyperparams {
            k: 3,
            gamma: 3.0,
            alpha0: 1.0,
            alpha: 1.0,
            reversible,
            ..Default::default()
        };
        let cfg = SamplerConfig::default();
        let mut s = initial_state(&h, 1, 3);
        let mut r = rng(4);
        let (mut w0, mut w2) = (Vec::new(), Vec::new());
        for _ in 0..100_000 {
            s.w = sample_base_weights_posterior(&s, &cfg, &mut r).unwrap();
            s.j = sample_weight_matrix(&s.w, &h, &mut r).unwrap();
            s.x = simulate(&s.j, &s.w, 1, &mut r).unwrap();
            w0.push(s.w.as_slice()[0]);
            w2.push(s.w.as_slice()[2]);
        }
        // w_k ~ Gamma(1, 1) under this prior.
        let mut checks = Vec::new();
        checks.extend(first_and_second("w0", w0, 1.0, 2.0));
        checks.extend(first_and_second("w2", w2, 1.0, 2.0));
        assert_moments(&checks);
    }
}

/// Alternates `inner` J transitions with an exact redraw of a T=20 path.
fn run_weight_matrix_chain(
    reversible: bool,
    use_nuts: bool,
    n: usize,
) -> Vec<(String, Vec<f64>, f64)> {
    let h = Hyperparams {
        k: 3,
        alpha: 2.0,
        reversible,
        ..Default::default()
    };
    let w = BaseWeights::new(vec![0.5, 1.0, 1.5]).unwrap();
    let mut r = rng(5);
    let mut s = initial_state(&h, 20, 6);
    s.w = w.clone();
    s.j = sample_weight_matrix(&w, &h, &mut r).unwrap();
    s.x = simulate(&s.j, &w, 20, &mut r).unwrap();
    let hmc = HmcConfig {
        step_size: 0.1,
        n_leapfrog: 10,
    };
    let nuts = NutsConfig {
        step_size: 0.2,
        ..Default::default()
    };
    let cells = [(0, 1), (2, 0), (2, 2)];
    let mut draws: Vec<Vec<f64>> = vec![Vec::new(); cells.len()];
    for _ in 0..n {
        let snapshot = s.clone();
        let mut target = |u: &[f64]| log_posterior_j(u, &snapshot).unwrap();
        let mut u = s.j.free_log_values().to_vec();
        for _ in 0..3 {
            u = if use_nuts {
                nuts_step(&mut target, &u, &nuts, &mut r).position
            } else {
                hmc_step(&mut target, &u, &hmc, &mut r).position
            };
        }
        s.j = WeightMatrix::from_log_free(3, reversible, u).unwrap();
        s.x = simulate(&s.j, &w, 20, &mut r).unwrap();
        for (d, &(a, b)) in draws.iter_mut().zip(&cells) {
            d.push(s.j.get(a, b));
        }
    }
    let ws = w.as_slice();
    let mut checks = Vec::new();
    for (d, &(a, b)) in draws.into_iter().zip(&cells) {
        // J_ab ~ Gamma(alpha w_a w_b, alpha).
        let shape = h.alpha * ws[a] * ws[b];
        let m2 = shape * (shape + 1.0) / (h.alpha * h.alpha);
        checks.extend(first_and_second(&format!("J{a}{b}"), d, ws[a] * ws[b], m2));
    }
    checks
}

#[test]
fn hmc_edge_weight_update_preserves_its_prior() {
    for reversible in [true, false] {
        assert_moments(&run_weight_matrix_chain(reversible, false, 60_000));
    }
}

#[test]
fn nuts_edge_weight_update_preserves_its_prior() {
    for reversible in [true, false] {
        assert_moments(&run_weight_matrix_chain(reversible, true, 20_000));
    }
}

#[test]
fn state_update_preserves_the_chain_law() {
    let t = 8;
    let w = BaseWeights::new(vec![0.2, 0.3, 0.5]).unwrap();
    // Non-symmetric, so the path law depends on direction.
    let j = WeightMatrix::from_rows(
        &[
            vec![2.0, 1.0, 0.1],
            vec![0.2, 1.0, 3.0],
            vec![1.5, 0.3, 1.0],
        ],
        false,
    )
    .unwrap();
    let p = normalize_rows(&j).unwrap();
    let params = EmissionParams::Poisson {
        l: 1,
        k: 3,
        rates: vec![1.0, 3.0, 6.0],
    };
    let mut r = rng(7);
    let mut x = simulate(&j, &w, t, &mut r).unwrap();
    let (mut first, mut last) = (Vec::new(), Vec::new());
    for _ in 0..50_000 {
        let y = sample_observations(&params, &x, &mut r).unwrap();
        let loglik = log_likelihood_matrix(&y, &params).unwrap();
        x = ffbs(&p, &w.normalized(), &loglik, &mut r).unwrap();
        first.push(f64::from(u8::from(x.as_slice()[0] == 0)));
        last.push(f64::from(u8::from(x.as_slice()[t - 1] == 2)));
    }
    // Marginal of the last state: init propagated t-1 steps.
    let mut dist = w.normalized();
    for _ in 1..t {
        dist = (0..3)
            .map(|b| (0..3).map(|a| dist[a] * p.get(a, b)).sum())
            .collect();
    }
    assert_moments(&[
        ("x1 = 0".to_string(), first, 0.2),
        (format!("x{t} = 2"), last, dist[2]),
    ]);
}

#[test]
fn emission_updates_preserve_their_priors() {
    let priors = EmissionPriors {
        rate_shape: 2.0,
        rate_rate: 1.0,
        mean0: 0.5,
        kappa0: 1.0,
        var_shape: 3.0,
        var_scale: 2.0,
        beta: 2.0,
    };
    let w = BaseWeights::new(vec![1.0, 1.0]).unwrap();
    let j = WeightMatrix::from_rows(&[vec![3.0, 1.0], vec![1.0, 3.0]], true).unwrap();
    let mut r = rng(8);
    let x = simulate(&j, &w, 10, &mut r).unwrap();
    let families = [
        Family::Poisson,
        Family::Gaussian,
        Family::Multinomial { symbols: 3 },
    ];
    for family in families {
        let mut params = sample_emission_prior(family, 1, 2, &priors, &mut r);
        let mut draws = Vec::new();
        for _ in 0..50_000 {
            let y = sample_observations(&params, &x, &mut r).unwrap();
            params = sample_emission_posterior(&y, &x, family, 2, &priors, &mut r).unwrap();
            draws.push(match &params {
                EmissionParams::Poisson { rates, .. } => rates[0],
                EmissionParams::Gaussian { mean, .. } => mean[0],
                EmissionParams::Multinomial { probs, .. } => probs[0],
            });
        }
        let checks = match family {
            // Gamma(2, 1).
            Family::Poisson => first_and_second("rate", draws, 2.0, 6.0),
            // mean | var ~ N(0.5, var), E[var] = 2 / (3 - 1).
            Family::Gaussian => first_and_second("mean", draws, 0.5, 0.25 + 1.0),
            // Dirichlet(2, 2, 2).
            Family::Multinomial { .. } => first_and_second("prob", draws, 1.0 / 3.0, 1.0 / 7.0),
        };
        assert_moments(&checks);
    }
}

#[test]
fn full_sampler_geweke_non_reversible() {
    let tests = geweke_moment_tests(false, 50_000, 100_000, 11);
    let threshold = 0.01 / tests.len() as f64;
    for m in &tests {
        assert!(
            m.p > threshold,
            "{}^{}: forward {:.4} chain {:.4} (p={:.2e})",
            m.name,
            m.power,
            m.forward,
            m.chain,
            m.p
        );
    }
}

//! Shared fixtures and independent reference computations for the
//! integration tests.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use shgp::chain::{simulate, StateSequence};
use shgp::emissions::{
    sample_emission_prior, sample_observations, EmissionParams, EmissionPriors, Family,
    ObservationMatrix,
};
use shgp::inference::{gibbs_sweep, HmcConfig, Sampler, SamplerConfig, SamplerState, Trace};
use shgp::prior::{
    sample_base_weights, sample_weight_matrix, BaseWeights, Hyperparams, WeightMatrix,
};
use shgp::stats::{batch_means_se, mean, sample_gamma, sample_normal, standard_error};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A different path with the same first state and the same transition
/// counts: a random Eulerian trail through the multigraph of observed
/// transitions (Hierholzer's algorithm over shuffled edge lists).
pub fn eulerian_rearrangement<R: Rng>(x: &[usize], rng: &mut R) -> Vec<usize> {
    if x.len() < 2 {
        return x.to_vec();
    }
    let k = x.iter().copied().max().unwrap() + 1;
    let mut out_edges: Vec<Vec<usize>> = vec![Vec::new(); k];
    for pair in x.windows(2) {
        out_edges[pair[0]].push(pair[1]);
    }
    for edges in &mut out_edges {
        edges.shuffle(rng);
    }
    let mut stack = vec![x[0]];
    let mut trail = Vec::with_capacity(x.len());
    while let Some(&v) = stack.last() {
        match out_edges[v].pop() {
            Some(next) => stack.push(next),
            None => trail.push(stack.pop().unwrap()),
        }
    }
    trail.reverse();
    trail
}

/// Pairwise transition counts and first state, computed directly.
pub fn count_signature(x: &[usize], k: usize) -> (usize, Vec<u64>) {
    let mut c = vec![0u64; k * k];
    for pair in x.windows(2) {
        c[pair[0] * k + pair[1]] += 1;
    }
    (x[0], c)
}

/// Three-state reversible generator with sticky symmetric edge weights.
pub fn three_state_weights() -> (BaseWeights, WeightMatrix) {
    let w = BaseWeights::new(vec![1.0, 1.0, 1.0]).unwrap();
    let j = WeightMatrix::from_rows(
        &[
            vec![30.0, 1.0, 0.5],
            vec![1.0, 30.0, 1.0],
            vec![0.5, 1.0, 30.0],
        ],
        true,
    )
    .unwrap();
    (w, j)
}

/// Gaussian observations from the three-state generator with the given
/// per-state means and unit noise. Returns data and the true states.
pub fn gaussian_three_state(
    seed: u64,
    t: usize,
    means: [f64; 3],
) -> (ObservationMatrix, StateSequence) {
    let mut r = rng(seed);
    let (w, j) = three_state_weights();
    let x = simulate(&j, &w, t, &mut r).unwrap();
    let values = x
        .as_slice()
        .iter()
        .map(|&s| sample_normal(&mut r, means[s], 1.0))
        .collect();
    (ObservationMatrix::unmasked(t, 1, values).unwrap(), x)
}

/// Symmetric weights on a 5-cycle: self weight 4, ring neighbours 3,
/// every other pair 0.1.
pub fn ring_weights() -> (BaseWeights, WeightMatrix) {
    let k = 5;
    let rows: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| match (i + k - j) % k {
                    0 => 4.0,
                    1 | 4 => 3.0,
                    _ => 0.1,
                })
                .collect()
        })
        .collect();
    (
        BaseWeights::new(vec![1.0; k]).unwrap(),
        WeightMatrix::from_rows(&rows, true).unwrap(),
    )
}

/// Unit-noise Gaussian observations from the ring, state means
/// `spacing * (s - 2)`.
pub fn gaussian_ring(seed: u64, t: usize, spacing: f64) -> (ObservationMatrix, StateSequence) {
    let mut r = rng(seed);
    let (w, j) = ring_weights();
    let x = simulate(&j, &w, t, &mut r).unwrap();
    let values = x
        .as_slice()
        .iter()
        .map(|&s| sample_normal(&mut r, spacing * (s as f64 - 2.0), 1.0))
        .collect();
    (ObservationMatrix::unmasked(t, 1, values).unwrap(), x)
}

pub fn run_chain(
    y: &ObservationMatrix,
    h: &Hyperparams,
    family: Family,
    priors: &EmissionPriors,
    cfg: SamplerConfig,
) -> Trace {
    let mut sampler = Sampler::new(y, h, family, priors.clone(), cfg).unwrap();
    sampler.run(|_| {}).unwrap()
}

/// Mean of all K x K entries of `J`.
pub fn mean_edge_weight(j: &WeightMatrix) -> f64 {
    let k = j.k();
    j.to_rows().iter().flatten().sum::<f64>() / (k * k) as f64
}

pub fn first_rate(params: &EmissionParams) -> f64 {
    match params {
        EmissionParams::Poisson { rates, .. } => rates[0],
        _ => panic!("expected Poisson parameters"),
    }
}

/// Two-sided normal tail probability of `z`.
pub fn two_sided_p(z: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    2.0 * Normal::standard().sf(z.abs())
}

/// Scalars monitored by the Geweke test.
pub fn monitored(state: &SamplerState) -> [f64; 5] {
    [
        state.h.alpha0,
        state.h.alpha,
        mean(state.w.as_slice()),
        mean_edge_weight(&state.j),
        first_rate(&state.params),
    ]
}

pub const MONITORED: [&str; 5] = ["alpha0", "alpha", "mean w", "mean J", "rate"];

/// K=3 Geweke fixture at the default `gamma = 1`, so most base weights are
/// tiny and the funnel between `w` and `log J` is exercised.
pub fn geweke_hyperparams(reversible: bool) -> (Hyperparams, EmissionPriors) {
    let h = Hyperparams {
        k: 3,
        s0: 10.0,
        r0: 10.0,
        s: 10.0,
        r: 10.0,
        reversible,
        ..Default::default()
    };
    let priors = EmissionPriors {
        rate_shape: 2.0,
        rate_rate: 1.0,
        ..Default::default()
    };
    (h, priors)
}

/// Forward draw of every latent variable and the data (Poisson, L=2) from
/// the joint prior.
pub fn joint_prior_draw(
    h: &Hyperparams,
    priors: &EmissionPriors,
    t: usize,
    r: &mut ChaCha8Rng,
) -> (SamplerState, ObservationMatrix) {
    let mut h = h.clone();
    h.alpha0 = sample_gamma(r, h.s0, h.r0);
    h.alpha = sample_gamma(r, h.s, h.r);
    let w = sample_base_weights(&h, r).unwrap();
    let j = sample_weight_matrix(&w, &h, r).unwrap();
    let x = simulate(&j, &w, t, r).unwrap();
    let params = sample_emission_prior(Family::Poisson, 2, h.k, priors, r);
    let y = sample_observations(&params, &x, r).unwrap();
    (
        SamplerState {
            h,
            w,
            j,
            x,
            params,
            iteration: 0,
        },
        y,
    )
}

pub struct MomentTest {
    pub name: &'static str,
    pub power: i32,
    pub forward: f64,
    pub chain: f64,
    pub p: f64,
}

/// Marginal-conditional draws versus a successive-conditional chain
/// (regenerate the data given the latents, then one Gibbs sweep), T=20.
/// Returns a two-sided z-test of the first and second moment of each
/// monitored scalar, with batch-means standard errors for the chain.
pub fn geweke_moment_tests(
    reversible: bool,
    n_forward: usize,
    n_chain: usize,
    seed: u64,
) -> Vec<MomentTest> {
    let (h, priors) = geweke_hyperparams(reversible);
    let t = 20;
    let cfg = SamplerConfig {
        inner_iters: 5,
        hmc: HmcConfig {
            step_size: 0.1,
            n_leapfrog: 10,
        },
        ..Default::default()
    };

    let mut r = rng(seed);
    let forward: Vec<[f64; 5]> = (0..n_forward)
        .map(|_| monitored(&joint_prior_draw(&h, &priors, t, &mut r).0))
        .collect();
    let (mut state, _) = joint_prior_draw(&h, &priors, t, &mut r);
    let mut chain: Vec<[f64; 5]> = Vec::with_capacity(n_chain);
    for _ in 0..n_chain {
        let y = sample_observations(&state.params, &state.x, &mut r).unwrap();
        gibbs_sweep(&mut state, &y, &priors, &cfg, &mut r).unwrap();
        chain.push(monitored(&state));
    }

    let mut out = Vec::new();
    for (i, &name) in MONITORED.iter().enumerate() {
        for power in [1, 2] {
            let f: Vec<f64> = forward.iter().map(|v| v[i].powi(power)).collect();
            let c: Vec<f64> = chain.iter().map(|v| v[i].powi(power)).collect();
            let se = (standard_error(&f).powi(2) + batch_means_se(&c, 50).powi(2)).sqrt();
            out.push(MomentTest {
                name,
                power,
                forward: mean(&f),
                chain: mean(&c),
                p: two_sided_p((mean(&f) - mean(&c)) / se),
            });
        }
    }
    out
}

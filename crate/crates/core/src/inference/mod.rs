//! Gibbs sampler for the SHGP hidden Markov model.
//!
//! One sweep updates, in order: the concentrations `alpha0` and `alpha`
//! (slice sampling on log scale), each base weight (slice sampling on log
//! scale), a joint move of each base weight and `alpha` with the edges they
//! shape, the stored edge weights jointly (HMC or NUTS on `log J`), a
//! prior refresh of each state with the path integrated out, the hidden
//! sequence (forward filtering, backward sampling) and the emission
//! parameters (exact conjugate draw).

mod conditionals;
mod ffbs;
mod hmc;
mod nuts;
mod slice;

pub use conditionals::{
    log_conditional_alpha, log_conditional_alpha0, log_conditional_base_weight,
    WeightMatrixPosterior,
};
pub use ffbs::{ffbs, forward_filter};
pub use hmc::{hmc_step, DualAveraging, HmcConfig, HmcTransition};
pub use nuts::{nuts_step, NutsConfig, NutsTransition};
pub use slice::{slice_sample, SliceConfig};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::chain::{transition_counts, StateSequence, TransitionCounts};
use crate::emissions::{
    log_likelihood_matrix, sample_emission_posterior, sample_emission_prior, EmissionParams,
    EmissionPriors, Family, ObservationMatrix,
};
use crate::error::{Result, ShgpError};
use crate::prior::{
    log_prior_base_weights, log_prior_weight_matrix, normalize_rows, sample_base_weights,
    sample_weight_matrix, BaseWeights, Hyperparams, WeightMatrix,
};
use crate::stats::{
    gamma_ln_pdf, normal_ln_pdf, sample_gamma, sample_log_gamma, sample_normal, POSITIVE_FLOOR,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JSampler {
    Hmc,
    Nuts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub n_iter: usize,
    pub burnin: usize,
    pub thin: usize,
    /// HMC or NUTS transitions on `J` per sweep.
    pub inner_iters: usize,
    pub hmc: HmcConfig,
    pub nuts: NutsConfig,
    pub slice: SliceConfig,
    pub j_sampler: JSampler,
    /// Dual-averaging step-size adaptation during burn-in.
    pub adapt_step_size: bool,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_iter: 1000,
            burnin: 700,
            thin: 1,
            inner_iters: 50,
            hmc: HmcConfig::default(),
            nuts: NutsConfig::default(),
            slice: SliceConfig::default(),
            j_sampler: JSampler::Hmc,
            adapt_step_size: false,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burnin >= self.n_iter {
            return Err(ShgpError::InvalidParameter(format!(
                "burnin ({}) must be below n_iter ({})",
                self.burnin, self.n_iter
            )));
        }
        if self.thin == 0 {
            return Err(ShgpError::InvalidParameter(
                "thin must be at least 1".into(),
            ));
        }
        for (name, v) in [
            ("hmc step size", self.hmc.step_size),
            ("nuts step size", self.nuts.step_size),
            ("slice width", self.slice.width),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ShgpError::InvalidParameter(format!(
                    "{name} must be positive"
                )));
            }
        }
        if self.hmc.n_leapfrog == 0 || self.nuts.max_tree_depth == 0 {
            return Err(ShgpError::InvalidParameter(
                "leapfrog count and tree depth must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Number of retained samples, `floor((n_iter - burnin) / thin)`.
    pub fn retained(&self) -> usize {
        (self.n_iter - self.burnin) / self.thin
    }

    fn keeps(&self, iteration: usize) -> bool {
        iteration > self.burnin && (iteration - self.burnin).is_multiple_of(self.thin)
    }
}

/// Every latent variable of the model at one point of the chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerState {
    pub h: Hyperparams,
    pub w: BaseWeights,
    pub j: WeightMatrix,
    pub x: StateSequence,
    pub params: EmissionParams,
    pub iteration: usize,
}

impl SamplerState {
    /// Over-dispersed start: weights and edge weights from the prior given
    /// the configured concentrations, a uniform random state sequence and
    /// emission parameters from their prior.
    pub fn initialize<R: Rng + ?Sized>(
        h: &Hyperparams,
        family: Family,
        y: &ObservationMatrix,
        priors: &EmissionPriors,
        rng: &mut R,
    ) -> Result<Self> {
        h.validate()?;
        priors.validate()?;
        let w = sample_base_weights(h, rng)?;
        let j = sample_weight_matrix(&w, h, rng)?;
        let x = StateSequence::new(
            (0..y.len()).map(|_| rng.random_range(0..h.k)).collect(),
            h.k,
        )?;
        let params = sample_emission_prior(family, y.dims(), h.k, priors, rng);
        Ok(Self {
            h: h.clone(),
            w,
            j,
            x,
            params,
            iteration: 0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.h.validate()?;
        let k = self.h.k;
        if self.w.len() != k || self.j.k() != k || self.params.k() != k {
            return Err(ShgpError::Dimension(format!(
                "state components disagree on K={k}"
            )));
        }
        if self.j.is_reversible() != self.h.reversible {
            return Err(ShgpError::InvalidParameter(
                "weight matrix storage does not match the reversible flag".into(),
            ));
        }
        if self.x.max_state() >= k {
            return Err(ShgpError::Dimension("state index out of range".into()));
        }
        self.params.validate()
    }

    /// Number of distinct states used by the current sequence.
    pub fn occupied(&self) -> usize {
        self.x.occupied(self.h.k)
    }
}

/// Diagnostics from one sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepStats {
    /// Mean acceptance statistic of the inner `J` transitions.
    pub j_accept: f64,
    /// Leapfrog steps spent on `J`.
    pub n_leapfrog: usize,
    pub log_posterior: f64,
}

/// One full Gibbs cycle on `state`.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    state: &mut SamplerState,
    y: &ObservationMatrix,
    priors: &EmissionPriors,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<SweepStats> {
    let iteration = state.iteration + 1;
    sweep_inner(state, y, priors, cfg, rng).map_err(|e| ShgpError::Sweep {
        iteration,
        source: Box::new(e),
    })
}

fn sweep_inner<R: Rng + ?Sized>(
    state: &mut SamplerState,
    y: &ObservationMatrix,
    priors: &EmissionPriors,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<SweepStats> {
    sample_concentrations(state, cfg, rng);
    state.w = sample_base_weights_posterior(state, cfg, rng)?;
    rescale_shapes(state, rng)?;
    let (j_accept, n_leapfrog) = sample_weight_matrix_posterior(state, cfg, rng)?;

    refresh_states(state, y, priors, rng)?;
    let p = normalize_rows(&state.j)?;
    let loglik = log_likelihood_matrix(y, &state.params)?;
    state.x = ffbs(&p, &state.w.normalized(), &loglik, rng)?;

    state.params =
        sample_emission_posterior(y, &state.x, state.params.family(), state.h.k, priors, rng)?;
    state.iteration += 1;
    Ok(SweepStats {
        j_accept,
        n_leapfrog,
        log_posterior: log_joint(state, y, priors)?,
    })
}

/// Slice-samples `alpha0 | w` and then `alpha | J, w`, both on log scale.
pub fn sample_concentrations<R: Rng + ?Sized>(
    state: &mut SamplerState,
    cfg: &SamplerConfig,
    rng: &mut R,
) {
    let h = &mut state.h;
    let w = state.w.as_slice();
    let u0 = slice_sample(
        |u| log_conditional_alpha0(u, w, h.gamma, h.s0, h.r0),
        h.alpha0.ln(),
        &cfg.slice,
        rng,
    );
    h.alpha0 = u0.exp();
    let j = &state.j;
    let u = slice_sample(
        |u| log_conditional_alpha(u, j, w, h.s, h.r),
        h.alpha.ln(),
        &cfg.slice,
        rng,
    );
    h.alpha = u.exp();
}

/// Slice-samples each base weight in turn on log scale.
pub fn sample_base_weights_posterior<R: Rng + ?Sized>(
    state: &SamplerState,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<BaseWeights> {
    let h = &state.h;
    let mut w = state.w.as_slice().to_vec();
    let x1 = state.x.as_slice()[0];
    for k_idx in 0..w.len() {
        let u = slice_sample(
            |u| log_conditional_base_weight(u, k_idx, &w, &state.j, h.alpha0, h.alpha, h.gamma, x1),
            w[k_idx].ln(),
            &cfg.slice,
            rng,
        );
        w[k_idx] = u.exp().max(POSITIVE_FLOOR);
    }
    BaseWeights::new(w)
}

/// Random-walk scales of the joint moves on `log w_i` and `log alpha`; one
/// pass is made at each.
const RESCALE_STEPS: [f64; 3] = [0.1, 0.5, 2.0];

/// Log density of `(log alpha, log w, log J)` given `alpha0` and the path,
/// as far as it depends on `alpha`, `w` and `J`.
fn shape_block_log_density(
    h: &Hyperparams,
    w: &[f64],
    alpha: f64,
    log_j: &[f64],
    layout: &WeightMatrix,
    cells: &[(usize, usize)],
    counts: &TransitionCounts,
) -> f64 {
    let k = h.k;
    let base_shape = h.base_shape();
    let mut total = gamma_ln_pdf(alpha, h.s, h.r) + alpha.ln();
    total += w
        .iter()
        .map(|&x| gamma_ln_pdf(x, base_shape, h.alpha0) + x.ln())
        .sum::<f64>();
    let ln_alpha = alpha.ln();
    let mut row_logs = vec![Vec::with_capacity(k); k];
    for (&u, &(a, b)) in log_j.iter().zip(cells) {
        let shape = (alpha * w[a] * w[b]).max(POSITIVE_FLOOR);
        total += shape * ln_alpha - ln_gamma(shape) + shape * u - alpha * u.exp();
        row_logs[a].push(u);
        if h.reversible && a != b {
            row_logs[b].push(u);
        }
    }
    total += (w[counts.initial()] / w.iter().sum::<f64>()).ln();
    for (a, logs) in row_logs.iter().enumerate() {
        let n = counts.row_total(a);
        if n == 0 {
            continue;
        }
        let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logs.iter().map(|u| (u - m).exp()).sum::<f64>().ln();
        for b in 0..k {
            let c = counts.get(a, b);
            if c > 0 {
                let u = log_j[layout.free_index(a, b)];
                total += c as f64 * (u - lse);
            }
        }
    }
    total
}

/// With a tiny shape `s`, `log J` is roughly `-E / s` for a unit exponential
/// `E`, so `w` and the edges it shapes form a funnel that one-at-a-time
/// updates cross very slowly. This proposes `log w_i` for each `i`, a common
/// shift of every `log w_i`, and `log alpha`, each by a Gaussian random
/// walk, and carries each affected edge along with `log J' = log J * s / s'`,
/// which keeps `E` fixed in that regime. The Metropolis ratio includes the
/// Jacobian `prod s / s'`. The common shift scales every log weight in a row
/// alike, so it softens or sharpens near-deterministic rows smoothly.
pub fn rescale_shapes<R: Rng + ?Sized>(state: &mut SamplerState, rng: &mut R) -> Result<()> {
    let k = state.h.k;
    let counts = transition_counts(&state.x, k)?;
    let cells = state.j.free_cells();
    let mut w = state.w.as_slice().to_vec();
    let mut alpha = state.h.alpha;
    let mut log_j = state.j.free_log_values().to_vec();
    let mut current =
        shape_block_log_density(&state.h, &w, alpha, &log_j, &state.j, &cells, &counts);
    // Targets 0..k move one base weight, k moves every base weight by the
    // same factor and k + 1 moves alpha.
    for (target, scale) in RESCALE_STEPS
        .iter()
        .flat_map(|&scale| (0..k + 2).map(move |t| (t, scale)))
    {
        let step = sample_normal(rng, 0.0, scale);
        let mut w_new = w.clone();
        let mut alpha_new = alpha;
        match target {
            t if t < k => w_new[t] = w[t] * f64::exp(step),
            t if t == k => w_new.iter_mut().for_each(|x| *x *= f64::exp(step)),
            _ => alpha_new = alpha * f64::exp(step),
        }
        if !(w_new.iter().all(|&x| x >= POSITIVE_FLOOR && x.is_finite())
            && alpha_new > 0.0
            && alpha_new.is_finite())
        {
            continue;
        }
        let mut log_jacobian = 0.0;
        let mut proposed_j = log_j.clone();
        for (u, &(a, b)) in proposed_j.iter_mut().zip(&cells) {
            if target < k && a != target && b != target {
                continue;
            }
            let ratio = (alpha * w[a] * w[b]).max(POSITIVE_FLOOR)
                / (alpha_new * w_new[a] * w_new[b]).max(POSITIVE_FLOOR);
            *u *= ratio;
            log_jacobian += ratio.ln();
        }
        if proposed_j.iter().any(|u| !u.is_finite()) {
            continue;
        }
        let proposed = shape_block_log_density(
            &state.h,
            &w_new,
            alpha_new,
            &proposed_j,
            &state.j,
            &cells,
            &counts,
        );
        if rng.random::<f64>().ln() < proposed - current + log_jacobian {
            w = w_new;
            alpha = alpha_new;
            log_j = proposed_j;
            current = proposed;
        }
    }
    state.w = BaseWeights::new(w)?;
    state.h.alpha = alpha;
    state.j = WeightMatrix::from_log_free(k, state.h.reversible, log_j)?;
    Ok(())
}

/// A tiny `w_i` pins the edges of state `i` far below any other weight and
/// those edges in turn pin `w_i`, so single-block updates cannot revive a
/// state or move one that is in the wrong place. For each state this
/// proposes `w_i`, every edge touching `i` and the emission parameters of
/// `i` afresh from the prior, with the hidden path integrated out: the prior
/// cancels and the Metropolis ratio is the ratio of forward-algorithm
/// evidences. The path must be redrawn by FFBS before anything else
/// conditions on it.
pub fn refresh_states<R: Rng + ?Sized>(
    state: &mut SamplerState,
    y: &ObservationMatrix,
    priors: &EmissionPriors,
    rng: &mut R,
) -> Result<()> {
    let k = state.h.k;
    let family = state.params.family();
    let cells = state.j.free_cells();
    let evidence = |j: &WeightMatrix, w: &BaseWeights, params: &EmissionParams| -> Result<f64> {
        let loglik = log_likelihood_matrix(y, params)?;
        Ok(forward_filter(&normalize_rows(j)?, &w.normalized(), &loglik)?.1)
    };
    let mut current = evidence(&state.j, &state.w, &state.params)?;
    for i in 0..k {
        let h = &state.h;
        let mut w = state.w.as_slice().to_vec();
        w[i] = sample_gamma(rng, h.base_shape(), h.alpha0);
        let w = BaseWeights::new(w)?;
        let ws = w.as_slice();
        let mut logs = state.j.free_log_values().to_vec();
        for (l, &(a, b)) in logs.iter_mut().zip(&cells) {
            if a == i || b == i {
                *l = sample_log_gamma(rng, h.alpha * ws[a] * ws[b], h.alpha);
            }
        }
        let j = WeightMatrix::from_log_free(k, h.reversible, logs)?;
        let fresh = sample_emission_prior(family, y.dims(), k, priors, rng);
        let params = state.params.with_state_from(&fresh, i);
        let proposed = evidence(&j, &w, &params)?;
        if rng.random::<f64>().ln() < proposed - current {
            state.w = w;
            state.j = j;
            state.params = params;
            current = proposed;
        }
    }
    Ok(())
}

/// Value and gradient of the log posterior of `log J` given the rest of
/// `state`.
pub fn log_posterior_j(log_j: &[f64], state: &SamplerState) -> Result<(f64, Vec<f64>)> {
    let target = weight_matrix_target(state)?;
    if log_j.len() != target.dim() {
        return Err(ShgpError::Dimension(format!(
            "expected {} free edge weights, got {}",
            target.dim(),
            log_j.len()
        )));
    }
    Ok(target.evaluate(log_j))
}

fn weight_matrix_target(state: &SamplerState) -> Result<WeightMatrixPosterior> {
    let counts = transition_counts(&state.x, state.h.k)?;
    Ok(WeightMatrixPosterior::new(
        state.w.as_slice(),
        state.h.alpha,
        &counts,
        state.j.is_reversible(),
    ))
}

/// Runs `inner_iters` HMC or NUTS transitions on `log J` and stores the
/// result. Returns the mean acceptance statistic and leapfrog count.
fn sample_weight_matrix_posterior<R: Rng + ?Sized>(
    state: &mut SamplerState,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<(f64, usize)> {
    let target = weight_matrix_target(state)?;
    let mut eval = |u: &[f64]| target.evaluate(u);
    let mut u: Vec<f64> = state.j.free_log_values().to_vec();
    let mut accept = 0.0;
    let mut n_leapfrog = 0;
    for _ in 0..cfg.inner_iters {
        match cfg.j_sampler {
            JSampler::Hmc => {
                let tr = hmc_step(&mut eval, &u, &cfg.hmc, rng);
                accept += tr.accept_prob;
                n_leapfrog += cfg.hmc.n_leapfrog;
                u = tr.position;
            }
            JSampler::Nuts => {
                let tr = nuts_step(&mut eval, &u, &cfg.nuts, rng);
                accept += tr.accept_stat;
                n_leapfrog += tr.n_leapfrog;
                u = tr.position;
            }
        }
    }
    state.j = WeightMatrix::from_log_free(state.h.k, state.j.is_reversible(), u)?;
    Ok((accept / cfg.inner_iters.max(1) as f64, n_leapfrog))
}

/// Log joint density of every latent variable and the observed cells, with
/// the edge weights measured on log scale as the sampler moves them.
pub fn log_joint(
    state: &SamplerState,
    y: &ObservationMatrix,
    priors: &EmissionPriors,
) -> Result<f64> {
    let h = &state.h;
    let mut total = gamma_ln_pdf(h.alpha0, h.s0, h.r0) + gamma_ln_pdf(h.alpha, h.s, h.r);
    total += log_prior_base_weights(&state.w, h);
    total += log_prior_weight_matrix(&state.j, &state.w, h);
    total += state.j.free_log_values().iter().sum::<f64>();
    let xs = state.x.as_slice();
    total += (state.w.as_slice()[xs[0]] / state.w.total()).ln();
    let p = normalize_rows(&state.j)?;
    total += xs
        .windows(2)
        .map(|pair| p.get(pair[0], pair[1]).ln())
        .sum::<f64>();
    let loglik = log_likelihood_matrix(y, &state.params)?;
    total += xs
        .iter()
        .enumerate()
        .map(|(t, &s)| loglik.row(t)[s])
        .sum::<f64>();
    total += log_prior_emissions(&state.params, priors);
    Ok(total)
}

/// Log prior density of emission parameters (Gaussian: density in
/// `(mean, variance)`).
pub fn log_prior_emissions(params: &EmissionParams, priors: &EmissionPriors) -> f64 {
    match params {
        EmissionParams::Poisson { rates, .. } => rates
            .iter()
            .map(|&r| gamma_ln_pdf(r, priors.rate_shape, priors.rate_rate))
            .sum(),
        EmissionParams::Gaussian { mean, sd, .. } => mean
            .iter()
            .zip(sd)
            .map(|(&m, &s)| {
                let var = s * s;
                let (a, b) = (priors.var_shape, priors.var_scale);
                let inv_gamma = a * b.ln() - ln_gamma(a) - (a + 1.0) * var.ln() - b / var;
                normal_ln_pdf(m, priors.mean0, (var / priors.kappa0).sqrt()) + inv_gamma
            })
            .sum(),
        EmissionParams::Multinomial { symbols, probs, .. } => {
            let v = *symbols as f64;
            let b = priors.beta;
            let norm = ln_gamma(v * b) - v * ln_gamma(b);
            probs
                .chunks(*symbols)
                .map(|row| norm + row.iter().map(|p| (b - 1.0) * p.ln()).sum::<f64>())
                .sum()
        }
    }
}

/// One retained sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub log_posterior: f64,
    pub state: SamplerState,
}

/// Post-burn-in, thinned samples in iteration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn states(&self) -> impl Iterator<Item = &SamplerState> {
        self.records.iter().map(|r| &r.state)
    }

    /// The retained state with the highest log joint density.
    pub fn map_state(&self) -> Option<&SamplerState> {
        self.records
            .iter()
            .max_by(|a, b| a.log_posterior.total_cmp(&b.log_posterior))
            .map(|r| &r.state)
    }
}

/// Per-iteration scalar summary, emitted for every sweep (including burn-in).
#[derive(Debug, Clone, PartialEq)]
pub struct IterationLog {
    pub iteration: usize,
    pub log_posterior: f64,
    pub alpha0: f64,
    pub alpha: f64,
    pub occupied: usize,
    pub j_accept: f64,
    pub step_size: f64,
}

/// Position of the random stream, enough to continue a run exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngPosition {
    pub seed: u64,
    /// Word position as a decimal string (it is a `u128`).
    pub word_pos: String,
}

/// Everything needed to resume a chain where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub state: SamplerState,
    pub step_size: f64,
    pub adaptation: Option<DualAveraging>,
    pub rng: RngPosition,
}

/// A seeded chain: state, configuration and random stream.
pub struct Sampler<'a> {
    y: &'a ObservationMatrix,
    priors: EmissionPriors,
    cfg: SamplerConfig,
    state: SamplerState,
    rng: ChaCha8Rng,
    seed: u64,
    step_size: f64,
    adaptation: Option<DualAveraging>,
}

impl<'a> Sampler<'a> {
    /// Fresh chain initialised from the prior with `cfg.seed`.
    pub fn new(
        y: &'a ObservationMatrix,
        h: &Hyperparams,
        family: Family,
        priors: EmissionPriors,
        cfg: SamplerConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        y.validate(family)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let state = SamplerState::initialize(h, family, y, &priors, &mut rng)?;
        let step_size = match cfg.j_sampler {
            JSampler::Hmc => cfg.hmc.step_size,
            JSampler::Nuts => cfg.nuts.step_size,
        };
        let adaptation = cfg.adapt_step_size.then(|| {
            let target = match cfg.j_sampler {
                JSampler::Hmc => 0.65,
                JSampler::Nuts => 0.8,
            };
            DualAveraging::new(step_size, target)
        });
        Ok(Self {
            y,
            priors,
            seed: cfg.seed,
            cfg,
            state,
            rng,
            step_size,
            adaptation,
        })
    }

    /// Continues a chain from a checkpoint. The random stream resumes at the
    /// saved position, so the continuation matches an uninterrupted run.
    pub fn resume(
        y: &'a ObservationMatrix,
        priors: EmissionPriors,
        cfg: SamplerConfig,
        checkpoint: Checkpoint,
    ) -> Result<Self> {
        cfg.validate()?;
        checkpoint.state.validate()?;
        y.validate(checkpoint.state.params.family())?;
        if checkpoint.state.x.len() != y.len() {
            return Err(ShgpError::Dimension(format!(
                "checkpoint has {} time steps, data has {}",
                checkpoint.state.x.len(),
                y.len()
            )));
        }
        let word_pos: u128 = checkpoint.rng.word_pos.parse().map_err(|_| {
            ShgpError::InvalidParameter(format!("bad rng position {}", checkpoint.rng.word_pos))
        })?;
        let mut rng = ChaCha8Rng::seed_from_u64(checkpoint.rng.seed);
        rng.set_word_pos(word_pos);
        Ok(Self {
            y,
            priors,
            seed: checkpoint.rng.seed,
            cfg,
            state: checkpoint.state,
            rng,
            step_size: checkpoint.step_size,
            adaptation: checkpoint.adaptation,
        })
    }

    pub fn state(&self) -> &SamplerState {
        &self.state
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            state: self.state.clone(),
            step_size: self.step_size,
            adaptation: self.adaptation.clone(),
            rng: RngPosition {
                seed: self.seed,
                word_pos: self.rng.get_word_pos().to_string(),
            },
        }
    }

    /// One sweep with the current (possibly adapted) step size.
    pub fn sweep(&mut self) -> Result<SweepStats> {
        let mut cfg = self.cfg.clone();
        match cfg.j_sampler {
            JSampler::Hmc => cfg.hmc.step_size = self.step_size,
            JSampler::Nuts => cfg.nuts.step_size = self.step_size,
        }
        let stats = gibbs_sweep(&mut self.state, self.y, &self.priors, &cfg, &mut self.rng)?;
        if let Some(da) = self.adaptation.as_mut() {
            if self.state.iteration < self.cfg.burnin {
                self.step_size = da.update(stats.j_accept);
            } else {
                self.step_size = da.final_step();
                self.adaptation = None;
            }
        }
        Ok(stats)
    }

    /// Sweeps until `cfg.n_iter`, collecting retained samples and handing each
    /// iteration's summary to `on_iteration`.
    pub fn run<F: FnMut(&IterationLog)>(&mut self, mut on_iteration: F) -> Result<Trace> {
        let mut trace = Trace::default();
        while self.state.iteration < self.cfg.n_iter {
            let stats = self.sweep()?;
            let it = self.state.iteration;
            on_iteration(&IterationLog {
                iteration: it,
                log_posterior: stats.log_posterior,
                alpha0: self.state.h.alpha0,
                alpha: self.state.h.alpha,
                occupied: self.state.occupied(),
                j_accept: stats.j_accept,
                step_size: self.step_size,
            });
            if self.cfg.keeps(it) {
                trace.records.push(TraceRecord {
                    log_posterior: stats.log_posterior,
                    state: self.state.clone(),
                });
            }
        }
        Ok(trace)
    }
}

//! The `simulate`, `fit`, `predict` and `diagnose` subcommands.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{HoldoutUnit, RunConfig, Transform};
use super::io::{
    column_names, read_json, read_mask, read_observations, read_table, read_trace, write_json,
    write_mask, write_table, write_trace, IterationLogWriter, TraceHeader,
};
use crate::chain::{detailed_balance_residual, simulate, tv_convergence_curve, StateSequence};
use crate::emissions::{
    sample_emission_prior, sample_observations, EmissionParams, ObservationMatrix,
};
use crate::error::{Result, ShgpError};
use crate::inference::{Checkpoint, Sampler};
use crate::predict::{report, PredictionReport};
use crate::prior::{
    normalize_rows, sample_base_weights, sample_weight_matrix, stationary_distribution,
    BaseWeights, Hyperparams, WeightMatrix,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Fit,
    Predict,
    Diagnose,
}

/// Runs `command` once, or once per chain in `output/chain_<i>` with seed
/// `seed + i` when `chains > 1`.
pub fn run(command: Command, cfg: &RunConfig, chains: usize) -> Result<()> {
    if chains <= 1 {
        return run_one(command, cfg);
    }
    let configs = (0..chains)
        .map(|i| cfg.for_chain(i))
        .collect::<Result<Vec<_>>>()?;
    std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|c| scope.spawn(move || run_one(command, c)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect::<Result<Vec<()>>>()
    })?;
    Ok(())
}

fn run_one(command: Command, cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.output).map_err(|e| ShgpError::io(&cfg.output, e))?;
    match command {
        Command::Simulate => simulate_cmd(cfg).map(|_| ()),
        Command::Fit => fit(cfg).map(|_| ()),
        Command::Predict => predict(cfg).map(|_| ()),
        Command::Diagnose => diagnose(cfg).map(|_| ()),
    }
}

/// Held-out cells chosen uniformly without replacement: `round(fraction * T * L)`
/// cells, or `round(fraction * T)` whole time steps.
pub fn holdout_mask(t: usize, l: usize, fraction: f64, unit: HoldoutUnit, seed: u64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = vec![false; t * l];
    match unit {
        HoldoutUnit::Cell => {
            let n = (fraction * (t * l) as f64).round() as usize;
            for i in rand::seq::index::sample(&mut rng, t * l, n) {
                mask[i] = true;
            }
        }
        HoldoutUnit::Step => {
            let n = (fraction * t as f64).round() as usize;
            for s in rand::seq::index::sample(&mut rng, t, n) {
                mask[s * l..(s + 1) * l].iter_mut().for_each(|m| *m = true);
            }
        }
    }
    mask
}

/// Column-wise transform using statistics of the observed cells only.
pub fn transform_columns(
    values: &mut [f64],
    mask: &[bool],
    l: usize,
    transform: Transform,
) -> Result<()> {
    if transform == Transform::None {
        return Ok(());
    }
    if transform == Transform::LogStandardize {
        if let Some(v) = values.iter().find(|v| **v <= 0.0) {
            return Err(ShgpError::InvalidParameter(format!(
                "log transform needs positive values, found {v}"
            )));
        }
        values.iter_mut().for_each(|v| *v = v.ln());
    }
    for d in 0..l {
        let observed: Vec<f64> = values
            .iter()
            .zip(mask)
            .skip(d)
            .step_by(l)
            .filter(|(_, m)| !**m)
            .map(|(v, _)| *v)
            .collect();
        if observed.len() < 2 {
            continue;
        }
        let mean = crate::stats::mean(&observed);
        let sd = crate::stats::variance(&observed).sqrt();
        let sd = if sd > 0.0 { sd } else { 1.0 };
        values
            .iter_mut()
            .skip(d)
            .step_by(l)
            .for_each(|v| *v = (*v - mean) / sd);
    }
    Ok(())
}

/// Reads, masks and transforms the configured data set.
pub fn load_dataset(cfg: &RunConfig) -> Result<ObservationMatrix> {
    let path = cfg
        .data
        .path
        .as_ref()
        .ok_or_else(|| ShgpError::Config("data.path is required".into()))?;
    let (t, l, mut values) = read_observations(path)?;
    let mask = match &cfg.data.mask {
        Some(mask_path) => {
            if cfg.data.holdout_fraction > 0.0 {
                return Err(ShgpError::Config(
                    "set either data.mask or data.holdout_fraction, not both".into(),
                ));
            }
            read_mask(mask_path, t, l)?
        }
        None => holdout_mask(
            t,
            l,
            cfg.data.holdout_fraction,
            cfg.data.holdout_unit,
            cfg.data.holdout_seed,
        ),
    };
    transform_columns(&mut values, &mask, l, cfg.data.transform)?;
    let y = ObservationMatrix::new(t, l, values, mask)?;
    y.validate(cfg.family)?;
    Ok(y)
}

/// Generating parameters written by `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTruth {
    pub h: Hyperparams,
    pub w: BaseWeights,
    pub j: WeightMatrix,
    pub params: EmissionParams,
}

pub struct Simulated {
    pub truth: SimulationTruth,
    pub x: StateSequence,
    pub y: ObservationMatrix,
}

/// Draws a chain and observations from the prior at the configured
/// hyperparameters. Writes `observations.csv`, `states.csv`, `truth.json`
/// and, when a holdout fraction is set, `mask.csv`.
pub fn simulate_cmd(cfg: &RunConfig) -> Result<Simulated> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.sampler.seed);
    let h = cfg.hyper.clone();
    let w = sample_base_weights(&h, &mut rng)?;
    let j = sample_weight_matrix(&w, &h, &mut rng)?;
    let x = simulate(&j, &w, cfg.simulate_t, &mut rng)?;
    let params = sample_emission_prior(cfg.family, cfg.simulate_l, h.k, &cfg.priors, &mut rng);
    let y = sample_observations(&params, &x, &mut rng)?;

    let out = &cfg.output;
    let rows: Vec<Vec<f64>> = y.values().chunks(y.dims()).map(<[f64]>::to_vec).collect();
    write_table(
        &out.join("observations.csv"),
        &column_names("y", y.dims()),
        &rows,
    )?;
    let states: Vec<Vec<f64>> = x.as_slice().iter().map(|&s| vec![s as f64]).collect();
    write_table(&out.join("states.csv"), &["state".to_string()], &states)?;
    let truth = SimulationTruth { h, w, j, params };
    write_json(&out.join("truth.json"), &truth)?;
    if cfg.data.holdout_fraction > 0.0 {
        let mask = holdout_mask(
            y.len(),
            y.dims(),
            cfg.data.holdout_fraction,
            cfg.data.holdout_unit,
            cfg.data.holdout_seed,
        );
        write_mask(&out.join("mask.csv"), y.dims(), &mask)?;
    }
    log::info!(
        "simulated T={} L={} into {}",
        y.len(),
        y.dims(),
        out.display()
    );
    Ok(Simulated { truth, x, y })
}

pub struct FitOutput {
    pub trace_path: PathBuf,
    pub n_samples: usize,
    pub checkpoint: Checkpoint,
}

/// Runs the sampler. Writes `trace.jsonl`, `log.csv`, `checkpoint.json`,
/// `mask.csv` and the effective `config.txt`.
pub fn fit(cfg: &RunConfig) -> Result<FitOutput> {
    let y = load_dataset(cfg)?;
    let out = &cfg.output;
    let mut sampler = match &cfg.resume {
        Some(path) => {
            let checkpoint: Checkpoint = read_json(path)?;
            if checkpoint.state.params.family() != cfg.family {
                return Err(ShgpError::Config(
                    "checkpoint family differs from model.family".into(),
                ));
            }
            Sampler::resume(&y, cfg.priors.clone(), cfg.sampler.clone(), checkpoint)?
        }
        None => Sampler::new(
            &y,
            &cfg.hyper,
            cfg.family,
            cfg.priors.clone(),
            cfg.sampler.clone(),
        )?,
    };
    let mut log_writer = IterationLogWriter::create(&out.join("log.csv"))?;
    let mut log_error = None;
    let trace = sampler.run(|entry| {
        if log_error.is_none() {
            log_error = log_writer.write(entry).err();
        }
        if entry.iteration % 100 == 0 {
            log::info!(
                "iteration {} log posterior {:.3} occupied {}",
                entry.iteration,
                entry.log_posterior,
                entry.occupied
            );
        }
    });
    if let Some(e) = log_error {
        return Err(e);
    }
    log_writer.finish()?;
    let checkpoint = sampler.checkpoint();
    write_json(&out.join("checkpoint.json"), &checkpoint)?;
    let trace = trace?;

    let header = TraceHeader::new(
        cfg.hash(),
        cfg.family,
        cfg.hyper.k,
        y.len(),
        y.dims(),
        cfg.hyper.reversible,
    );
    let trace_path = out.join("trace.jsonl");
    write_trace(&trace_path, &header, &trace)?;
    write_mask(&out.join("mask.csv"), y.dims(), y.mask())?;
    std::fs::write(out.join("config.txt"), cfg.canonical()).map_err(|e| ShgpError::io(out, e))?;
    Ok(FitOutput {
        trace_path,
        n_samples: trace.len(),
        checkpoint,
    })
}

fn trace_path(explicit: &Option<PathBuf>, output: &Path) -> PathBuf {
    explicit
        .clone()
        .unwrap_or_else(|| output.join("trace.jsonl"))
}

/// Posterior predictive evaluation on the training and held-out cells.
/// Writes `report.json` and per-cell `predictive.csv`.
pub fn predict(cfg: &RunConfig) -> Result<PredictionReport> {
    let y = load_dataset(cfg)?;
    let path = trace_path(&cfg.predict_trace, &cfg.output);
    let (header, trace) = read_trace(&path)?;
    if (header.t, header.l) != (y.len(), y.dims()) {
        return Err(ShgpError::Dimension(format!(
            "trace is for {}x{} data, got {}x{}",
            header.t,
            header.l,
            y.len(),
            y.dims()
        )));
    }
    if header.config_hash != cfg.hash() {
        log::warn!("trace was produced under a different configuration");
    }
    let rep = report(&y, trace.states(), cfg.metric)?;
    write_json(&cfg.output.join("report.json"), &rep)?;
    let rows: Vec<Vec<f64>> = (0..y.len())
        .flat_map(|t| (0..y.dims()).map(move |l| (t, l)))
        .map(|(t, l)| {
            let i = t * y.dims() + l;
            vec![
                t as f64,
                l as f64,
                y.value(t, l),
                if y.is_masked(t, l) { 1.0 } else { 0.0 },
                rep.mean[i],
                rep.variance[i],
            ]
        })
        .collect();
    let header: Vec<String> = ["t", "l", "observed", "held_out", "mean", "variance"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    write_table(&cfg.output.join("predictive.csv"), &header, &rows)?;
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n_samples: usize,
    pub reversible: bool,
    pub detailed_balance_residual: Vec<f64>,
    pub max_detailed_balance_residual: f64,
    pub strictly_positive: bool,
    pub tv_t_max: usize,
    /// Distance at `tv_t_max` for each sample.
    pub tv_final: Vec<f64>,
    pub tv_monotone: bool,
    pub active_threshold: f64,
    pub active_states: Vec<Vec<usize>>,
}

/// Tolerance for floating-point wiggle when checking a TV curve never increases.
pub const TV_MONOTONE_TOLERANCE: f64 = 1e-12;

/// States whose stationary mass `J_i. / J..` exceeds `threshold`.
pub fn active_states(j: &WeightMatrix, threshold: f64) -> Vec<usize> {
    stationary_distribution(j)
        .iter()
        .enumerate()
        .filter(|(_, p)| **p > threshold)
        .map(|(i, _)| i)
        .collect()
}

fn weights_from_csv(path: &Path) -> Result<WeightMatrix> {
    let table = read_table(path)?;
    let k = table.rows.len();
    let square = table.rows.iter().all(|r| r.len() == k);
    let reversible = square && (0..k).all(|a| (0..k).all(|b| table.rows[a][b] == table.rows[b][a]));
    WeightMatrix::from_rows(&table.rows, reversible)
}

/// Chain diagnostics for every sampled weight matrix, or for a single matrix
/// given as a CSV. Writes `diagnostics.json`, `tv_curve.csv`,
/// `active_states.csv` and `weight_matrix.csv`.
pub fn diagnose(cfg: &RunConfig) -> Result<Diagnostics> {
    let (matrices, focus): (Vec<WeightMatrix>, usize) = match &cfg.diagnose_weights {
        Some(path) => (vec![weights_from_csv(path)?], 0),
        None => {
            let (_, trace) = read_trace(&trace_path(&cfg.diagnose_trace, &cfg.output))?;
            if trace.is_empty() {
                return Err(ShgpError::InvalidParameter("trace has no samples".into()));
            }
            let map = trace
                .records
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.log_posterior.total_cmp(&b.1.log_posterior))
                .map(|(i, _)| i)
                .unwrap_or(0);
            (trace.records.into_iter().map(|r| r.state.j).collect(), map)
        }
    };
    let t_max = cfg.diagnose_t_max;
    let mut residuals = Vec::with_capacity(matrices.len());
    let mut tv_final = Vec::with_capacity(matrices.len());
    let mut mean_curve = vec![0.0; t_max];
    let mut focus_curve = Vec::new();
    let mut monotone = true;
    let mut positive = true;
    for (i, j) in matrices.iter().enumerate() {
        residuals.push(detailed_balance_residual(j)?);
        positive &= normalize_rows(j)?.is_strictly_positive();
        let curve = tv_convergence_curve(j, t_max)?;
        monotone &= curve
            .windows(2)
            .all(|w| w[1] <= w[0] + TV_MONOTONE_TOLERANCE);
        tv_final.push(*curve.last().unwrap_or(&0.0));
        for (acc, d) in mean_curve.iter_mut().zip(&curve) {
            *acc += d / matrices.len() as f64;
        }
        if i == focus {
            focus_curve = curve;
        }
    }
    let active: Vec<Vec<usize>> = matrices
        .iter()
        .map(|j| active_states(j, cfg.active_threshold))
        .collect();

    let out = &cfg.output;
    let tv_rows: Vec<Vec<f64>> = (0..t_max)
        .map(|i| vec![(i + 1) as f64, mean_curve[i], focus_curve[i]])
        .collect();
    let tv_header: Vec<String> = ["t", "mean_tv", "map_tv"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    write_table(&out.join("tv_curve.csv"), &tv_header, &tv_rows)?;
    let active_rows: Vec<Vec<f64>> = active
        .iter()
        .enumerate()
        .map(|(i, a)| vec![i as f64, a.len() as f64])
        .collect();
    let active_header: Vec<String> = ["sample", "n_active"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    write_table(&out.join("active_states.csv"), &active_header, &active_rows)?;
    // Weight matrix of the focus sample restricted to its active states.
    let keep = &active[focus];
    let j = &matrices[focus];
    let rows: Vec<Vec<f64>> = keep
        .iter()
        .map(|&a| keep.iter().map(|&b| j.get(a, b)).collect())
        .collect();
    let names: Vec<String> = keep.iter().map(|s| format!("s{s}")).collect();
    if !keep.is_empty() {
        write_table(&out.join("weight_matrix.csv"), &names, &rows)?;
    }

    let diagnostics = Diagnostics {
        n_samples: matrices.len(),
        reversible: matrices.iter().all(WeightMatrix::is_symmetric),
        max_detailed_balance_residual: residuals.iter().copied().fold(0.0, f64::max),
        detailed_balance_residual: residuals,
        strictly_positive: positive,
        tv_t_max: t_max,
        tv_final,
        tv_monotone: monotone,
        active_threshold: cfg.active_threshold,
        active_states: active,
    };
    write_json(&out.join("diagnostics.json"), &diagnostics)?;
    Ok(diagnostics)
}

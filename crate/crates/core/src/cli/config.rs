//! Run configuration: flat `key = value` text with dotted section prefixes.
//!
//! Values are layered, later layers winning: built-in defaults, an optional
//! `preset`, the config file, `SHGP_*` environment variables, and finally
//! command-line flags. The environment name of a key is `SHGP_` followed by
//! the key upper-cased with dots replaced by underscores, e.g.
//! `SHGP_SAMPLER_N_ITER` for `sampler.n_iter`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::emissions::{EmissionPriors, Family};
use crate::error::{Result, ShgpError};
use crate::inference::{HmcConfig, JSampler, NutsConfig, SamplerConfig, SliceConfig};
use crate::predict::ErrorMetric;
use crate::prior::Hyperparams;

/// Every recognised key with its default value.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("preset", "none"),
    ("seed", "0"),
    ("model.family", "poisson"),
    ("model.reversible", "true"),
    ("model.k", "20"),
    ("model.symbols", "0"),
    ("prior.alpha0", "1.0"),
    ("prior.alpha", "1.0"),
    ("prior.gamma", "1.0"),
    ("prior.s0", "1.0"),
    ("prior.r0", "1.0"),
    ("prior.s", "1.0"),
    ("prior.r", "1.0"),
    ("emission.rate_shape", "1.0"),
    ("emission.rate_rate", "1.0"),
    ("emission.mean0", "0.0"),
    ("emission.kappa0", "0.01"),
    ("emission.var_shape", "2.0"),
    ("emission.var_scale", "1.0"),
    ("emission.beta", "1.0"),
    ("sampler.n_iter", "1000"),
    ("sampler.burnin", "700"),
    ("sampler.thin", "1"),
    ("sampler.inner_iters", "50"),
    ("sampler.j_sampler", "hmc"),
    ("sampler.hmc.step_size", "0.01"),
    ("sampler.hmc.n_leapfrog", "10"),
    ("sampler.nuts.step_size", "0.05"),
    ("sampler.nuts.max_tree_depth", "10"),
    ("sampler.slice.width", "1.0"),
    ("sampler.slice.max_stepouts", "50"),
    ("sampler.adapt_step_size", "false"),
    ("sampler.resume", ""),
    ("data.path", ""),
    ("data.mask", ""),
    ("data.transform", "none"),
    ("data.holdout_fraction", "0.0"),
    ("data.holdout_unit", "cell"),
    ("data.holdout_seed", "0"),
    ("simulate.t", "500"),
    ("simulate.l", "1"),
    ("predict.trace", ""),
    ("predict.metric", "mae"),
    ("diagnose.trace", ""),
    ("diagnose.weights", ""),
    ("diagnose.t_max", "200"),
    ("diagnose.active_threshold", "0.01"),
    ("output.dir", "shgp-out"),
];

/// Named settings applied before the config file.
fn preset(name: &str) -> Result<&'static [(&'static str, &'static str)]> {
    match name {
        "none" => Ok(&[]),
        // Multivariate count data (histone marks and binding proteins).
        "chipseq" => Ok(&[
            ("model.family", "poisson"),
            ("model.k", "20"),
            ("sampler.n_iter", "1000"),
            ("sampler.burnin", "700"),
            ("data.holdout_fraction", "0.2"),
        ]),
        // Univariate single-channel current recordings.
        "ion-channel" => Ok(&[
            ("model.family", "gaussian"),
            ("model.k", "15"),
            ("sampler.n_iter", "1000"),
            ("sampler.burnin", "700"),
            ("sampler.inner_iters", "50"),
            ("data.transform", "log-standardize"),
            ("data.holdout_fraction", "0.2"),
        ]),
        other => Err(ShgpError::Config(format!("unknown preset '{other}'"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    None,
    Standardize,
    LogStandardize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HoldoutUnit {
    Cell,
    Step,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub transform: Transform,
    pub holdout_fraction: f64,
    pub holdout_unit: HoldoutUnit,
    pub holdout_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub family: Family,
    pub hyper: Hyperparams,
    pub priors: EmissionPriors,
    pub sampler: SamplerConfig,
    pub resume: Option<PathBuf>,
    pub data: DataConfig,
    pub simulate_t: usize,
    pub simulate_l: usize,
    pub predict_trace: Option<PathBuf>,
    pub metric: ErrorMetric,
    pub diagnose_trace: Option<PathBuf>,
    pub diagnose_weights: Option<PathBuf>,
    pub diagnose_t_max: usize,
    pub active_threshold: f64,
    pub output: PathBuf,
    values: BTreeMap<String, String>,
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            ShgpError::Config(format!(
                "line {}: expected 'key = value', got '{raw}'",
                n + 1
            ))
        })?;
        pairs.push((key.trim().to_ascii_lowercase(), value.trim().to_string()));
    }
    Ok(pairs)
}

pub fn env_name(key: &str) -> String {
    format!("SHGP_{}", key.to_ascii_uppercase().replace('.', "_"))
}

fn is_known(key: &str) -> bool {
    DEFAULTS.iter().any(|(k, _)| *k == key)
}

/// Builder for layered configuration values.
#[derive(Debug, Clone)]
pub struct ConfigBuilder {
    values: BTreeMap<String, String>,
}

impl Default for ConfigBuilder {
    fn default() -> Self {
        Self {
            values: DEFAULTS
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

impl ConfigBuilder {
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<&mut Self> {
        let key = key.to_ascii_lowercase();
        if !is_known(&key) {
            return Err(ShgpError::Config(format!("unknown key '{key}'")));
        }
        self.values.insert(key, value.into());
        Ok(self)
    }

    /// Applies config-file text. A `preset` in the text is expanded first so
    /// the file's own keys override it.
    pub fn apply_text(&mut self, text: &str) -> Result<&mut Self> {
        let pairs = parse_pairs(text)?;
        if let Some((_, name)) = pairs.iter().find(|(k, _)| k == "preset") {
            for (k, v) in preset(name)? {
                self.set(k, *v)?;
            }
        }
        for (k, v) in &pairs {
            self.set(k, v.clone())?;
        }
        Ok(self)
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<&mut Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ShgpError::io(path, e))?;
        self.apply_text(&text)
    }

    /// Applies `SHGP_*` overrides from an environment snapshot.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(
        &mut self,
        env: I,
    ) -> Result<&mut Self> {
        let env: BTreeMap<String, String> = env.into_iter().collect();
        if let Some(name) = env.get(&env_name("preset")) {
            for (k, v) in preset(name)? {
                self.set(k, *v)?;
            }
        }
        for (key, _) in DEFAULTS {
            if let Some(v) = env.get(&env_name(key)) {
                self.set(key, v.clone())?;
            }
        }
        Ok(self)
    }

    pub fn build(&self) -> Result<RunConfig> {
        RunConfig::from_values(self.values.clone())
    }
}

fn get<T: FromStr>(values: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let raw = values.get(key).map(String::as_str).unwrap_or("");
    raw.parse()
        .map_err(|_| ShgpError::Config(format!("{key}: cannot parse '{raw}'")))
}

fn get_path(values: &BTreeMap<String, String>, key: &str) -> Option<PathBuf> {
    values.get(key).filter(|v| !v.is_empty()).map(PathBuf::from)
}

impl RunConfig {
    fn from_values(values: BTreeMap<String, String>) -> Result<Self> {
        let v = &values;
        let family = match get::<String>(v, "model.family")?.as_str() {
            "poisson" => Family::Poisson,
            "gaussian" => Family::Gaussian,
            "multinomial" => {
                let symbols: usize = get(v, "model.symbols")?;
                if symbols < 2 {
                    return Err(ShgpError::Config(
                        "model.symbols must be at least 2 for multinomial data".into(),
                    ));
                }
                Family::Multinomial { symbols }
            }
            other => return Err(ShgpError::Config(format!("unknown model.family '{other}'"))),
        };
        let hyper = Hyperparams {
            alpha0: get(v, "prior.alpha0")?,
            alpha: get(v, "prior.alpha")?,
            gamma: get(v, "prior.gamma")?,
            k: get(v, "model.k")?,
            s0: get(v, "prior.s0")?,
            r0: get(v, "prior.r0")?,
            s: get(v, "prior.s")?,
            r: get(v, "prior.r")?,
            reversible: get(v, "model.reversible")?,
        };
        hyper
            .validate()
            .map_err(|e| ShgpError::Config(e.to_string()))?;
        let priors = EmissionPriors {
            rate_shape: get(v, "emission.rate_shape")?,
            rate_rate: get(v, "emission.rate_rate")?,
            mean0: get(v, "emission.mean0")?,
            kappa0: get(v, "emission.kappa0")?,
            var_shape: get(v, "emission.var_shape")?,
            var_scale: get(v, "emission.var_scale")?,
            beta: get(v, "emission.beta")?,
        };
        priors
            .validate()
            .map_err(|e| ShgpError::Config(e.to_string()))?;
        let j_sampler = match get::<String>(v, "sampler.j_sampler")?.as_str() {
            "hmc" => JSampler::Hmc,
            "nuts" => JSampler::Nuts,
            other => {
                return Err(ShgpError::Config(format!(
                    "unknown sampler.j_sampler '{other}'"
                )))
            }
        };
        let sampler = SamplerConfig {
            n_iter: get(v, "sampler.n_iter")?,
            burnin: get(v, "sampler.burnin")?,
            thin: get(v, "sampler.thin")?,
            inner_iters: get(v, "sampler.inner_iters")?,
            hmc: HmcConfig {
                step_size: get(v, "sampler.hmc.step_size")?,
                n_leapfrog: get(v, "sampler.hmc.n_leapfrog")?,
            },
            nuts: NutsConfig {
                step_size: get(v, "sampler.nuts.step_size")?,
                max_tree_depth: get(v, "sampler.nuts.max_tree_depth")?,
            },
            slice: SliceConfig {
                width: get(v, "sampler.slice.width")?,
                max_stepouts: get(v, "sampler.slice.max_stepouts")?,
            },
            j_sampler,
            adapt_step_size: get(v, "sampler.adapt_step_size")?,
            seed: get(v, "seed")?,
        };
        sampler
            .validate()
            .map_err(|e| ShgpError::Config(e.to_string()))?;
        let transform = match get::<String>(v, "data.transform")?.as_str() {
            "none" => Transform::None,
            "standardize" => Transform::Standardize,
            "log-standardize" => Transform::LogStandardize,
            other => {
                return Err(ShgpError::Config(format!(
                    "unknown data.transform '{other}'"
                )))
            }
        };
        let holdout_unit = match get::<String>(v, "data.holdout_unit")?.as_str() {
            "cell" => HoldoutUnit::Cell,
            "step" => HoldoutUnit::Step,
            other => {
                return Err(ShgpError::Config(format!(
                    "unknown data.holdout_unit '{other}'"
                )))
            }
        };
        let holdout_fraction: f64 = get(v, "data.holdout_fraction")?;
        if !(0.0..1.0).contains(&holdout_fraction) {
            return Err(ShgpError::Config(format!(
                "data.holdout_fraction must lie in [0, 1), got {holdout_fraction}"
            )));
        }
        let metric = match get::<String>(v, "predict.metric")?.as_str() {
            "mae" => ErrorMetric::Mae,
            "rmse" => ErrorMetric::Rmse,
            other => {
                return Err(ShgpError::Config(format!(
                    "unknown predict.metric '{other}'"
                )))
            }
        };
        let simulate_l: usize = get(v, "simulate.l")?;
        let simulate_t: usize = get(v, "simulate.t")?;
        if simulate_t == 0 || simulate_l == 0 {
            return Err(ShgpError::Config(
                "simulate.t and simulate.l must be positive".into(),
            ));
        }
        Ok(Self {
            family,
            hyper,
            priors,
            sampler,
            resume: get_path(v, "sampler.resume"),
            data: DataConfig {
                path: get_path(v, "data.path"),
                mask: get_path(v, "data.mask"),
                transform,
                holdout_fraction,
                holdout_unit,
                holdout_seed: get(v, "data.holdout_seed")?,
            },
            simulate_t,
            simulate_l,
            predict_trace: get_path(v, "predict.trace"),
            metric,
            diagnose_trace: get_path(v, "diagnose.trace"),
            diagnose_weights: get_path(v, "diagnose.weights"),
            diagnose_t_max: get(v, "diagnose.t_max")?,
            active_threshold: get(v, "diagnose.active_threshold")?,
            output: get_path(v, "output.dir").unwrap_or_else(|| PathBuf::from("shgp-out")),
            values,
        })
    }

    /// Effective configuration as sorted `key = value` lines.
    pub fn canonical(&self) -> String {
        self.values
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// SHA-256 of the canonical text without `output.dir`, hex-encoded, so
    /// the same run written to two places hashes the same.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (k, v) in self
            .values
            .iter()
            .filter(|(k, _)| k.as_str() != "output.dir")
        {
            hasher.update(format!("{k} = {v}\n").as_bytes());
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Copy with different seed and output directory, for multi-chain runs.
    pub fn for_chain(&self, index: usize) -> Result<Self> {
        let mut values = self.values.clone();
        values.insert(
            "seed".into(),
            (self.sampler.seed + index as u64).to_string(),
        );
        let dir = self.output.join(format!("chain_{index}"));
        values.insert("output.dir".into(), dir.to_string_lossy().into_owned());
        Self::from_values(values)
    }

    pub fn value(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_build() {
        let cfg = ConfigBuilder::default().build().unwrap();
        assert_eq!(cfg.hyper.k, 20);
        assert_eq!(cfg.sampler.n_iter, 1000);
        assert_eq!(cfg.sampler.burnin, 700);
        assert_eq!(cfg.sampler.inner_iters, 50);
        assert_eq!(cfg.hyper.gamma, 1.0);
        assert_eq!(cfg.family, Family::Poisson);
    }

    #[test]
    fn layering_order() {
        let mut b = ConfigBuilder::default();
        b.apply_text("preset = ion-channel\nmodel.k = 9 # trailing comment\n")
            .unwrap();
        b.apply_env(vec![
            (env_name("sampler.n_iter"), "40".to_string()),
            (env_name("sampler.burnin"), "10".to_string()),
        ])
        .unwrap();
        let cfg = b.build().unwrap();
        assert_eq!(cfg.family, Family::Gaussian);
        assert_eq!(cfg.hyper.k, 9);
        assert_eq!(cfg.sampler.n_iter, 40);
        assert_eq!(cfg.data.transform, Transform::LogStandardize);
        assert_eq!(env_name("sampler.n_iter"), "SHGP_SAMPLER_N_ITER");
    }

    #[test]
    fn presets_match_documented_truncations() {
        let mut b = ConfigBuilder::default();
        b.apply_text("preset = chipseq").unwrap();
        assert_eq!(b.build().unwrap().hyper.k, 20);
        let mut b = ConfigBuilder::default();
        b.apply_text("preset = ion-channel").unwrap();
        assert_eq!(b.build().unwrap().hyper.k, 15);
    }

    #[test]
    fn bad_input_is_a_config_error() {
        let mut b = ConfigBuilder::default();
        assert!(matches!(
            b.apply_text("nonsense.key = 1"),
            Err(ShgpError::Config(_))
        ));
        assert!(matches!(
            b.apply_text("no equals sign"),
            Err(ShgpError::Config(_))
        ));
        let mut b = ConfigBuilder::default();
        b.apply_text("sampler.burnin = 2000").unwrap();
        assert!(matches!(b.build(), Err(ShgpError::Config(_))));
        let mut b = ConfigBuilder::default();
        b.apply_text("data.holdout_fraction = 1.0").unwrap();
        assert!(b.build().is_err());
        let mut b = ConfigBuilder::default();
        b.apply_text("model.family = multinomial").unwrap();
        assert!(b.build().is_err());
    }

    #[test]
    fn hash_tracks_effective_values() {
        let a = ConfigBuilder::default().build().unwrap();
        let mut b = ConfigBuilder::default();
        b.apply_text("seed = 0").unwrap();
        assert_eq!(a.hash(), b.build().unwrap().hash());
        b.apply_text("seed = 1").unwrap();
        assert_ne!(a.hash(), b.build().unwrap().hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn chains_get_distinct_seeds_and_dirs() {
        let cfg = ConfigBuilder::default().build().unwrap();
        let c1 = cfg.for_chain(1).unwrap();
        assert_eq!(c1.sampler.seed, 1);
        assert!(c1.output.ends_with("chain_1"));
    }
}

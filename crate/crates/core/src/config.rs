//! Run configuration from a flat `key = value` file.
//!
//! Blank lines and lines starting with `#` are ignored. Later assignments
//! override earlier ones, so command-line overrides are applied with
//! [`RunConfig::set`] after the file is read.

use crate::basis::MonotoneBasis;
use crate::error::{Error, Result};
use crate::estimators::{default_lambda_grid, Link, PenaltyTarget};
use crate::exec::Execution;
use crate::io::DEFAULT_MIN_REPORTS;
use crate::multisite::{default_threshold, AnomalyConfig, McdOptions, VarianceFormula};
use crate::posterior::{GammaConvention, ModelOptions, PriorSpec, ProposalShape, SamplerSettings};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// How each site's smoothing parameter is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "values", rename_all = "lowercase")]
pub enum LambdaMode {
    /// Minimise GCV over `lambda_grid`.
    Gcv,
    /// One value for every site, or one per site in dataset order.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub q: usize,
    pub degree: usize,
    pub prior: PriorSpec,
    pub link: Link,
    pub penalty: PenaltyTarget,
    pub chains: usize,
    pub iterations: usize,
    pub warmup: usize,
    pub proposal: ProposalShape,
    pub seed: u64,
    pub lambda: LambdaMode,
    pub lambda_grid: Vec<f64>,
    pub horizon: usize,
    pub variance_formula: VarianceFormula,
    /// `None` uses `⌊(J + 3)/2⌋`.
    pub mcd_h: Option<usize>,
    pub mcd_starts: usize,
    pub mcd_initial_steps: usize,
    pub mcd_best: usize,
    pub anomaly_threshold: f64,
    pub rhat_gate: f64,
    pub min_reports: usize,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sampler = SamplerSettings::default();
        let mcd = McdOptions::default();
        RunConfig {
            t_min: 0.0,
            t_max: 180.0,
            q: 8,
            degree: 3,
            prior: PriorSpec::default(),
            link: Link::Logit,
            penalty: PenaltyTarget::default(),
            chains: sampler.chains,
            iterations: sampler.iterations,
            warmup: sampler.warmup,
            proposal: sampler.proposal,
            seed: sampler.seed,
            lambda: LambdaMode::Gcv,
            lambda_grid: default_lambda_grid(),
            horizon: 180,
            variance_formula: VarianceFormula::Corrected,
            mcd_h: mcd.h,
            mcd_starts: mcd.n_starts,
            mcd_initial_steps: mcd.initial_steps,
            mcd_best: mcd.n_best,
            anomaly_threshold: default_threshold(),
            rhat_gate: 1.1,
            min_reports: DEFAULT_MIN_REPORTS,
            jobs: 0,
        }
    }
}

/// Keys accepted by [`RunConfig::set`].
pub const CONFIG_KEYS: [&str; 27] = [
    "t_min",
    "t_max",
    "q",
    "degree",
    "prior.intercept_sd",
    "prior.shape",
    "prior.rate",
    "prior.convention",
    "link",
    "penalty",
    "chains",
    "iterations",
    "warmup",
    "proposal",
    "seed",
    "lambda",
    "lambda_grid",
    "horizon",
    "variance_formula",
    "mcd.h",
    "mcd.starts",
    "mcd.initial_steps",
    "mcd.best",
    "anomaly_threshold",
    "rhat_gate",
    "min_reports",
    "jobs",
];

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key} = {value:?}: {e}")))
}

fn list(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|v| num(key, v.trim())).collect()
}

fn choice<T: Copy>(key: &str, value: &str, options: &[(&str, T)]) -> Result<T> {
    options
        .iter()
        .find(|(name, _)| *name == value)
        .map(|(_, v)| *v)
        .ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            Error::Config(format!(
                "{key} = {value:?}: expected one of {}",
                names.join(", ")
            ))
        })
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            config
                .set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "t_min" => self.t_min = num(key, value)?,
            "t_max" => self.t_max = num(key, value)?,
            "q" => self.q = num(key, value)?,
            "degree" => self.degree = num(key, value)?,
            "prior.intercept_sd" => self.prior.intercept_sd = num(key, value)?,
            "prior.shape" => self.prior.increment_shape = num(key, value)?,
            "prior.rate" => self.prior.increment_rate = num(key, value)?,
            "prior.convention" => {
                self.prior.convention = choice(
                    key,
                    value,
                    &[
                        ("rate", GammaConvention::Rate),
                        ("scale", GammaConvention::Scale),
                    ],
                )?
            }
            "link" => {
                self.link = choice(
                    key,
                    value,
                    &[("logit", Link::Logit), ("probit", Link::Probit)],
                )?
            }
            "penalty" => {
                self.penalty = choice(
                    key,
                    value,
                    &[
                        ("increments", PenaltyTarget::Increments),
                        ("log-increments", PenaltyTarget::LogIncrements),
                    ],
                )?
            }
            "chains" => self.chains = num(key, value)?,
            "iterations" => self.iterations = num(key, value)?,
            "warmup" => self.warmup = num(key, value)?,
            "proposal" => {
                self.proposal = choice(
                    key,
                    value,
                    &[
                        ("dense", ProposalShape::Dense),
                        ("diagonal", ProposalShape::Diagonal),
                    ],
                )?
            }
            "seed" => self.seed = num(key, value)?,
            "lambda" => {
                self.lambda = if value == "gcv" {
                    LambdaMode::Gcv
                } else {
                    LambdaMode::Fixed(list(key, value)?)
                }
            }
            "lambda_grid" => self.lambda_grid = list(key, value)?,
            "horizon" => self.horizon = num(key, value)?,
            "variance_formula" => {
                self.variance_formula = choice(
                    key,
                    value,
                    &[
                        ("corrected", VarianceFormula::Corrected),
                        ("paper", VarianceFormula::Paper),
                    ],
                )?
            }
            "mcd.h" => {
                self.mcd_h = if value == "auto" {
                    None
                } else {
                    Some(num(key, value)?)
                }
            }
            "mcd.starts" => self.mcd_starts = num(key, value)?,
            "mcd.initial_steps" => self.mcd_initial_steps = num(key, value)?,
            "mcd.best" => self.mcd_best = num(key, value)?,
            "anomaly_threshold" => self.anomaly_threshold = num(key, value)?,
            "rhat_gate" => self.rhat_gate = num(key, value)?,
            "min_reports" => self.min_reports = num(key, value)?,
            "jobs" => self.jobs = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.basis()?;
        self.prior.validate()?;
        self.sampler().validate()?;
        if let LambdaMode::Fixed(v) = &self.lambda {
            if v.is_empty() || v.iter().any(|l| !(*l >= 0.0)) {
                return Err(Error::Config(
                    "fixed smoothing parameters must be nonnegative".into(),
                ));
            }
        }
        if self.lambda_grid.is_empty() || self.lambda_grid.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::Config(
                "lambda_grid must be a nonempty list of nonnegative values".into(),
            ));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if !(self.anomaly_threshold >= 0.0) || !(self.rhat_gate > 1.0) {
            return Err(Error::Config(
                "anomaly_threshold must be >= 0 and rhat_gate > 1".into(),
            ));
        }
        Ok(())
    }

    pub fn execution(&self) -> Execution {
        if self.jobs == 1 {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }

    pub fn basis(&self) -> Result<MonotoneBasis> {
        MonotoneBasis::new(self.t_min, self.t_max, self.q, self.degree)
    }

    pub fn model(&self) -> ModelOptions {
        ModelOptions {
            link: self.link,
            penalty: self.penalty,
        }
    }

    pub fn sampler(&self) -> SamplerSettings {
        SamplerSettings {
            chains: self.chains,
            iterations: self.iterations,
            warmup: self.warmup,
            seed: self.seed,
            proposal: self.proposal,
            execution: self.execution(),
        }
    }

    pub fn anomaly(&self) -> AnomalyConfig {
        AnomalyConfig {
            link: self.link,
            horizon: self.horizon,
            formula: self.variance_formula,
            mcd: McdOptions {
                h: self.mcd_h,
                n_starts: self.mcd_starts,
                initial_steps: self.mcd_initial_steps,
                n_best: self.mcd_best,
                seed: self.seed,
                ..McdOptions::default()
            },
            threshold: self.anomaly_threshold,
            execution: self.execution(),
        }
    }

    /// Smoothing parameters for `n_sites` sites under a fixed mode.
    pub fn fixed_lambdas(&self, n_sites: usize) -> Option<Result<Vec<f64>>> {
        match &self.lambda {
            LambdaMode::Gcv => None,
            LambdaMode::Fixed(v) if v.len() == 1 => Some(Ok(vec![v[0]; n_sites])),
            LambdaMode::Fixed(v) if v.len() == n_sites => Some(Ok(v.clone())),
            LambdaMode::Fixed(v) => Some(Err(Error::Config(format!(
                "{} fixed smoothing parameters for {n_sites} sites",
                v.len()
            )))),
        }
    }
}

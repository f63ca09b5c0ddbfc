//! Posterior sampling for the multi-site monotone-spline model.
//!
//! Sites share no parameters, so the joint posterior factorises and each
//! (chain, site) pair is sampled independently on its own random stream. The
//! stream is keyed by the site identifier, not its position, so sampling a
//! subset or a permutation of the sites reproduces the same per-site draws.

mod bands;
pub mod diagnostics;
mod draws;
mod prior;
pub mod sampler;

pub use bands::{curve_bands, CurveBand};
pub use diagnostics::{batch_means_se, quantile, split_rhat, Rhat};
pub use draws::{MapDraw, PosteriorDraws, RhatEntry, DRAWS_CSV_HEADER};
pub use prior::{GammaConvention, PriorSpec};
pub use sampler::{run_chain, ChainDraws, LogDensity, ProposalShape};

use crate::basis::MonotoneBasis;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{fit_spline_gcv, Link, PenaltyTarget, SplineObjective, SplineOptions};
use crate::exec::Execution;
use crate::rng;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

impl LogDensity for SplineObjective {
    fn dim(&self) -> usize {
        SplineObjective::dim(self)
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        self.value(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerSettings {
    pub chains: usize,
    /// Total iterations per chain, warm-up included.
    pub iterations: usize,
    pub warmup: usize,
    pub seed: u64,
    pub proposal: ProposalShape,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        SamplerSettings {
            chains: 10,
            iterations: 3000,
            warmup: 2500,
            seed: 1,
            proposal: ProposalShape::Dense,
            execution: Execution::default(),
        }
    }
}

impl SamplerSettings {
    pub fn kept(&self) -> usize {
        self.iterations - self.warmup
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::Config("at least one chain is required".into()));
        }
        if self.iterations <= self.warmup {
            return Err(Error::Config(format!(
                "iterations ({}) must exceed warm-up ({})",
                self.iterations, self.warmup
            )));
        }
        Ok(())
    }
}

/// Link and penalty shared by every site's likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ModelOptions {
    pub link: Link,
    pub penalty: PenaltyTarget,
}

fn site_key(site_id: &str) -> u64 {
    // FNV-1a
    site_id.bytes().fold(0xcbf2_9ce4_8422_2325_u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Negative Hessian of `objective` by central differences of its gradient.
fn observed_information(objective: &SplineObjective, at: &[f64]) -> DMatrix<f64> {
    let q = at.len();
    let mut info = DMatrix::zeros(q, q);
    let mut x = at.to_vec();
    let mut gp = vec![0.0; q];
    let mut gm = vec![0.0; q];
    for j in 0..q {
        let h = 1e-5 * (1.0 + at[j].abs());
        x[j] = at[j] + h;
        objective.value_and_gradient(&x, &mut gp);
        x[j] = at[j] - h;
        objective.value_and_gradient(&x, &mut gm);
        x[j] = at[j];
        for i in 0..q {
            info[(i, j)] = -(gp[i] - gm[i]) / (2.0 * h);
        }
    }
    (&info + info.transpose()) * 0.5
}

/// Mode and Laplace covariance used to start and scale the chains.
fn laplace_start(objective: &SplineObjective) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let (mode, _, _) = objective.maximize()?;
    let q = mode.len();
    let info = observed_information(objective, &mode);
    let cov = info
        .cholesky()
        .map(|c| c.inverse())
        .filter(|c| c.iter().all(|v| v.is_finite()))
        .unwrap_or_else(|| DMatrix::identity(q, q) * 0.1);
    Ok((mode, cov))
}

/// Per-site smoothing parameters chosen by GCV over `grid`, using the same
/// likelihood, penalty and prior as the sampler.
pub fn select_lambdas(
    data: &Dataset,
    basis: &MonotoneBasis,
    prior: &PriorSpec,
    model: ModelOptions,
    grid: &[f64],
    execution: Execution,
) -> Result<Vec<f64>> {
    let options = SplineOptions {
        link: model.link,
        penalty: model.penalty,
        prior: Some(*prior),
        ..Default::default()
    };
    execution
        .map(data.len(), |j| {
            fit_spline_gcv(&data.sites[j], basis, grid, &options).map(|f| f.lambda)
        })
        .into_iter()
        .collect()
}

/// Draw from the posterior of every site.
///
/// `lambdas[j]` is the smoothing parameter of site `j`. Chains start from
/// overdispersed draws around the site's posterior mode.
pub fn sample_posterior(
    data: &Dataset,
    basis: &MonotoneBasis,
    prior: &PriorSpec,
    lambdas: &[f64],
    model: ModelOptions,
    settings: &SamplerSettings,
) -> Result<PosteriorDraws> {
    settings.validate()?;
    prior.validate()?;
    if data.is_empty() {
        return Err(Error::Precondition("dataset has no sites".into()));
    }
    if lambdas.len() != data.len() {
        return Err(Error::Config(format!(
            "{} smoothing parameters for {} sites",
            lambdas.len(),
            data.len()
        )));
    }
    if let Some(site) = data.sites.iter().find(|s| s.is_empty()) {
        return Err(Error::Precondition(format!(
            "site {} has no reports",
            site.site_id
        )));
    }
    let options = SplineOptions {
        link: model.link,
        penalty: model.penalty,
        prior: Some(*prior),
        ..Default::default()
    };
    let objectives = data
        .sites
        .iter()
        .zip(lambdas)
        .map(|(site, &lambda)| SplineObjective::new(site, basis, lambda, options))
        .collect::<Result<Vec<_>>>()?;

    let starts = settings
        .execution
        .map(objectives.len(), |j| laplace_start(&objectives[j]))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let n_sites = objectives.len();
    let keys: Vec<u64> = data.sites.iter().map(|s| site_key(&s.site_id)).collect();
    let jobs = settings.chains * n_sites;
    let chains = settings
        .execution
        .map(jobs, |job| {
            let (chain, site) = (job / n_sites, job % n_sites);
            let mut r = rng::stream(settings.seed, &[chain as u64, keys[site]]);
            let (mode, cov) = &starts[site];
            let chol = cov
                .clone()
                .cholesky()
                .map(|c| c.l())
                .unwrap_or_else(|| DMatrix::identity(mode.len(), mode.len()));
            let z = DVector::from_iterator(
                mode.len(),
                (0..mode.len()).map(|_| r.sample::<f64, _>(StandardNormal)),
            );
            let jitter = chol * z * 2.0;
            let mut init: Vec<f64> = mode.iter().zip(jitter.iter()).map(|(m, j)| m + j).collect();
            if !objectives[site].value(&init).is_finite() {
                init = mode.clone();
            }
            run_chain(
                &objectives[site],
                &init,
                cov,
                settings.proposal,
                settings.warmup,
                settings.kept(),
                &mut r,
            )
            .map_err(|e| {
                Error::Sampler(format!(
                    "chain {chain}, site {}: {e}",
                    data.sites[site].site_id
                ))
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    Ok(PosteriorDraws::assemble(
        data.site_ids(),
        basis.dim(),
        settings.chains,
        settings.kept(),
        settings.warmup,
        &chains,
    ))
}

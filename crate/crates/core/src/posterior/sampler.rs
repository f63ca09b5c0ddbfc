//! Adaptive random-walk Metropolis.
//!
//! During warm-up the proposal covariance is re-estimated from the chain's
//! own history and the global step scale is tuned towards an acceptance rate
//! inside [0.23, 0.44]. Both are frozen when warm-up ends; only draws from
//! the fixed kernel are kept. Each proposal is a Gaussian step at the adapted
//! scale or, with small probability, at a random fraction of it.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// An unnormalised log density on ℝᵈ.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;
    fn log_density(&self, x: &[f64]) -> f64;
}

/// Shape of the adapted proposal covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProposalShape {
    Diagonal,
    #[default]
    Dense,
}

const TARGET_ACCEPT: f64 = 0.3;
const WINDOW: usize = 50;
/// Probability of a short step, whose relative size is log-uniform on
/// `[10^SHORT_STEP_MIN_LOG10, 1]`. The scale is drawn independently of the
/// state, so the mixture stays symmetric; short steps keep the chain moving
/// through narrow ridges where the adapted global scale is too large.
const SHORT_STEP_PROB: f64 = 0.3;
const SHORT_STEP_MIN_LOG10: f64 = -2.5;

#[derive(Debug, Clone)]
pub struct ChainDraws {
    /// `kept × dim`, row-major.
    pub samples: Vec<f64>,
    pub log_density: Vec<f64>,
    /// Acceptance rate over the kept iterations.
    pub acceptance: f64,
}

struct Proposal {
    chol: DMatrix<f64>,
    scale: f64,
}

impl Proposal {
    fn new(cov: &DMatrix<f64>, shape: ProposalShape) -> Option<Self> {
        let d = cov.nrows();
        let mut c = match shape {
            ProposalShape::Dense => cov.clone(),
            ProposalShape::Diagonal => DMatrix::from_diagonal(&cov.diagonal()),
        };
        let jitter = 1e-10 * (1.0 + c.diagonal().amax());
        for i in 0..d {
            c[(i, i)] += jitter;
        }
        let chol = c.cholesky()?.l();
        Some(Proposal {
            chol,
            scale: 2.38 / (d as f64).sqrt(),
        })
    }

    fn draw(&self, x: &[f64], rng: &mut impl Rng) -> Vec<f64> {
        let z = DVector::from_iterator(
            x.len(),
            (0..x.len()).map(|_| rng.sample::<f64, _>(StandardNormal)),
        );
        let scale = if rng.random::<f64>() < SHORT_STEP_PROB {
            self.scale * 10f64.powf(SHORT_STEP_MIN_LOG10 * rng.random::<f64>())
        } else {
            self.scale
        };
        let step = &self.chol * z * scale;
        x.iter().zip(step.iter()).map(|(a, b)| a + b).collect()
    }
}

fn covariance(history: &[Vec<f64>]) -> DMatrix<f64> {
    let d = history[0].len();
    let n = history.len() as f64;
    let mean = history.iter().fold(DVector::zeros(d), |acc, h| {
        acc + DVector::from_column_slice(h)
    }) / n;
    let mut cov = DMatrix::zeros(d, d);
    for h in history {
        let c = DVector::from_column_slice(h) - &mean;
        cov += &c * c.transpose();
    }
    cov / (n - 1.0).max(1.0)
}

/// Run one chain from `init` with starting proposal covariance `init_cov`.
pub fn run_chain<T: LogDensity + ?Sized>(
    target: &T,
    init: &[f64],
    init_cov: &DMatrix<f64>,
    shape: ProposalShape,
    warmup: usize,
    keep: usize,
    rng: &mut impl Rng,
) -> Result<ChainDraws> {
    let d = target.dim();
    if init.len() != d || init_cov.nrows() != d || init_cov.ncols() != d {
        return Err(Error::Sampler(format!(
            "initial state or covariance does not have dimension {d}"
        )));
    }
    let mut x = init.to_vec();
    let mut lp = target.log_density(&x);
    if !lp.is_finite() {
        return Err(Error::Sampler(format!(
            "log density is not finite at the initial state ({lp})"
        )));
    }
    let mut proposal = Proposal::new(init_cov, shape).ok_or_else(|| {
        Error::Sampler("initial proposal covariance is not positive definite".into())
    })?;

    let mut history: Vec<Vec<f64>> = Vec::with_capacity(warmup);
    let mut window_accepts = 0usize;
    let mut log_scale_adj = 0.0_f64;
    for it in 0..warmup {
        let cand = proposal.draw(&x, rng);
        let lc = target.log_density(&cand);
        if lc.is_finite() && rng.random::<f64>().ln() < lc - lp {
            x = cand;
            lp = lc;
            window_accepts += 1;
        }
        history.push(x.clone());
        if (it + 1) % WINDOW == 0 {
            let rate = window_accepts as f64 / WINDOW as f64;
            if window_accepts == 0 && it + 1 >= 4 * WINDOW {
                return Err(Error::Sampler(format!(
                    "no proposals accepted in warm-up iterations {}..{} (step scale {:.3e}, log density {lp:.4})",
                    it + 1 - WINDOW,
                    it + 1,
                    proposal.scale
                )));
            }
            // Robbins–Monro on the log step scale.
            let gain = 1.0 / ((it + 1) as f64 / WINDOW as f64).sqrt();
            log_scale_adj += gain * (rate - TARGET_ACCEPT) * 2.0;
            if rate == 0.0 {
                log_scale_adj -= 1.0;
            }
            // Re-estimate the covariance from the latter half of the history.
            if it + 1 >= 4 * WINDOW {
                let recent = &history[history.len() / 2..];
                if let Some(p) = Proposal::new(&covariance(recent), shape) {
                    proposal = p;
                }
            }
            proposal.scale = 2.38 / (d as f64).sqrt() * log_scale_adj.exp();
            window_accepts = 0;
        }
    }

    let mut samples = Vec::with_capacity(keep * d);
    let mut log_density = Vec::with_capacity(keep);
    let mut accepted = 0usize;
    for _ in 0..keep {
        let cand = proposal.draw(&x, rng);
        let lc = target.log_density(&cand);
        if lc.is_finite() && rng.random::<f64>().ln() < lc - lp {
            x = cand;
            lp = lc;
            accepted += 1;
        }
        samples.extend_from_slice(&x);
        log_density.push(lp);
    }
    Ok(ChainDraws {
        samples,
        log_density,
        acceptance: if keep > 0 {
            accepted as f64 / keep as f64
        } else {
            f64::NAN
        },
    })
}

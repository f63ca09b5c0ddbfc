//! Penalised monotone-spline fit of binomial status counts.
//!
//! The target maximised here is also the unnormalised log posterior the
//! sampler explores, so [`SplineObjective`] is shared with the posterior
//! module.

use crate::basis::{dot, prefix_sums, transform, CoefficientVector, MonotoneBasis};
use crate::curve::{BloomCurve, CurveSource};
use crate::data::SiteCounts;
use crate::error::{Error, Result};
use crate::optim::{bfgs, BfgsOptions};
use crate::posterior::PriorSpec;
use crate::special::{inv_mills, ln_norm_cdf, logistic, logit, norm_cdf, softplus};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Outer link mapping `η(t)` to a probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    #[default]
    Logit,
    Probit,
}

impl Link {
    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            Link::Logit => logistic(eta),
            Link::Probit => norm_cdf(eta),
        }
    }

    fn link(self, p: f64) -> f64 {
        match self {
            Link::Logit => logit(p),
            Link::Probit => {
                statrs::function::erf::erf_inv(2.0 * p - 1.0) * std::f64::consts::SQRT_2
            }
        }
    }

    /// `(ln p, ln(1-p))`.
    fn ln_probs(self, eta: f64) -> (f64, f64) {
        match self {
            Link::Logit => (-softplus(-eta), -softplus(eta)),
            Link::Probit => (ln_norm_cdf(eta), ln_norm_cdf(-eta)),
        }
    }

    /// d/dη of `y ln p + (m-y) ln(1-p)`.
    fn score(self, eta: f64, m: f64, y: f64) -> f64 {
        match self {
            Link::Logit => y - m * logistic(eta),
            Link::Probit => y * inv_mills(eta) - (m - y) * inv_mills(-eta),
        }
    }

    /// Expected information per monitor at `η`.
    fn fisher_weight(self, eta: f64) -> f64 {
        match self {
            Link::Logit => {
                let p = logistic(eta);
                p * (1.0 - p)
            }
            Link::Probit => inv_mills(eta) * inv_mills(-eta),
        }
    }
}

/// Which coefficient vector the difference penalty is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyTarget {
    /// `βᵀPβ`: differences of adjacent log-increments.
    LogIncrements,
    /// `β̃ᵀPβ̃`: differences of adjacent increments, i.e. second differences
    /// of the cumulative spline coefficients (a second-derivative penalty).
    #[default]
    Increments,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplineOptions {
    pub link: Link,
    pub penalty: PenaltyTarget,
    /// `None` fits the penalised likelihood without a prior.
    pub prior: Option<PriorSpec>,
    pub max_iter: usize,
}

impl Default for SplineOptions {
    fn default() -> Self {
        SplineOptions {
            link: Link::Logit,
            penalty: PenaltyTarget::Increments,
            prior: Some(PriorSpec::default()),
            max_iter: 500,
        }
    }
}

/// Log-likelihood + log-prior − λ·penalty/2 for one site.
#[derive(Debug, Clone)]
pub struct SplineObjective {
    basis: MonotoneBasis,
    /// `B(t_i)ᵀ S` per observation.
    rows: Vec<Vec<f64>>,
    monitors: Vec<f64>,
    positives: Vec<f64>,
    lambda: f64,
    options: SplineOptions,
    include_likelihood: bool,
}

impl SplineObjective {
    pub fn new(
        data: &SiteCounts,
        basis: &MonotoneBasis,
        lambda: f64,
        options: SplineOptions,
    ) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be a nonnegative number, got {lambda}"
            )));
        }
        if let Some(prior) = &options.prior {
            prior.validate()?;
        }
        let rows = data
            .days
            .iter()
            .map(|&d| basis.monotone_row(d as f64))
            .collect::<Result<Vec<_>>>()?;
        Ok(SplineObjective {
            basis: basis.clone(),
            rows,
            monitors: data.monitors.iter().map(|&m| m as f64).collect(),
            positives: data.positives.iter().map(|&y| y as f64).collect(),
            lambda,
            options,
            include_likelihood: true,
        })
    }

    /// Prior and penalty only; used to check the sampler against known
    /// prior moments.
    pub fn without_likelihood(mut self) -> Self {
        self.include_likelihood = false;
        self
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn options(&self) -> &SplineOptions {
        &self.options
    }

    pub fn basis(&self) -> &MonotoneBasis {
        &self.basis
    }

    fn penalized_vector(&self, beta: &[f64], tilde: &[f64]) -> Vec<f64> {
        match self.options.penalty {
            PenaltyTarget::LogIncrements => beta.to_vec(),
            PenaltyTarget::Increments => {
                let mut v = tilde.to_vec();
                v[0] = beta[0];
                v
            }
        }
    }

    /// `vᵀPv` for whichever vector is penalised.
    pub fn penalty(&self, beta: &[f64]) -> f64 {
        let tilde = transform(beta);
        self.basis.penalty(&self.penalized_vector(beta, &tilde))
    }

    pub fn log_likelihood(&self, beta: &[f64]) -> f64 {
        let tilde = transform(beta);
        self.rows
            .iter()
            .zip(self.monitors.iter().zip(&self.positives))
            .map(|(row, (&m, &y))| {
                let (lp, lq) = self.options.link.ln_probs(dot(row, &tilde));
                let a = if y > 0.0 { y * lp } else { 0.0 };
                let b = if m - y > 0.0 { (m - y) * lq } else { 0.0 };
                a + b
            })
            .sum()
    }

    pub fn value(&self, beta: &[f64]) -> f64 {
        let mut v = -0.5 * self.lambda * self.penalty(beta);
        if self.include_likelihood {
            v += self.log_likelihood(beta);
        }
        if let Some(prior) = &self.options.prior {
            v += prior.log_density(beta);
        }
        v
    }

    /// Value and gradient with respect to `β`.
    pub fn value_and_gradient(&self, beta: &[f64], grad: &mut [f64]) -> f64 {
        let q = beta.len();
        let tilde = transform(beta);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut value = 0.0;

        if self.include_likelihood {
            // Accumulate ∂ℓ/∂β̃ first, then apply the chain rule once.
            let mut g_tilde = vec![0.0; q];
            for (row, (&m, &y)) in self
                .rows
                .iter()
                .zip(self.monitors.iter().zip(&self.positives))
            {
                let eta = dot(row, &tilde);
                let (lp, lq) = self.options.link.ln_probs(eta);
                if y > 0.0 {
                    value += y * lp;
                }
                if m - y > 0.0 {
                    value += (m - y) * lq;
                }
                let s = self.options.link.score(eta, m, y);
                for (g, r) in g_tilde.iter_mut().zip(row) {
                    *g += s * r;
                }
            }
            for k in 0..q {
                grad[k] += g_tilde[k] * if k == 0 { 1.0 } else { tilde[k] };
            }
        }

        let pv = self.penalized_vector(beta, &tilde);
        value -= 0.5 * self.lambda * self.basis.penalty(&pv);
        let pg = self.basis.penalty_grad(&pv);
        for k in 0..q {
            let chain = match self.options.penalty {
                PenaltyTarget::LogIncrements => 1.0,
                PenaltyTarget::Increments if k == 0 => 1.0,
                PenaltyTarget::Increments => tilde[k],
            };
            grad[k] -= self.lambda * pg[k] * chain;
        }

        if let Some(prior) = &self.options.prior {
            value += prior.log_density(beta);
            prior.add_gradient(beta, grad);
        }
        value
    }

    /// Effective degrees of freedom and deviance at `beta`, from the
    /// Fisher-scoring linearisation of the fit.
    fn influence(&self, beta: &[f64]) -> Result<(f64, f64)> {
        let q = beta.len();
        let tilde = transform(beta);
        let chain: Vec<f64> = (0..q)
            .map(|k| if k == 0 { 1.0 } else { tilde[k] })
            .collect();
        let n = self.rows.len();
        let jac = DMatrix::from_fn(n, q, |i, k| self.rows[i][k] * chain[k]);
        let mut w = DVector::zeros(n);
        let mut deviance = 0.0;
        for (i, row) in self.rows.iter().enumerate() {
            let eta = dot(row, &tilde);
            let (m, y) = (self.monitors[i], self.positives[i]);
            w[i] = m * self.options.link.fisher_weight(eta);
            let (lp, lq) = self.options.link.ln_probs(eta);
            if y > 0.0 {
                deviance += 2.0 * y * ((y / m).ln() - lp);
            }
            if m - y > 0.0 {
                deviance += 2.0 * (m - y) * (((m - y) / m).ln() - lq);
            }
        }
        let mut hess = jac.transpose() * DMatrix::from_diagonal(&w) * &jac;
        let pen = self.basis.penalty_matrix();
        let dpen = match self.options.penalty {
            PenaltyTarget::LogIncrements => pen,
            PenaltyTarget::Increments => {
                let d = DMatrix::from_diagonal(&DVector::from_vec(chain.clone()));
                &d * pen * &d
            }
        };
        hess += dpen * self.lambda;
        if let Some(prior) = &self.options.prior {
            for (k, c) in prior.curvature(beta).into_iter().enumerate() {
                hess[(k, k)] += c;
            }
        }
        for k in 0..q {
            hess[(k, k)] += 1e-10;
        }
        let chol = hess.cholesky().ok_or_else(|| {
            Error::Numeric("penalised information matrix is not positive definite".into())
        })?;
        // tr(A) = tr(J H⁻¹ Jᵀ W)
        let hj = chol.solve(&jac.transpose());
        let edf: f64 = (0..n)
            .map(|i| w[i] * jac.row(i).dot(&hj.column(i).transpose()))
            .sum();
        Ok((edf, deviance))
    }

    /// Generalised cross-validation score `n·D / (n − edf)²`.
    pub fn gcv(&self, beta: &[f64]) -> Result<f64> {
        let (edf, deviance) = self.influence(beta)?;
        let n = self.rows.len() as f64;
        let resid = (n - edf).max(1e-8);
        Ok(n * deviance / (resid * resid))
    }

    /// Deterministic starting points: a flat curve at the link of the
    /// empirical positive rate, and ramps crossing one half at 20%, 40%, 60%
    /// and 80% of the range.
    fn starts(&self) -> Vec<Vec<f64>> {
        let q = self.dim();
        let total_m: f64 = self.monitors.iter().sum();
        let total_y: f64 = self.positives.iter().sum();
        let rate = if total_m > 0.0 {
            (total_y / total_m).clamp(0.02, 0.98)
        } else {
            0.5
        };
        let mut flat = vec![(1e-3_f64).ln(); q];
        flat[0] = self.options.link.link(rate);
        let mut out = vec![flat];
        let g = self.basis.greville();
        let (lo, hi) = (self.basis.t_min(), self.basis.t_max());
        let slope = 8.0 / (hi - lo);
        for frac in [0.2, 0.4, 0.6, 0.8] {
            let center = lo + frac * (hi - lo);
            let mut beta = vec![0.0; q];
            beta[0] = slope * (g[0] - center);
            for k in 1..q {
                beta[k] = (slope * (g[k] - g[k - 1])).max(1e-3).ln();
            }
            out.push(beta);
        }
        out
    }

    /// Multi-start BFGS maximisation.
    pub fn maximize(&self) -> Result<(Vec<f64>, f64, bool)> {
        let opts = BfgsOptions {
            max_iter: self.options.max_iter,
            grad_tol: 1e-6,
        };
        let mut best: Option<(Vec<f64>, f64, bool)> = None;
        for start in self.starts() {
            let m = bfgs(
                |b, g| {
                    let v = self.value_and_gradient(b, g);
                    g.iter_mut().for_each(|x| *x = -*x);
                    -v
                },
                &start,
                opts,
            );
            if !m.value.is_finite() || m.x.iter().any(|v| !v.is_finite()) {
                continue;
            }
            let value = -m.value;
            if best.as_ref().is_none_or(|b| value > b.1) {
                best = Some((m.x, value, m.converged));
            }
        }
        best.ok_or_else(|| Error::Fit("optimizer diverged from every starting point".into()))
    }
}

/// Result of a single-site penalised fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplineFit {
    pub coef: CoefficientVector,
    pub lambda: f64,
    /// Penalised log posterior (or penalised log-likelihood without prior).
    pub objective: f64,
    pub gcv: Option<f64>,
    pub converged: bool,
    /// All reports negative or all positive.
    pub degenerate: bool,
    pub link: Link,
}

impl SplineFit {
    pub fn curve(&self, basis: &MonotoneBasis, horizon: usize) -> Result<BloomCurve> {
        spline_curve(basis, &self.coef, self.link, horizon)
    }
}

/// Basis rows for days `1..=horizon` (clamped to the basis range), reused
/// across many coefficient vectors.
#[derive(Debug, Clone)]
pub struct CurveGrid {
    rows: Vec<Vec<f64>>,
}

impl CurveGrid {
    pub fn new(basis: &MonotoneBasis, horizon: usize) -> Result<Self> {
        let rows = (1..=horizon)
            .map(|t| basis.eval_row((t as f64).clamp(basis.t_min(), basis.t_max())))
            .collect::<Result<_>>()?;
        Ok(CurveGrid { rows })
    }

    pub fn horizon(&self) -> usize {
        self.rows.len()
    }

    /// `F(t) = link⁻¹(η(t))` with `F(0) = 0`.
    pub fn curve(&self, coef: &[f64], link: Link) -> Result<BloomCurve> {
        let cum = prefix_sums(&transform(coef));
        let values = std::iter::once(0.0)
            .chain(self.rows.iter().map(|row| link.inverse(dot(row, &cum))))
            .collect();
        BloomCurve::from_values(values, CurveSource::Spline)
    }
}

/// `F(t) = link⁻¹(η(t))` on days `1..=horizon` (clamped to the basis range),
/// `F(0) = 0`.
pub fn spline_curve(
    basis: &MonotoneBasis,
    coef: &CoefficientVector,
    link: Link,
    horizon: usize,
) -> Result<BloomCurve> {
    CurveGrid::new(basis, horizon)?.curve(coef.as_slice(), link)
}

/// Penalised MAP fit at a fixed smoothing parameter.
pub fn fit_spline_map(
    data: &SiteCounts,
    basis: &MonotoneBasis,
    lambda: f64,
    options: &SplineOptions,
) -> Result<SplineFit> {
    if data.is_empty() {
        return Err(Error::Precondition(format!(
            "site {} has no reports",
            data.site_id
        )));
    }
    let objective = SplineObjective::new(data, basis, lambda, *options)?;
    let (beta, value, converged) = objective.maximize()?;
    let degenerate = data.is_degenerate();
    if degenerate {
        log::warn!(
            "site {}: all reports agree; fitted curve is boundary-flat",
            data.site_id
        );
    }
    Ok(SplineFit {
        coef: CoefficientVector(beta),
        lambda,
        objective: value,
        gcv: None,
        converged,
        degenerate,
        link: options.link,
    })
}

/// Smoothing grid `10^-3, …, 10^3`.
pub fn default_lambda_grid() -> Vec<f64> {
    (-3..=3).map(|e| 10f64.powi(e)).collect()
}

/// Fit at every `λ` in `grid` and keep the one with the smallest GCV score.
pub fn fit_spline_gcv(
    data: &SiteCounts,
    basis: &MonotoneBasis,
    grid: &[f64],
    options: &SplineOptions,
) -> Result<SplineFit> {
    if grid.is_empty() {
        return Err(Error::Config("empty smoothing-parameter grid".into()));
    }
    let mut best: Option<SplineFit> = None;
    let mut last_err = None;
    for &lambda in grid {
        let objective = SplineObjective::new(data, basis, lambda, *options)?;
        let fit = fit_spline_map(data, basis, lambda, options).and_then(|mut fit| {
            fit.gcv = Some(objective.gcv(&fit.coef.0)?);
            Ok(fit)
        });
        match fit {
            Ok(fit) => {
                if best.as_ref().is_none_or(|b| fit.gcv < b.gcv) {
                    best = Some(fit);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| {
        last_err.unwrap_or_else(|| Error::Fit("no smoothing parameter produced a fit".into()))
    })
}

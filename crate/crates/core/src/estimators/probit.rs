//! Probit regression of status reports on day, fitted by damped Newton on
//! standardised days.

use crate::curve::{BloomCurve, CurveSource};
use crate::data::VisitSeries;
use crate::error::{Error, Result};
use crate::special::{inv_mills, ln_norm_cdf, norm_cdf};
use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

const MAX_ITER: usize = 100;
const GRAD_TOL: f64 = 1e-8;
const DIVERGENCE_NORM: f64 = 1e4;

/// Ridge applied when a replication hits separation.
pub const DEFAULT_RIDGE: f64 = 1e-4;

/// `p(t) = Φ(alpha0 + alpha1·t)` on the raw day scale, plus the
/// standardised-scale coefficients the optimiser worked with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbitFit {
    pub alpha0: f64,
    pub alpha1: f64,
    pub std_alpha: [f64; 2],
    pub center: f64,
    pub scale: f64,
    pub ridge: f64,
    pub iterations: usize,
    pub log_likelihood: f64,
}

impl ProbitFit {
    pub fn cdf(&self, t: f64) -> f64 {
        norm_cdf(self.alpha0 + self.alpha1 * t)
    }

    /// Fitted curve on `0..=horizon`. Fails when the slope is negative beyond
    /// rounding, since a decreasing fit is not a CDF.
    pub fn curve(&self, horizon: usize) -> Result<BloomCurve> {
        if self.alpha1 < -1e-12 {
            return Err(Error::Fit(format!(
                "probit slope is negative ({})",
                self.alpha1
            )));
        }
        BloomCurve::from_fn(horizon, CurveSource::Probit, |t| self.cdf(t))
    }
}

/// Reports with no overlap between the days of negatives and positives.
fn separated(series: &VisitSeries) -> bool {
    let mut last_neg = None;
    let mut first_pos = None;
    let mut first_neg = None;
    let mut last_pos = None;
    for (d, y) in series.iter() {
        if y {
            first_pos.get_or_insert(d);
            last_pos = Some(d);
        } else {
            first_neg.get_or_insert(d);
            last_neg = Some(d);
        }
    }
    match (last_neg, first_pos, first_neg, last_pos) {
        (Some(ln), Some(fp), Some(fneg), Some(lp)) => ln < fp || lp < fneg,
        _ => true,
    }
}

struct Standardized {
    z: Vec<f64>,
    y: Vec<bool>,
    ridge: f64,
}

impl Standardized {
    /// Penalised log-likelihood, gradient and negative Hessian at `a`.
    fn eval(&self, a: Vector2<f64>) -> (f64, Vector2<f64>, Matrix2<f64>) {
        let mut ll = -0.5 * self.ridge * a.norm_squared();
        let mut g = -a * self.ridge;
        let mut h = Matrix2::identity() * self.ridge;
        for (&z, &y) in self.z.iter().zip(&self.y) {
            let eta = a[0] + a[1] * z;
            let x = Vector2::new(1.0, z);
            let (l, s, w) = if y {
                let r = inv_mills(eta);
                (ln_norm_cdf(eta), r, r * (r + eta))
            } else {
                let r = inv_mills(-eta);
                (ln_norm_cdf(-eta), -r, r * (r - eta))
            };
            ll += l;
            g += x * s;
            h += x * x.transpose() * w;
        }
        (ll, g, h)
    }
}

/// Maximise the probit log-likelihood minus `ridge·|α|²/2` (standardised
/// scale). With `ridge = 0` and separated data the MLE does not exist and
/// [`Error::Separation`] is returned.
pub fn fit_probit(series: &VisitSeries, ridge: f64) -> Result<ProbitFit> {
    if series.is_empty() {
        return Err(Error::Precondition(
            "probit fit needs at least one visit".into(),
        ));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::Config(format!(
            "ridge must be a nonnegative number, got {ridge}"
        )));
    }
    if ridge == 0.0 && separated(series) {
        return Err(Error::Separation);
    }
    let days: Vec<f64> = series.days().iter().map(|&d| d as f64).collect();
    fit_points(&days, series.reports(), ridge)
}

/// Newton iterations on arbitrary (possibly repeated) visit times.
pub(crate) fn fit_points(days: &[f64], reports: &[bool], ridge: f64) -> Result<ProbitFit> {
    let n = days.len() as f64;
    let center = days.iter().sum::<f64>() / n;
    let var = days.iter().map(|d| (d - center).powi(2)).sum::<f64>() / n;
    let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
    let prob = Standardized {
        z: days.iter().map(|d| (d - center) / scale).collect(),
        y: reports.to_vec(),
        ridge,
    };

    let mut a = Vector2::new(0.0, 0.0);
    let (mut ll, mut g, mut h) = prob.eval(a);
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let gnorm = g.amax();
        trace.push(gnorm);
        if gnorm < GRAD_TOL {
            break;
        }
        if iterations == MAX_ITER {
            let tail = trace.split_off(trace.len().saturating_sub(5));
            return Err(Error::NoConvergence {
                iterations,
                trace: tail,
            });
        }
        iterations += 1;
        let step = h
            .try_inverse()
            .map(|hi| hi * g)
            .filter(|s| s.iter().all(|v| v.is_finite()))
            .unwrap_or(g);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let trial = a + step * t;
            let (llt, gt, ht) = prob.eval(trial);
            if llt.is_finite() && llt >= ll {
                a = trial;
                ll = llt;
                g = gt;
                h = ht;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if a.norm() > DIVERGENCE_NORM {
            return Err(Error::Separation);
        }
        if !moved {
            let tail = trace.split_off(trace.len().saturating_sub(5));
            return Err(Error::NoConvergence {
                iterations,
                trace: tail,
            });
        }
    }

    Ok(ProbitFit {
        alpha0: a[0] - a[1] * center / scale,
        alpha1: a[1] / scale,
        std_alpha: [a[0], a[1]],
        center,
        scale,
        ridge,
        iterations,
        log_likelihood: ll + 0.5 * ridge * a.norm_squared(),
    })
}

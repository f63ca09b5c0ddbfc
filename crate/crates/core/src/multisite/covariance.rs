use crate::curve::BloomCurve;
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Tolerance on `F(T) = 1` at the horizon.
const HORIZON_TOL: f64 = 1e-6;

/// Diagonal formula for the bloom-day variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceFormula {
    /// `Σ 2t{1−F(t)} − (Σ{1−F(t)})²`, evaluated as printed.
    Paper,
    /// `Σ (2t+1){1−F(t)} − (Σ{1−F(t)})²`, the exact variance of an integer day.
    #[default]
    Corrected,
}

impl VarianceFormula {
    pub fn label(self) -> &'static str {
        match self {
            VarianceFormula::Paper => "paper",
            VarianceFormula::Corrected => "corrected",
        }
    }
}

fn check_horizon(curve: &BloomCurve, horizon: usize) -> Result<()> {
    if curve.horizon() < horizon {
        return Err(Error::Precondition(format!(
            "curve is tabulated to day {}, horizon is {horizon}",
            curve.horizon()
        )));
    }
    let value = curve.at(horizon);
    if value < 1.0 - HORIZON_TOL {
        return Err(Error::Horizon { horizon, value });
    }
    Ok(())
}

/// Variance of the bloom day implied by `curve`, summing over `t = 0..=horizon`.
pub fn variance_of(curve: &BloomCurve, horizon: usize, formula: VarianceFormula) -> Result<f64> {
    check_horizon(curve, horizon)?;
    let extra = match formula {
        VarianceFormula::Paper => 0.0,
        VarianceFormula::Corrected => 1.0,
    };
    let (mut second, mut first) = (0.0, 0.0);
    for t in 0..=horizon {
        let s = 1.0 - curve.at(t);
        second += (2.0 * t as f64 + extra) * s;
        first += s;
    }
    Ok(second - first * first)
}

/// Comonotone covariance `Σ_{t1} Σ_{t2} [min(F_j(t1), F_k(t2)) − F_j(t1) F_k(t2)]`.
///
/// Both curves are nondecreasing, so the double sum of minima is computed by a
/// single merge in `O(T)`.
pub fn covariance_of(a: &BloomCurve, b: &BloomCurve, horizon: usize) -> Result<f64> {
    check_horizon(a, horizon)?;
    check_horizon(b, horizon)?;
    let fa = &a.values()[..=horizon];
    let fb = &b.values()[..=horizon];
    let n = fb.len();
    let sum_b: f64 = fb.iter().sum();
    // For each a_s: Σ_t min(a_s, b_t) = Σ_{b_t < a_s} b_t + a_s · #{b_t ≥ a_s}.
    let mut below = 0usize;
    let mut below_sum = 0.0;
    let mut total = 0.0;
    for &x in fa {
        while below < n && fb[below] < x {
            below_sum += fb[below];
            below += 1;
        }
        total += below_sum + x * (n - below) as f64 - x * sum_b;
    }
    Ok(total)
}

/// Site-by-site covariance of bloom days, with the formula that produced the
/// diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub matrix: DMatrix<f64>,
    pub horizon: usize,
    pub formula: VarianceFormula,
}

impl CovarianceEstimate {
    pub fn from_curves(
        curves: &[BloomCurve],
        horizon: usize,
        formula: VarianceFormula,
    ) -> Result<Self> {
        let j = curves.len();
        let mut matrix = DMatrix::zeros(j, j);
        for a in 0..j {
            matrix[(a, a)] = variance_of(&curves[a], horizon, formula)?;
            for b in 0..a {
                let c = covariance_of(&curves[a], &curves[b], horizon)?;
                matrix[(a, b)] = c;
                matrix[(b, a)] = c;
            }
        }
        Ok(CovarianceEstimate {
            matrix,
            horizon,
            formula,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

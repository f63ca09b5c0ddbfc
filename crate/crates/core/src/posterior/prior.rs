use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

/// How the second Gamma hyperparameter is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaConvention {
    #[default]
    Rate,
    Scale,
}

/// Normal prior on the intercept, Gamma prior on each positive increment
/// `exp(β_k)`, `k > 1`. Densities are expressed in the unconstrained `β`
/// space, so each increment carries the Jacobian term `+β_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub intercept_sd: f64,
    pub increment_shape: f64,
    pub increment_rate: f64,
    #[serde(default)]
    pub convention: GammaConvention,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            intercept_sd: 50.0,
            increment_shape: 1.3,
            increment_rate: 0.3,
            convention: GammaConvention::Rate,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.intercept_sd, self.increment_shape, self.increment_rate]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "prior hyperparameters must be positive: {self:?}"
            )))
        }
    }

    /// Gamma rate actually applied.
    pub fn rate(&self) -> f64 {
        match self.convention {
            GammaConvention::Rate => self.increment_rate,
            GammaConvention::Scale => 1.0 / self.increment_rate,
        }
    }

    /// Mean of the increment prior, `shape / rate`.
    pub fn increment_mean(&self) -> f64 {
        self.increment_shape / self.rate()
    }

    /// Log prior density of `β` (including normalising constants).
    pub fn log_density(&self, beta: &[f64]) -> f64 {
        let sd = self.intercept_sd;
        let (a, b) = (self.increment_shape, self.rate());
        let mut lp =
            -0.5 * (beta[0] / sd).powi(2) - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        let norm = a * b.ln() - ln_gamma(a);
        for &bk in &beta[1..] {
            lp += norm + a * bk - b * bk.exp();
        }
        lp
    }

    /// Adds the gradient of [`log_density`](Self::log_density) into `grad`.
    pub fn add_gradient(&self, beta: &[f64], grad: &mut [f64]) {
        let (a, b) = (self.increment_shape, self.rate());
        grad[0] += -beta[0] / (self.intercept_sd * self.intercept_sd);
        for k in 1..beta.len() {
            grad[k] += a - b * beta[k].exp();
        }
    }

    /// Diagonal of the negative Hessian of the log density.
    pub fn curvature(&self, beta: &[f64]) -> Vec<f64> {
        let b = self.rate();
        beta.iter()
            .enumerate()
            .map(|(k, &bk)| {
                if k == 0 {
                    1.0 / (self.intercept_sd * self.intercept_sd)
                } else {
                    b * bk.exp()
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_validation() {
        let p = PriorSpec::default();
        assert!(p.validate().is_ok());
        assert!((p.increment_mean() - 1.3 / 0.3).abs() < 1e-12);
        let bad = PriorSpec {
            intercept_sd: 0.0,
            ..p
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let scale = PriorSpec {
            convention: GammaConvention::Scale,
            ..p
        };
        assert!((scale.increment_mean() - 1.3 * 0.3).abs() < 1e-12);
    }

    #[test]
    fn increment_density_is_gamma_after_change_of_variables() {
        // ∫ exp(log density) dβ over one increment must equal 1.
        let p = PriorSpec::default();
        let (a, b) = (p.increment_shape, p.rate());
        let norm = a * b.ln() - ln_gamma(a);
        let h = 1e-3;
        let mass: f64 = (0..40_000)
            .map(|i| -20.0 + h * (i as f64 + 0.5))
            .map(|x| (norm + a * x - b * x.exp()).exp() * h)
            .sum();
        assert!((mass - 1.0).abs() < 1e-6, "{mass}");
    }
}

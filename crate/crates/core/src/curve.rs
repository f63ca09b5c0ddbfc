//! Bloom curves: a CDF of event days tabulated on the integer grid.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Slack allowed for rounding when checking monotonicity and range.
const CURVE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveSource {
    Naive,
    Probit,
    Spline,
    Truth,
}

/// `F(t)` on days `0..=horizon`; index is the day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BloomCurve {
    values: Vec<f64>,
    source: CurveSource,
}

impl BloomCurve {
    /// Validates `0 <= F <= 1` and monotonicity. Rounding-level violations
    /// (below 1e-10) are clamped away.
    pub fn from_values(mut values: Vec<f64>, source: CurveSource) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Precondition("empty curve".into()));
        }
        let mut running = 0.0_f64;
        for (t, v) in values.iter_mut().enumerate() {
            if !v.is_finite() || *v < -CURVE_TOL || *v > 1.0 + CURVE_TOL {
                return Err(Error::Numeric(format!("F({t}) = {v} is not a probability")));
            }
            if t > 0 && *v < running - CURVE_TOL {
                return Err(Error::Numeric(format!(
                    "curve decreases at day {t}: {running} -> {v}"
                )));
            }
            *v = v.clamp(running, 1.0);
            running = *v;
        }
        Ok(BloomCurve { values, source })
    }

    /// Tabulate `f` on days `1..=horizon` with `F(0) = 0`.
    pub fn from_fn(horizon: usize, source: CurveSource, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = std::iter::once(0.0)
            .chain((1..=horizon).map(|t| f(t as f64)))
            .collect();
        Self::from_values(values, source)
    }

    pub fn source(&self) -> CurveSource {
        self.source
    }

    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `F(day)`, with `F = 1` past the horizon.
    pub fn at(&self, day: usize) -> f64 {
        self.values.get(day).copied().unwrap_or(1.0)
    }

    /// Place any mass not yet accounted for at the horizon: `F(T) = 1`.
    pub fn closed_at_horizon(mut self) -> Self {
        if let Some(last) = self.values.last_mut() {
            *last = 1.0;
        }
        self
    }

    pub fn median(&self) -> Option<u32> {
        median_of(self)
    }
}

/// First grid day `t >= 1` with `F(t) > 0.5`.
pub fn median_of(curve: &BloomCurve) -> Option<u32> {
    curve
        .values
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, &v)| v > 0.5)
        .map(|(t, _)| t as u32)
}

//! Convergence diagnostics over completed chains.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Split-R̂ for one scalar quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rhat {
    pub value: f64,
    /// Every half-chain had zero variance; `value` is set by convention
    /// (1 when the halves also agree, ∞ otherwise).
    pub zero_variance: bool,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Split-R̂ over `chains` (each chain's draws of one quantity, in order).
/// Each chain is cut into two halves before comparing between- and
/// within-sequence variance.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<Rhat> {
    if chains.len() < 2 {
        return Err(Error::Diagnostics(format!(
            "R-hat needs at least 2 chains, got {}",
            chains.len()
        )));
    }
    let n_total = chains.iter().map(Vec::len).min().unwrap_or(0);
    if n_total < 10 {
        return Err(Error::Diagnostics(format!(
            "R-hat needs at least 10 draws per chain, got {n_total}"
        )));
    }
    let half = n_total / 2;
    let seqs: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[n_total - half..n_total]])
        .collect();
    let n = half as f64;
    let means: Vec<f64> = seqs.iter().map(|s| mean(s)).collect();
    let w = seqs.iter().map(|s| sample_var(s)).sum::<f64>() / seqs.len() as f64;
    let b_over_n = sample_var(&means);
    if w <= 0.0 || !w.is_finite() {
        let value = if b_over_n <= 0.0 { 1.0 } else { f64::INFINITY };
        log::warn!("R-hat: zero within-chain variance, reporting {value}");
        return Ok(Rhat {
            value,
            zero_variance: true,
        });
    }
    let var_plus = (n - 1.0) / n * w + b_over_n;
    Ok(Rhat {
        value: (var_plus / w).sqrt(),
        zero_variance: false,
    })
}

/// Monte Carlo standard error of the mean by non-overlapping batch means.
pub fn batch_means_se(x: &[f64], batches: usize) -> f64 {
    let size = x.len() / batches.max(1);
    if size < 2 || batches < 2 {
        return f64::NAN;
    }
    let bm: Vec<f64> = x.chunks_exact(size).take(batches).map(mean).collect();
    (sample_var(&bm) / bm.len() as f64).sqrt()
}

/// Linearly interpolated sample quantile of sorted data (type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

/// Quantile of unsorted data; NaNs are ignored.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}

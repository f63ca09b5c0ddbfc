//! Clamped B-spline basis with the monotone shape transform and the
//! difference penalty shared by every spline fit.
//!
//! A fitted link is `η(t) = B(t)ᵀ S β̃` where `β̃ = [β₁, exp β₂, …, exp β_q]`
//! and `S` is the lower-triangular ones matrix, so `S β̃` is the running sum of
//! a free intercept and positive increments. Nondecreasing spline coefficients
//! give a nondecreasing spline.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Unconstrained spline coefficients `β`; component 0 is the intercept,
/// components 1.. are log-increments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector(pub Vec<f64>);

impl CoefficientVector {
    pub fn new(beta: Vec<f64>) -> Self {
        CoefficientVector(beta)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `β̃ = [β₁, exp β₂, …, exp β_q]`.
    pub fn transformed(&self) -> Vec<f64> {
        transform(&self.0)
    }

    /// `S β̃`: nondecreasing spline coefficients.
    pub fn cumulative(&self) -> Vec<f64> {
        prefix_sums(&self.transformed())
    }
}

pub(crate) fn transform(beta: &[f64]) -> Vec<f64> {
    beta.iter()
        .enumerate()
        .map(|(k, &b)| if k == 0 { b } else { b.exp() })
        .collect()
}

pub(crate) fn prefix_sums(v: &[f64]) -> Vec<f64> {
    v.iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonotoneBasis {
    t_min: f64,
    t_max: f64,
    degree: usize,
    q: usize,
    /// Full clamped knot vector, length `q + degree + 1`.
    knots: Vec<f64>,
}

impl MonotoneBasis {
    /// Clamped basis of dimension `q` and the given degree with equidistant
    /// breakpoints on `[t_min, t_max]`.
    pub fn new(t_min: f64, t_max: f64, q: usize, degree: usize) -> Result<Self> {
        if !(t_min.is_finite() && t_max.is_finite() && t_min < t_max) {
            return Err(Error::Config(format!(
                "basis range must satisfy t_min < t_max, got [{t_min}, {t_max}]"
            )));
        }
        if q < degree + 1 {
            return Err(Error::Config(format!(
                "basis dimension q = {q} is too small for degree {degree} (need q >= {})",
                degree + 1
            )));
        }
        if q < 2 {
            return Err(Error::Config("basis dimension must be at least 2".into()));
        }
        let intervals = q - degree;
        let width = (t_max - t_min) / intervals as f64;
        let mut knots = Vec::with_capacity(q + degree + 1);
        knots.extend(std::iter::repeat_n(t_min, degree + 1));
        knots.extend((1..intervals).map(|i| t_min + width * i as f64));
        knots.extend(std::iter::repeat_n(t_max, degree + 1));
        Ok(MonotoneBasis {
            t_min,
            t_max,
            degree,
            q,
            knots,
        })
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.q
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Distinct breakpoints, i.e. the equidistant grid including both ends.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for &k in &self.knots {
            if out.last() != Some(&k) {
                out.push(k);
            }
        }
        out
    }

    /// Greville abscissae, the natural location of each coefficient.
    pub fn greville(&self) -> Vec<f64> {
        (0..self.q)
            .map(|i| {
                self.knots[i + 1..=i + self.degree].iter().sum::<f64>() / self.degree.max(1) as f64
            })
            .map(|g| if self.degree == 0 { self.knots[0] } else { g })
            .collect()
    }

    /// `S`: `S[k][l] = 1` iff `k >= l`.
    pub fn shape_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.q, self.q, |k, l| if k >= l { 1.0 } else { 0.0 })
    }

    /// `P̃`: ones on the diagonal of rows 2..q-1 and minus ones on the first
    /// superdiagonal of rows 2..q (one-based), zero elsewhere.
    pub fn penalty_root(&self) -> DMatrix<f64> {
        let q = self.q;
        let mut m = DMatrix::zeros(q, q);
        for k in 1..q.saturating_sub(1) {
            m[(k, k)] = 1.0;
            m[(k, k + 1)] = -1.0;
        }
        m
    }

    /// `P = P̃ᵀ P̃`.
    pub fn penalty_matrix(&self) -> DMatrix<f64> {
        let root = self.penalty_root();
        root.transpose() * root
    }

    /// `vᵀ P v = Σ_{k=2}^{q-1} (v_k - v_{k+1})²` (one-based), without forming `P`.
    pub fn penalty(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.q);
        (1..self.q.saturating_sub(1))
            .map(|k| (v[k] - v[k + 1]).powi(2))
            .sum()
    }

    /// `P v`, the gradient of `vᵀ P v / 2`.
    pub fn penalty_grad(&self, v: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.q];
        for k in 1..self.q.saturating_sub(1) {
            let d = v[k] - v[k + 1];
            g[k] += d;
            g[k + 1] -= d;
        }
        g
    }

    fn check(&self, t: f64) -> Result<()> {
        if t.is_nan() || t < self.t_min || t > self.t_max {
            Err(Error::Domain {
                day: t,
                min: self.t_min,
                max: self.t_max,
            })
        } else {
            Ok(())
        }
    }

    /// Index `i` of the knot span with `knots[i] <= t < knots[i+1]`; the right
    /// end of the range maps into the last non-empty span.
    fn span(&self, t: f64) -> usize {
        let p = self.degree;
        let n = self.q;
        if t >= self.knots[n] {
            return n - 1;
        }
        let (mut lo, mut hi) = (p, n);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if t < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// `B(t)`: all `q` basis functions at `t`.
    pub fn eval_row(&self, t: f64) -> Result<Vec<f64>> {
        self.check(t)?;
        let mut row = vec![0.0; self.q];
        self.fill_row(t, &mut row);
        Ok(row)
    }

    /// Cox–de Boor triangle over the `degree + 1` nonzero functions.
    fn fill_row(&self, t: f64, row: &mut [f64]) {
        let p = self.degree;
        let span = self.span(t);
        let k = &self.knots;
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = t - k[span + 1 - j];
            right[j] = k[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom > 0.0 { n[r] / denom } else { 0.0 };
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        row.iter_mut().for_each(|x| *x = 0.0);
        for (j, &v) in n.iter().enumerate() {
            row[span - p + j] = v;
        }
    }

    /// `B(t)ᵀ S`: suffix sums of the basis row. The link is this row dotted
    /// with `β̃`.
    pub fn monotone_row(&self, t: f64) -> Result<Vec<f64>> {
        let mut row = self.eval_row(t)?;
        let mut acc = 0.0;
        for x in row.iter_mut().rev() {
            acc += *x;
            *x = acc;
        }
        Ok(row)
    }

    /// `η(t) = B(t)ᵀ S β̃`.
    pub fn eval_link(&self, coef: &CoefficientVector, t: f64) -> Result<f64> {
        if coef.len() != self.q {
            return Err(Error::Config(format!(
                "coefficient vector has length {}, basis has dimension {}",
                coef.len(),
                self.q
            )));
        }
        let row = self.monotone_row(t)?;
        Ok(dot(&row, &coef.transformed()))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

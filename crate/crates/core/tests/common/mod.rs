//! Independent oracles, random generators and property checks shared by the
//! integration tests and the acceptance report.

#![allow(dead_code)]

use bloomcurve::basis::{CoefficientVector, MonotoneBasis};
use bloomcurve::curve::{BloomCurve, CurveSource};
use bloomcurve::data::SiteCounts;
use bloomcurve::estimators::{
    fit_probit, fit_spline_map, CurveGrid, Link, PenaltyTarget, SplineObjective, SplineOptions,
    DEFAULT_RIDGE,
};
use bloomcurve::multisite::{
    covariance_of, fast_mcd, variance_of, CovarianceEstimate, McdOptions, Point, VarianceFormula,
};
use bloomcurve::posterior::{PosteriorDraws, PriorSpec};
use bloomcurve::rng;
use bloomcurve::Error;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const HORIZON: usize = 180;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    rng::stream(seed, &[0x7e57])
}

pub fn paper_basis() -> MonotoneBasis {
    MonotoneBasis::new(0.0, 180.0, 8, 3).unwrap()
}

// ---------------------------------------------------------------------------
// Oracles

/// `B_{i,p}(t)` by the textbook recursion, with the convention that the last
/// function equals 1 at the right end of a clamped knot vector.
pub fn de_boor(knots: &[f64], degree: usize, i: usize, t: f64) -> f64 {
    let n_basis = knots.len() - degree - 1;
    let right_end = knots[knots.len() - 1];
    if t == right_end {
        return if i == n_basis - 1 { 1.0 } else { 0.0 };
    }
    if degree == 0 {
        return if knots[i] <= t && t < knots[i + 1] {
            1.0
        } else {
            0.0
        };
    }
    let mut v = 0.0;
    let d1 = knots[i + degree] - knots[i];
    if d1 > 0.0 {
        v += (t - knots[i]) / d1 * de_boor(knots, degree - 1, i, t);
    }
    let d2 = knots[i + degree + 1] - knots[i + 1];
    if d2 > 0.0 {
        v += (knots[i + degree + 1] - t) / d2 * de_boor(knots, degree - 1, i + 1, t);
    }
    v
}

/// Weighted pool-adjacent-violators fit of a nondecreasing sequence.
pub fn pava(y: &[f64], w: &[f64]) -> Vec<f64> {
    // Blocks of (mean, weight, length).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::new();
    for (&yi, &wi) in y.iter().zip(w) {
        blocks.push((yi, wi, 1));
        while blocks.len() > 1 && blocks[blocks.len() - 2].0 > blocks[blocks.len() - 1].0 {
            let (m2, w2, n2) = blocks.pop().unwrap();
            let (m1, w1, n1) = blocks.pop().unwrap();
            blocks.push(((m1 * w1 + m2 * w2) / (w1 + w2), w1 + w2, n1 + n2));
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, _, n)| std::iter::repeat_n(m, n))
        .collect()
}

fn two_by_two_det(n: f64, sx: f64, sy: f64, sxx: f64, sxy: f64, syy: f64) -> f64 {
    let (mx, my) = (sx / n, sy / n);
    let cxx = sxx / n - mx * mx;
    let cyy = syy / n - my * my;
    let cxy = sxy / n - mx * my;
    cxx * cyy - cxy * cxy
}

/// Determinant of the maximum-likelihood covariance of `points[subset]`,
/// computed with centred sums.
pub fn subset_det(points: &[Point], subset: &[usize]) -> f64 {
    let n = subset.len() as f64;
    let mx = subset.iter().map(|&i| points[i][0]).sum::<f64>() / n;
    let my = subset.iter().map(|&i| points[i][1]).sum::<f64>() / n;
    let (mut cxx, mut cxy, mut cyy) = (0.0, 0.0, 0.0);
    for &i in subset {
        let (dx, dy) = (points[i][0] - mx, points[i][1] - my);
        cxx += dx * dx;
        cxy += dx * dy;
        cyy += dy * dy;
    }
    (cxx * cyy - cxy * cxy) / (n * n)
}

/// Exact minimum covariance determinant over every `h`-subset, by
/// depth-first enumeration with running sums. Returns the sorted support and
/// its determinant recomputed from centred sums.
pub fn exact_mcd(points: &[Point], h: usize) -> (Vec<usize>, f64) {
    struct Search<'a> {
        points: &'a [Point],
        h: usize,
        chosen: Vec<usize>,
        best: Vec<usize>,
        best_det: f64,
    }
    impl Search<'_> {
        fn go(&mut self, start: usize, s: [f64; 5]) {
            let depth = self.chosen.len();
            if depth == self.h {
                let d = two_by_two_det(self.h as f64, s[0], s[1], s[2], s[3], s[4]);
                if d < self.best_det {
                    self.best_det = d;
                    self.best.clone_from(&self.chosen);
                }
                return;
            }
            let last = self.points.len() - (self.h - depth);
            for i in start..=last {
                let [x, y] = self.points[i];
                self.chosen.push(i);
                self.go(
                    i + 1,
                    [s[0] + x, s[1] + y, s[2] + x * x, s[3] + x * y, s[4] + y * y],
                );
                self.chosen.pop();
            }
        }
    }
    let mut search = Search {
        points,
        h,
        chosen: Vec::with_capacity(h),
        best: Vec::new(),
        best_det: f64::INFINITY,
    };
    search.go(0, [0.0; 5]);
    let det = subset_det(points, &search.best);
    (search.best, det)
}

/// Exact moments of comonotone bloom days `(Q_a(U), Q_b(U))` with
/// `U ~ Uniform(0, 1)`: integrates the product of the two quantile functions
/// over the merged probability breakpoints. Returns `E[T_a T_b] − E[T_a] E[T_b]`.
pub fn comonotone_covariance(a: &BloomCurve, b: &BloomCurve) -> f64 {
    let mut cuts: Vec<f64> = a
        .values()
        .iter()
        .chain(b.values())
        .copied()
        .chain([0.0, 1.0])
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let quantile = |c: &BloomCurve, u: f64| {
        c.values()
            .iter()
            .position(|&f| f > u)
            .unwrap_or(c.values().len() - 1) as f64
    };
    let (mut ea, mut eb, mut eab) = (0.0, 0.0, 0.0);
    for w in cuts.windows(2) {
        let len = w[1] - w[0];
        if len <= 0.0 {
            continue;
        }
        let (ta, tb) = (quantile(a, w[0]), quantile(b, w[0]));
        ea += len * ta;
        eb += len * tb;
        eab += len * ta * tb;
    }
    eab - ea * eb
}

/// `E[T²] − E[T]²` from the probability mass function of the curve.
pub fn pmf_variance(c: &BloomCurve) -> f64 {
    let mut prev = 0.0;
    let (mut m1, mut m2) = (0.0, 0.0);
    for (t, &f) in c.values().iter().enumerate() {
        let p = f - prev;
        prev = f;
        m1 += p * t as f64;
        m2 += p * (t * t) as f64;
    }
    m2 - m1 * m1
}

/// Largest vertical distance between two empirical distribution functions.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// Central finite-difference gradient with a relative step.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|k| {
            let h = 1e-6 * x[k].abs().max(1.0);
            xp[k] = x[k] + h;
            let up = f(&xp);
            xp[k] = x[k] - h;
            let down = f(&xp);
            xp[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Generators

/// A random nondecreasing curve on `0..=horizon` with `F(horizon) = 1`:
/// a few ramps and jumps, sometimes with mass at day 0.
pub fn random_curve(r: &mut impl Rng, horizon: usize) -> BloomCurve {
    let mut mass = vec![0.0; horizon + 1];
    let pieces = r.random_range(1..=4);
    for _ in 0..pieces {
        let weight: f64 = r.random_range(0.05..1.0);
        if r.random_bool(0.3) {
            mass[r.random_range(0..=horizon)] += weight;
        } else {
            let a = r.random_range(0..horizon);
            let b = r.random_range(a + 1..=horizon);
            for m in &mut mass[a..=b] {
                *m += weight / (b - a + 1) as f64;
            }
        }
    }
    let total: f64 = mass.iter().sum();
    let mut acc = 0.0;
    let mut values: Vec<f64> = mass
        .iter()
        .map(|m| {
            acc += m / total;
            acc.min(1.0)
        })
        .collect();
    values[horizon] = 1.0;
    BloomCurve::from_values(values, CurveSource::Truth).unwrap()
}

/// Gaussian cloud with random correlation, optionally with a few far
/// outliers.
pub fn random_points(r: &mut impl Rng, j: usize, outliers: usize) -> Vec<Point> {
    let n = Normal::new(0.0, 1.0).unwrap();
    let rho: f64 = r.random_range(-0.9..0.9);
    let (sx, sy): (f64, f64) = (r.random_range(0.5..5.0), r.random_range(0.5..5.0));
    let (cx, cy): (f64, f64) = (r.random_range(-10.0..10.0), r.random_range(-10.0..10.0));
    (0..j)
        .map(|k| {
            let (z1, z2): (f64, f64) = (n.sample(r), n.sample(r));
            let p = [
                cx + sx * z1,
                cy + sy * (rho * z1 + (1.0 - rho * rho).sqrt() * z2),
            ];
            if k < outliers {
                [p[0] + 15.0 * sx, p[1] + 15.0 * sy]
            } else {
                p
            }
        })
        .collect()
}

pub fn random_beta(r: &mut impl Rng, q: usize) -> Vec<f64> {
    (0..q)
        .map(|k| {
            if k == 0 {
                r.random_range(-8.0..2.0)
            } else {
                r.random_range(-3.0..1.5)
            }
        })
        .collect()
}

/// One site with `n` distinct visit days and binomial counts drawn from a
/// normal bloom distribution.
pub fn random_site(r: &mut impl Rng, id: &str) -> SiteCounts {
    let n = r.random_range(5..=60);
    let mean: f64 = r.random_range(40.0..140.0);
    let sd: f64 = r.random_range(5.0..60.0);
    let monitors_max = r.random_range(1..=5);
    let mut days: Vec<u32> = rand::seq::index::sample(r, 180, n)
        .into_iter()
        .map(|d| d as u32 + 1)
        .collect();
    days.sort_unstable();
    let monitors: Vec<u32> = days
        .iter()
        .map(|_| r.random_range(1..=monitors_max))
        .collect();
    let positives = days
        .iter()
        .zip(&monitors)
        .map(|(&d, &m)| {
            let p = approx_norm_cdf((d as f64 - mean) / sd);
            (0..m).filter(|_| r.random_bool(p)).count() as u32
        })
        .collect();
    SiteCounts::new(id, days, monitors, positives).unwrap()
}

/// Standard normal CDF by the Abramowitz-Stegun erf approximation (error
/// below 1.5e-7), independent of the crate under test.
fn approx_norm_cdf(x: f64) -> f64 {
    let z = x.abs() / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.327_591_1 * z);
    let poly = t
        * (0.254_829_592
            + t * (-0.284_496_736 + t * (1.421_413_741 + t * (-1.453_152_027 + t * 1.061_405_429))));
    let erf = 1.0 - poly * (-z * z).exp();
    let p = 0.5 * (1.0 + erf);
    if x >= 0.0 {
        p.clamp(0.0, 1.0)
    } else {
        (1.0 - p).clamp(0.0, 1.0)
    }
}

// ---------------------------------------------------------------------------
// Property checks. Each returns `Err` with a description on a violation.

pub type Check = std::result::Result<(), String>;

pub fn check_partition_of_unity(q: usize, degree: usize, t: f64) -> Check {
    let basis = MonotoneBasis::new(0.0, 180.0, q, degree).map_err(|e| e.to_string())?;
    let row = basis.eval_row(t).map_err(|e| e.to_string())?;
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(format!("q={q} degree={degree} t={t}: sum {sum}"));
    }
    if row.iter().any(|&b| b < 0.0) {
        return Err(format!("q={q} degree={degree} t={t}: negative entry"));
    }
    Ok(())
}

pub fn check_link_monotone(beta: &[f64]) -> Check {
    let basis = MonotoneBasis::new(0.0, 180.0, beta.len(), 3).map_err(|e| e.to_string())?;
    let coef = CoefficientVector::new(beta.to_vec());
    let mut prev = f64::NEG_INFINITY;
    for t in 0..=180 {
        let eta = basis.eval_link(&coef, t as f64).map_err(|e| e.to_string())?;
        if eta < prev - 1e-10 * prev.abs().max(1.0) {
            return Err(format!("beta={beta:?}: eta({t}) = {eta} < {prev}"));
        }
        prev = eta;
    }
    Ok(())
}

fn check_valid_curve(curve: &BloomCurve, what: &str) -> Check {
    let v = curve.values();
    if let Some(t) = (0..v.len()).find(|&t| !(0.0..=1.0).contains(&v[t])) {
        return Err(format!("{what}: F({t}) = {}", v[t]));
    }
    if let Some(t) = (1..v.len()).find(|&t| v[t] < v[t - 1]) {
        return Err(format!("{what}: F decreases at {t}"));
    }
    Ok(())
}

/// Fit the spline and probit models to a random site; every fit that
/// succeeds must yield a valid CDF.
pub fn check_fitted_curves(seed: u64) -> Check {
    let mut r = seeded(seed);
    let site = random_site(&mut r, "s");
    let basis = paper_basis();
    let lambda = 10f64.powi(r.random_range(-3..=3));
    let options = SplineOptions {
        link: if r.random_bool(0.5) {
            Link::Logit
        } else {
            Link::Probit
        },
        penalty: if r.random_bool(0.8) {
            PenaltyTarget::Increments
        } else {
            PenaltyTarget::LogIncrements
        },
        prior: r.random_bool(0.5).then(PriorSpec::default),
        ..Default::default()
    };
    if let Ok(fit) = fit_spline_map(&site, &basis, lambda, &options) {
        let curve = fit.curve(&basis, HORIZON).map_err(|e| format!("seed {seed}: {e}"))?;
        check_valid_curve(&curve, &format!("seed {seed} spline"))?;
    }
    let series = bloomcurve::data::VisitSeries::new(
        site.days.clone(),
        site.positives.iter().map(|&y| y > 0).collect(),
    )
    .unwrap();
    let probit = match fit_probit(&series, 0.0) {
        Err(Error::Separation) | Err(Error::NoConvergence { .. }) => {
            fit_probit(&series, DEFAULT_RIDGE)
        }
        other => other,
    };
    // A negative slope is reported as a fit failure, not as a curve.
    match probit.and_then(|fit| fit.curve(HORIZON)) {
        Ok(curve) => check_valid_curve(&curve, &format!("seed {seed} probit"))?,
        Err(Error::Fit(_)) | Err(Error::Separation) | Err(Error::NoConvergence { .. }) => {}
        Err(e) => return Err(format!("seed {seed} probit: {e}")),
    }
    // Arbitrary coefficients through the shared grid must also be valid.
    let grid = CurveGrid::new(&basis, HORIZON).unwrap();
    let beta = random_beta(&mut r, 8);
    for link in [Link::Logit, Link::Probit] {
        let curve = grid
            .curve(&beta, link)
            .map_err(|e| format!("seed {seed} {link:?}: {e}"))?;
        check_valid_curve(&curve, &format!("seed {seed} coefficients"))?;
    }
    Ok(())
}

/// `covariance_of(c, c)` equals the corrected variance, and both equal the
/// variance of the probability mass function.
pub fn check_covariance_diagonal(seed: u64) -> Check {
    let mut r = seeded(seed);
    let c = random_curve(&mut r, HORIZON);
    let cov = covariance_of(&c, &c, HORIZON).map_err(|e| e.to_string())?;
    let var = variance_of(&c, HORIZON, VarianceFormula::Corrected).map_err(|e| e.to_string())?;
    let exact = pmf_variance(&c);
    let tol = 1e-9 * exact.abs().max(1.0);
    if (cov - var).abs() > tol || (var - exact).abs() > tol {
        return Err(format!(
            "seed {seed}: covariance {cov}, corrected variance {var}, exact {exact}"
        ));
    }
    Ok(())
}

/// The raw determinant never increases along any C-step trace.
pub fn check_cstep_monotone(seed: u64) -> Check {
    let mut r = seeded(seed);
    let j = r.random_range(6..=30);
    let outliers = r.random_range(0..=j / 4);
    let points = random_points(&mut r, j, outliers);
    let options = McdOptions {
        n_starts: 50,
        seed,
        ..Default::default()
    };
    let fit = match fast_mcd(&points, &options) {
        Ok(fit) => fit,
        Err(Error::Degenerate(_)) => return Ok(()),
        Err(e) => return Err(format!("seed {seed}: {e}")),
    };
    for (s, trace) in fit.traces.iter().enumerate() {
        for w in trace.windows(2) {
            if w[1] > w[0] * (1.0 + 1e-12) + 1e-300 {
                return Err(format!("seed {seed} start {s}: {} -> {}", w[0], w[1]));
            }
        }
    }
    Ok(())
}

/// Covariance matrix of random curves with the corrected diagonal.
pub fn random_covariance(r: &mut impl Rng, j: usize) -> CovarianceEstimate {
    let curves: Vec<BloomCurve> = (0..j).map(|_| random_curve(r, HORIZON)).collect();
    CovarianceEstimate::from_curves(&curves, HORIZON, VarianceFormula::Corrected).unwrap()
}

/// Objective for gradient checks: a random site with the default prior.
pub fn random_objective(r: &mut impl Rng, link: Link) -> SplineObjective {
    let site = random_site(r, "g");
    let lambda = 10f64.powi(r.random_range(-3..=3));
    let options = SplineOptions {
        link,
        ..Default::default()
    };
    SplineObjective::new(&site, &paper_basis(), lambda, options).unwrap()
}

/// Largest gradient error relative to `max(‖fd‖∞, 1)`.
pub fn gradient_error(objective: &SplineObjective, beta: &[f64]) -> f64 {
    let mut grad = vec![0.0; beta.len()];
    objective.value_and_gradient(beta, &mut grad);
    let fd = central_difference(|b| objective.value(b), beta);
    let scale = fd.iter().fold(1.0f64, |m, g| m.max(g.abs()));
    grad.iter()
        .zip(&fd)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / scale
}

/// Draws for one site and one coefficient laid out as `PosteriorDraws`.
pub fn constructed_draws(chains: &[Vec<f64>]) -> PosteriorDraws {
    let kept = chains[0].len();
    PosteriorDraws {
        site_ids: vec!["x".into()],
        dim: 1,
        chains: chains.len(),
        kept,
        warmup: 0,
        values: chains.concat(),
        log_posterior: vec![0.0; chains.len() * kept],
        site_log_posterior: vec![0.0; chains.len() * kept],
        acceptance: vec![],
    }
}

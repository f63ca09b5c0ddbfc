use crate::error::{Error, Result};
use crate::rng;
use rand::seq::index;
use serde::{Deserialize, Serialize};

/// Smallest raw determinant accepted as a non-degenerate scatter.
pub const MIN_DETERMINANT: f64 = 1e-12;

pub type Point = [f64; 2];
pub type Matrix2 = [[f64; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McdOptions {
    /// Subset size; `None` uses `⌊(J + 3)/2⌋`.
    pub h: Option<usize>,
    pub n_starts: usize,
    /// C-steps applied to every start.
    pub initial_steps: usize,
    /// Starts iterated to convergence.
    pub n_best: usize,
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for McdOptions {
    fn default() -> Self {
        McdOptions {
            h: None,
            n_starts: 500,
            initial_steps: 2,
            n_best: 10,
            max_steps: 100,
            seed: 0,
        }
    }
}

pub fn default_h(j: usize) -> usize {
    (j + 3) / 2
}

/// Robust location and scatter from the minimum-determinant `h`-subset.
#[derive(Debug, Clone, PartialEq)]
pub struct McdFit {
    pub center: Point,
    /// Consistency-rescaled scatter.
    pub scatter: Matrix2,
    /// Maximum-likelihood covariance of the support.
    pub raw_scatter: Matrix2,
    pub raw_determinant: f64,
    pub consistency: f64,
    /// Sorted indices of the `h` points in the best subset.
    pub support: Vec<usize>,
    /// Raw determinant after the initial subset and after each C-step, one
    /// sequence per start.
    pub traces: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Moments {
    pub mean: Point,
    pub cov: Matrix2,
}

impl Moments {
    pub fn of(points: &[Point], subset: &[usize]) -> Self {
        let n = subset.len() as f64;
        let mut mean = [0.0; 2];
        for &i in subset {
            mean[0] += points[i][0];
            mean[1] += points[i][1];
        }
        mean[0] /= n;
        mean[1] /= n;
        let mut cov = [[0.0; 2]; 2];
        for &i in subset {
            let d = [points[i][0] - mean[0], points[i][1] - mean[1]];
            cov[0][0] += d[0] * d[0];
            cov[0][1] += d[0] * d[1];
            cov[1][1] += d[1] * d[1];
        }
        cov[0][0] /= n;
        cov[0][1] /= n;
        cov[1][1] /= n;
        cov[1][0] = cov[0][1];
        Moments { mean, cov }
    }

    pub fn det(&self) -> f64 {
        det(&self.cov)
    }
}

pub fn det(m: &Matrix2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

fn inverse(m: &Matrix2) -> Option<Matrix2> {
    let d = det(m);
    (d > 0.0 && d.is_finite()).then(|| [[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]])
}

fn quad(inv: &Matrix2, center: &Point, x: &Point) -> f64 {
    let d = [x[0] - center[0], x[1] - center[1]];
    d[0] * (inv[0][0] * d[0] + inv[0][1] * d[1]) + d[1] * (inv[1][0] * d[0] + inv[1][1] * d[1])
}

/// Mahalanobis distance `√((x−μ)ᵀ S⁻¹ (x−μ))`.
pub fn mahalanobis(x: &Point, center: &Point, scatter: &Matrix2) -> Result<f64> {
    let inv = inverse(scatter)
        .ok_or_else(|| Error::Degenerate("scatter matrix is not positive definite".into()))?;
    Ok(quad(&inv, center, x).max(0.0).sqrt())
}

/// One C-step: the `h` points closest to `m` in its own metric, sorted by
/// index. `None` when `m` is singular.
pub fn concentrate(points: &[Point], m: &Point, cov: &Matrix2, h: usize) -> Option<Vec<usize>> {
    let inv = inverse(cov)?;
    let mut d: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, x)| (quad(&inv, m, x), i))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut subset: Vec<usize> = d[..h].iter().map(|&(_, i)| i).collect();
    subset.sort_unstable();
    Some(subset)
}

struct Run {
    subset: Vec<usize>,
    moments: Moments,
    trace: Vec<f64>,
    converged: bool,
}

impl Run {
    fn step(&mut self, points: &[Point], h: usize) {
        if self.converged {
            return;
        }
        match concentrate(points, &self.moments.mean, &self.moments.cov, h) {
            Some(next) if next != self.subset => {
                let m = Moments::of(points, &next);
                let before = self.moments.det();
                self.trace.push(m.det());
                if m.det() < before {
                    self.subset = next;
                    self.moments = m;
                } else {
                    self.converged = true;
                }
            }
            _ => self.converged = true,
        }
    }
}

/// Gaussian consistency factor `α / F_{χ²_4}(χ²_{2,α})` for coverage `α = h/J`.
pub fn consistency_factor(h: usize, j: usize) -> f64 {
    let alpha = h as f64 / j as f64;
    if alpha >= 1.0 {
        return 1.0;
    }
    let q = -2.0 * (1.0 - alpha).ln();
    let f4 = 1.0 - (-q / 2.0).exp() * (1.0 + q / 2.0);
    alpha / f4
}

/// FastMCD for points in the plane.
pub fn fast_mcd(points: &[Point], options: &McdOptions) -> Result<McdFit> {
    let j = points.len();
    if j < 4 {
        return Err(Error::Precondition(format!(
            "FastMCD needs at least 4 points, got {j}"
        )));
    }
    let h = options.h.unwrap_or_else(|| default_h(j));
    if h < default_h(j) || h > j {
        return Err(Error::Precondition(format!(
            "subset size {h} outside [{}, {j}]",
            default_h(j)
        )));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite point".into()));
    }
    if options.n_starts == 0 {
        return Err(Error::Config("FastMCD needs at least one start".into()));
    }

    let mut runs: Vec<Run> = if h == j {
        let all: Vec<usize> = (0..j).collect();
        let moments = Moments::of(points, &all);
        vec![Run {
            trace: vec![moments.det()],
            subset: all,
            moments,
            converged: true,
        }]
    } else {
        (0..options.n_starts)
            .filter_map(|s| {
                let mut r = rng::stream(options.seed, &[s as u64]);
                let order = index::sample(&mut r, j, j).into_vec();
                let mut size = 3;
                let mut m = Moments::of(points, &order[..size]);
                while m.det() <= 0.0 && size < j {
                    size += 1;
                    m = Moments::of(points, &order[..size]);
                }
                let subset = concentrate(points, &m.mean, &m.cov, h)?;
                let moments = Moments::of(points, &subset);
                Some(Run {
                    trace: vec![moments.det()],
                    subset,
                    moments,
                    converged: false,
                })
            })
            .collect()
    };
    if runs.is_empty() {
        return Err(Error::Degenerate("every initial subset is singular".into()));
    }
    for run in runs.iter_mut() {
        for _ in 0..options.initial_steps {
            run.step(points, h);
        }
    }
    let mut ranked: Vec<usize> = (0..runs.len()).collect();
    ranked.sort_by(|&a, &b| {
        runs[a]
            .moments
            .det()
            .total_cmp(&runs[b].moments.det())
            .then(a.cmp(&b))
    });
    ranked.truncate(options.n_best.max(1));
    for &i in &ranked {
        for _ in 0..options.max_steps {
            if runs[i].converged {
                break;
            }
            runs[i].step(points, h);
        }
    }
    let best = ranked
        .iter()
        .copied()
        .min_by(|&a, &b| {
            runs[a]
                .moments
                .det()
                .total_cmp(&runs[b].moments.det())
                .then(a.cmp(&b))
        })
        .expect("at least one run");
    let best_run = &runs[best];
    let raw_determinant = best_run.moments.det();
    if !(raw_determinant >= MIN_DETERMINANT) {
        return Err(Error::Degenerate(format!(
            "minimum covariance determinant {raw_determinant:e}"
        )));
    }
    let c = consistency_factor(h, j);
    let raw = best_run.moments.cov;
    Ok(McdFit {
        center: best_run.moments.mean,
        scatter: [
            [c * raw[0][0], c * raw[0][1]],
            [c * raw[1][0], c * raw[1][1]],
        ],
        raw_scatter: raw,
        raw_determinant,
        consistency: c,
        support: best_run.subset.clone(),
        traces: runs.into_iter().map(|r| r.trace).collect(),
    })
}

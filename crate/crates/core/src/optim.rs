//! Small dense BFGS minimiser with Armijo backtracking.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Converged when the gradient's ∞-norm drops below this.
    pub grad_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            max_iter: 500,
            grad_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Central differences of `f`, used when the analytic gradient is not finite.
pub fn numerical_gradient(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = 1e-6 * (1.0 + x[i].abs());
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i] - h;
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Minimise `f`. `fg(x, grad)` returns the value and writes the gradient.
pub fn bfgs<F>(mut fg: F, x0: &[f64], opts: BfgsOptions) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut eval = |x: &[f64], g: &mut [f64]| -> f64 {
        let v = fg(x, g);
        if v.is_finite() && g.iter().any(|d| !d.is_finite()) {
            let mut f_only = |y: &[f64]| {
                let mut scratch = vec![0.0; y.len()];
                fg(y, &mut scratch)
            };
            let ng = numerical_gradient(&mut f_only, x);
            g.copy_from_slice(&ng);
        }
        v
    };

    let mut x = DVector::from_column_slice(x0);
    let mut g = vec![0.0; n];
    let mut f = eval(x.as_slice(), &mut g);
    let mut grad = DVector::from_column_slice(&g);
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut scaled = false;
    let mut iterations = 0;

    if !f.is_finite() {
        return Minimum {
            x: x0.to_vec(),
            value: f,
            grad_norm: f64::INFINITY,
            iterations,
            converged: false,
        };
    }

    while iterations < opts.max_iter {
        if inf_norm(grad.as_slice()) < opts.grad_tol {
            break;
        }
        iterations += 1;
        let mut dir = -(&h_inv * &grad);
        let mut slope = dir.dot(&grad);
        if slope >= 0.0 {
            // Lost positive definiteness; restart from steepest descent.
            h_inv = DMatrix::identity(n, n);
            dir = -grad.clone();
            slope = dir.dot(&grad);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + &dir * step;
            let mut gt = vec![0.0; n];
            let ft = eval(trial.as_slice(), &mut gt);
            if ft.is_finite() && ft <= f + 1e-4 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            break;
        };
        let g_new = DVector::from_vec(g_new);
        let s = &x_new - &x;
        let y = &g_new - &grad;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if !scaled {
                h_inv *= sy / y.dot(&y);
                scaled = true;
            }
            let rho = 1.0 / sy;
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            // H ← H - ρ(H y sᵀ + s yᵀ H) + (ρ² yᵀHy + ρ) s sᵀ
            h_inv -= (&hy * s.transpose() + &s * hy.transpose()) * rho;
            h_inv += (&s * s.transpose()) * (rho * rho * yhy + rho);
        }
        let df = f - f_new;
        x = x_new;
        f = f_new;
        grad = g_new;
        if df.abs() <= 1e-15 * (1.0 + f.abs()) && s.amax() < 1e-12 {
            break;
        }
    }

    let grad_norm = inf_norm(grad.as_slice());
    Minimum {
        x: x.as_slice().to_vec(),
        value: f,
        grad_norm,
        iterations,
        converged: grad_norm < opts.grad_tol,
    }
}

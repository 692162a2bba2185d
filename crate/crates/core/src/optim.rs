//! Quasi-Newton minimization used by the likelihood fits.
//!
//! BFGS on the inverse Hessian with Armijo backtracking. The objective reports
//! infeasible points with a non-finite value or a value at or above
//! [`BARRIER`]; the line search simply refuses such steps.

/// Penalty returned for points outside the feasible region.
pub const BARRIER: f64 = 1e100;

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when the accepted step is below `step_tol * (1 + |x|_inf)`.
    pub step_tol: f64,
    /// Stop when `|grad|_inf <= grad_tol * (1 + |f|)`.
    pub grad_tol: f64,
    /// Largest coordinate move attempted by the first trial step.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            step_tol: 1e-8,
            grad_tol: 1e-9,
            max_step: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn feasible(v: f64) -> bool {
    v.is_finite() && v < BARRIER
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimize `f`, which returns the objective and writes the gradient into its
/// second argument.
pub fn bfgs<F>(mut f: F, x0: &[f64], opts: &BfgsOptions) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    if !feasible(fx) {
        return Minimum {
            x,
            value: fx,
            iterations: 0,
            converged: false,
        };
    }
    if n == 0 {
        return Minimum {
            x,
            value: fx,
            iterations: 0,
            converged: true,
        };
    }

    // Inverse Hessian approximation, row-major.
    let identity = |h: &mut Vec<f64>, scale: f64| {
        h.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            h[i * n + i] = scale;
        }
    };
    let mut h = vec![0.0; n * n];
    identity(&mut h, 1.0);
    let mut fresh = true;

    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut hy = vec![0.0; n];

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        if inf_norm(&g) <= opts.grad_tol * (1.0 + fx.abs()) {
            converged = true;
            break;
        }
        iterations += 1;

        for i in 0..n {
            p[i] = -dot(&h[i * n..(i + 1) * n], &g);
        }
        let mut slope = dot(&p, &g);
        if !(slope < 0.0) {
            identity(&mut h, 1.0);
            fresh = true;
            p.iter_mut().zip(&g).for_each(|(pi, gi)| *pi = -gi);
            slope = dot(&p, &g);
        }

        let pmax = inf_norm(&p);
        let mut alpha = if fresh && pmax > opts.max_step {
            opts.max_step / pmax
        } else {
            1.0
        };
        let mut accepted = false;
        let mut f_new = fx;
        for _ in 0..80 {
            for i in 0..n {
                x_new[i] = x[i] + alpha * p[i];
            }
            f_new = f(&x_new, &mut g_new);
            if feasible(f_new) && f_new <= fx + 1e-4 * alpha * slope {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }

        if !accepted {
            if !fresh {
                identity(&mut h, 1.0);
                fresh = true;
                continue;
            }
            // No descent possible along the steepest direction: we sit on a
            // numerical optimum or a barrier edge.
            converged = inf_norm(&g) <= 1e-5 * (1.0 + fx.abs());
            break;
        }

        for i in 0..n {
            s[i] = x_new[i] - x[i];
            y[i] = g_new[i] - g[i];
        }
        let step_small = inf_norm(&s) <= opts.step_tol * (1.0 + inf_norm(&x));
        let f_change = fx - f_new;
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        fx = f_new;
        if step_small || f_change.abs() <= f64::EPSILON * fx.abs().max(1.0) * 0.5 {
            converged = step_small || inf_norm(&g) <= 1e-5 * (1.0 + fx.abs());
            if converged {
                break;
            }
        }

        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if fresh {
                identity(&mut h, sy / dot(&y, &y));
                fresh = false;
            }
            for i in 0..n {
                hy[i] = dot(&h[i * n..(i + 1) * n], &y);
            }
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            let coef = (1.0 + rho * yhy) * rho;
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }
    }

    Minimum {
        x,
        value: fx,
        iterations,
        converged,
    }
}

//! First-order minimizer used by the logistic-regression and diverse-density
//! fits: gradient descent with Barzilai-Borwein step sizes and a nonmonotone
//! Armijo backtracking safeguard. Deterministic for identical inputs.

use nalgebra::DVector;

const ARMIJO_C: f64 = 1e-4;
const HISTORY: usize = 10;
const STEP_MIN: f64 = 1e-12;
const STEP_MAX: f64 = 1e10;

#[derive(Debug, Clone)]
pub struct GdOutcome {
    pub x: DVector<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f` (returning value and gradient) from `x0` until the gradient
/// norm drops to `tol` or `max_iter` iterations elapse.
pub fn minimize<F>(f: F, x0: DVector<f64>, tol: f64, max_iter: usize) -> GdOutcome
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>),
{
    let mut x = x0;
    let (mut value, mut grad) = f(&x);
    let mut grad_norm = grad.norm();
    let mut step = 1.0 / grad_norm.max(1.0);
    let mut recent = vec![value; HISTORY];
    let mut iterations = 0;

    while iterations < max_iter {
        if grad_norm <= tol {
            return GdOutcome {
                x,
                value,
                grad_norm,
                iterations,
                converged: true,
            };
        }
        iterations += 1;

        let f_ref = recent.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let g_sq = grad_norm * grad_norm;

        // backtracked BB step with nonmonotone sufficient decrease
        let mut lambda = 1.0;
        let (x_new, value_new, grad_new) = loop {
            let trial = &x - &grad * (lambda * step);
            let (v, g) = f(&trial);
            if v <= f_ref - ARMIJO_C * lambda * step * g_sq || lambda * step <= STEP_MIN {
                break (trial, v, g);
            }
            lambda *= 0.5;
        };

        // Barzilai-Borwein step for the next iteration
        let s = &x_new - &x;
        let y = &grad_new - &grad;
        let sy = s.dot(&y);
        step = if sy > 1e-300 {
            (s.dot(&s) / sy).clamp(STEP_MIN, STEP_MAX)
        } else {
            (step * 2.0).clamp(STEP_MIN, STEP_MAX)
        };

        x = x_new;
        value = value_new;
        grad = grad_new;
        grad_norm = grad.norm();
        recent[iterations % HISTORY] = value;
    }

    GdOutcome {
        x,
        value,
        grad_norm,
        iterations,
        converged: grad_norm <= tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_a_quadratic() {
        // f(x) = 0.5 (x - c)' D (x - c) with condition number 100
        let c = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let d = [1.0, 10.0, 100.0];
        let f = |x: &DVector<f64>| {
            let mut v = 0.0;
            let mut g = DVector::zeros(3);
            for k in 0..3 {
                let e = x[k] - c[k];
                v += 0.5 * d[k] * e * e;
                g[k] = d[k] * e;
            }
            (v, g)
        };
        let out = minimize(f, DVector::zeros(3), 1e-10, 10_000);
        assert!(out.converged, "grad norm {}", out.grad_norm);
        for k in 0..3 {
            assert!((out.x[k] - c[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn minimizes_a_nonquadratic_convex_function() {
        // f(x) = log(1 + exp(x)) + 0.5 x^2 has its minimum where sigmoid(x) + x = 0
        let f = |x: &DVector<f64>| {
            let t = x[0];
            let v = (1.0 + t.exp()).ln() + 0.5 * t * t;
            let g = DVector::from_vec(vec![1.0 / (1.0 + (-t).exp()) + t]);
            (v, g)
        };
        let out = minimize(f, DVector::from_vec(vec![3.0]), 1e-12, 10_000);
        assert!(out.converged);
        let s = 1.0 / (1.0 + (-out.x[0]).exp());
        assert!((s + out.x[0]).abs() < 1e-10);
    }

    #[test]
    fn is_deterministic() {
        let f = |x: &DVector<f64>| {
            let v = x[0].powi(4) + x[1] * x[1];
            let g = DVector::from_vec(vec![4.0 * x[0].powi(3), 2.0 * x[1]]);
            (v, g)
        };
        let a = minimize(f, DVector::from_vec(vec![2.0, -3.0]), 1e-8, 5000);
        let b = minimize(f, DVector::from_vec(vec![2.0, -3.0]), 1e-8, 5000);
        assert_eq!(a.x, b.x);
        assert_eq!(a.iterations, b.iterations);
    }
}

//! Gradient-based maximization: BFGS with Armijo backtracking over an
//! analytic-gradient objective. Families with closed-form information
//! matrices still go through here; warm starts keep the iteration counts
//! small and the quasi-Newton path handles every family uniformly.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub(crate) struct OptimOptions {
    pub max_iter: u64,
    pub grad_tol: f64,
    pub rel_tol: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct OptimResult {
    pub theta: Vec<f64>,
    pub loglik: f64,
    pub grad: Vec<f64>,
    pub iterations: u64,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Maximizes `objective` (which returns log-likelihood and gradient) from
/// `theta0`. Stops on a small gradient max-norm, the iteration cap, or a
/// run of steps without measurable improvement; the caller judges
/// convergence from the exit gradient.
pub(crate) fn maximize<F>(objective: F, theta0: Vec<f64>, opts: &OptimOptions) -> OptimResult
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let k = theta0.len();
    let mut theta = DVector::from_vec(theta0);
    let (mut ll, grad0) = objective(theta.as_slice());
    let mut grad = DVector::from_vec(grad0);
    if !ll.is_finite() {
        return OptimResult {
            theta: theta.as_slice().to_vec(),
            loglik: ll,
            grad: grad.as_slice().to_vec(),
            iterations: 0,
        };
    }
    let mut h = DMatrix::<f64>::identity(k, k);
    let mut iterations = 0;
    let mut stalled = 0;
    while max_abs(grad.as_slice()) >= opts.grad_tol && iterations < opts.max_iter {
        iterations += 1;
        let mut direction = &h * &grad;
        let mut slope = grad.dot(&direction);
        if !slope.is_finite() || slope <= 0.0 {
            // fall back to steepest ascent and forget the curvature model
            h = DMatrix::identity(k, k);
            direction = grad.clone();
            slope = grad.dot(&direction);
            if slope == 0.0 {
                break;
            }
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &theta + &direction * step;
            let (trial_ll, trial_grad) = objective(trial.as_slice());
            if trial_ll.is_finite() && trial_ll >= ll + 1e-4 * step * slope {
                accepted = Some((trial, trial_ll, DVector::from_vec(trial_grad)));
                break;
            }
            step *= 0.5;
        }
        let Some((new_theta, new_ll, new_grad)) = accepted else {
            break;
        };
        let s = &new_theta - &theta;
        let y = &new_grad - &grad;
        // BFGS inverse update on the ascent problem uses -y
        let sy = -s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let hy = &h * -&y;
            let syh = (-&y).dot(&hy);
            let term: DMatrix<f64> = &s * s.transpose() * (rho * (1.0 + rho * syh));
            let cross = (&hy * s.transpose() + &s * hy.transpose()) * rho;
            h = h + term - cross;
        } else {
            h = DMatrix::identity(k, k);
        }
        let improvement = new_ll - ll;
        theta = new_theta;
        grad = new_grad;
        ll = new_ll;
        // a run of steps with no measurable gain means the likelihood is
        // flat at working precision; give the gradient a few more iterations
        // to catch up, then stop
        if improvement < opts.rel_tol * (1.0 + ll.abs()) {
            stalled += 1;
            if stalled >= 5 {
                break;
            }
        } else {
            stalled = 0;
        }
    }
    OptimResult {
        theta: theta.as_slice().to_vec(),
        loglik: ll,
        grad: grad.as_slice().to_vec(),
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maximizes_concave_quadratic() {
        // f = -(t0 - 3)^2 - 2 (t1 + 1)^2 - (t0 - 3)(t1 + 1)
        let f = |t: &[f64]| {
            let a = t[0] - 3.0;
            let b = t[1] + 1.0;
            (
                -a * a - 2.0 * b * b - a * b,
                vec![-2.0 * a - b, -4.0 * b - a],
            )
        };
        let opts = OptimOptions { max_iter: 200, grad_tol: 1e-10, rel_tol: 1e-14 };
        let result = maximize(f, vec![0.0, 0.0], &opts);
        assert!(max_abs(&result.grad) < opts.grad_tol);
        assert!((result.theta[0] - 3.0).abs() < 1e-7, "{:?}", result.theta);
        assert!((result.theta[1] + 1.0).abs() < 1e-7);
        assert!(result.loglik.abs() < 1e-12);
    }

    #[test]
    fn maximizes_rosenbrock_like_ridge() {
        // concave but badly scaled: -(t0^2)/2 - 50 (t1 - t0)^2
        let f = |t: &[f64]| {
            let d = t[1] - t[0];
            (
                -t[0] * t[0] / 2.0 - 50.0 * d * d,
                vec![-t[0] + 100.0 * d, -100.0 * d],
            )
        };
        let opts = OptimOptions { max_iter: 500, grad_tol: 1e-9, rel_tol: 1e-14 };
        let result = maximize(f, vec![5.0, -3.0], &opts);
        assert!(max_abs(&result.grad) < opts.grad_tol);
        assert!(result.theta[0].abs() < 1e-6);
        assert!(result.theta[1].abs() < 1e-6);
    }

    #[test]
    fn reports_failure_from_non_finite_start() {
        let f = |_: &[f64]| (f64::NEG_INFINITY, vec![0.0]);
        let opts = OptimOptions { max_iter: 10, grad_tol: 1e-8, rel_tol: 1e-12 };
        let result = maximize(f, vec![0.0], &opts);
        assert!(result.loglik.is_infinite());
        assert_eq!(result.iterations, 0);
    }
}

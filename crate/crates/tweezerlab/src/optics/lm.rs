//! Small dense Levenberg–Marquardt engine with a numeric Jacobian, plus a
//! golden-section maximizer. Shared by every nonlinear fit in the crate.

use nalgebra::{DMatrix, DVector};

/// Tuning knobs for [`levenberg_marquardt`].
#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Converged when an accepted step changes the cost by less than this
    /// relative amount.
    pub cost_tolerance: f64,
    pub initial_lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 200,
            cost_tolerance: 1e-10,
            initial_lambda: 1e-3,
        }
    }
}

/// Result of a Levenberg–Marquardt run. `converged` reflects the cost
/// criterion; callers decide whether a non-converged fit is an error.
#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// Final sum of squared residuals.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Relative cost change of the last accepted step.
    pub last_change: f64,
    /// Parameter covariance `(JᵀJ)⁻¹ · cost/(n−p)`, when invertible.
    pub covariance: Option<DMatrix<f64>>,
}

fn jacobian<F: FnMut(&[f64]) -> Vec<f64>>(
    f: &mut F,
    params: &[f64],
    n_resid: usize,
) -> DMatrix<f64> {
    let p = params.len();
    let mut jac = DMatrix::zeros(n_resid, p);
    let mut work = params.to_vec();
    for j in 0..p {
        let h = f64::EPSILON.sqrt() * params[j].abs() + 1e-10;
        work[j] = params[j] + h;
        let plus = f(&work);
        work[j] = params[j] - h;
        let minus = f(&work);
        work[j] = params[j];
        for i in 0..n_resid {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    jac
}

/// Minimizes Σ rᵢ(p)² over p starting from `init`. The closure returns the
/// residual vector; its length must not change between calls.
pub fn levenberg_marquardt<F: FnMut(&[f64]) -> Vec<f64>>(
    mut f: F,
    init: &[f64],
    opts: &LmOptions,
) -> LmOutcome {
    let mut params = init.to_vec();
    let mut resid = f(&params);
    let n = resid.len();
    let p = params.len();
    let mut cost: f64 = resid.iter().map(|r| r * r).sum();
    let mut lambda = opts.initial_lambda;
    let mut last_change = f64::INFINITY;
    let mut converged = cost == 0.0;
    let mut iterations = 0;
    let mut jac = jacobian(&mut f, &params, n);

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let jtr = &jt * DVector::from_column_slice(&resid);
        // Marquardt scaling: damp proportionally to the curvature diagonal
        // so the step is invariant under parameter rescaling.
        let mut accepted = false;
        for _ in 0..16 {
            let mut lhs = jtj.clone();
            for d in 0..p {
                let diag = jtj[(d, d)].max(1e-30);
                lhs[(d, d)] += lambda * diag;
            }
            let Some(chol) = lhs.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&(-&jtr));
            let trial: Vec<f64> = params
                .iter()
                .zip(delta.iter())
                .map(|(v, d)| v + d)
                .collect();
            let trial_resid = f(&trial);
            let trial_cost: f64 = trial_resid.iter().map(|r| r * r).sum();
            if trial_cost.is_finite() && trial_cost < cost {
                last_change = (cost - trial_cost) / cost.max(1e-300);
                params = trial;
                resid = trial_resid;
                cost = trial_cost;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                break;
            }
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
        if !accepted {
            // No damping level produces a downhill step: the gradient is
            // numerically useless, i.e. we are at a local minimum of the
            // cost surface. Treat that as convergence; callers judge fit
            // quality from the cost and covariance.
            converged = true;
            break;
        }
        if last_change < opts.cost_tolerance || cost == 0.0 {
            converged = true;
            break;
        }
        jac = jacobian(&mut f, &params, n);
    }

    let covariance = if n > p {
        // Refresh the Jacobian at the final parameters; the loop copy can
        // lag one accepted step behind.
        let jac = jacobian(&mut f, &params, n);
        let jt = jac.transpose();
        (&jt * &jac)
            .try_inverse()
            .map(|inv| inv * (cost / (n - p) as f64))
    } else {
        None
    };

    LmOutcome {
        params,
        cost,
        iterations,
        converged,
        last_change,
        covariance,
    }
}

/// Golden-section maximizer of a unimodal function on [lo, hi]; returns
/// the abscissa of the maximum to within `tol`.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn recovers_exponential_decay_parameters() {
        let xs: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let truth = [3.7, 1.3];
        let data: Vec<f64> = xs.iter().map(|x| truth[0] * (-truth[1] * x).exp()).collect();
        let out = levenberg_marquardt(
            |p| {
                xs.iter()
                    .zip(data.iter())
                    .map(|(x, d)| p[0] * (-p[1] * x).exp() - d)
                    .collect()
            },
            &[1.0, 0.5],
            &LmOptions::default(),
        );
        assert!(out.converged, "last change {}", out.last_change);
        assert_relative_eq!(out.params[0], truth[0], max_relative = 1e-6);
        assert_relative_eq!(out.params[1], truth[1], max_relative = 1e-6);
    }

    #[test]
    fn linear_problem_converges_in_few_steps() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let data: Vec<f64> = xs.iter().map(|x| 2.0 * x - 5.0).collect();
        let out = levenberg_marquardt(
            |p| {
                xs.iter()
                    .zip(data.iter())
                    .map(|(x, d)| p[0] * x + p[1] - d)
                    .collect()
            },
            &[0.0, 0.0],
            &LmOptions::default(),
        );
        assert!(out.converged);
        assert!(out.iterations <= 5);
        assert_relative_eq!(out.params[0], 2.0, epsilon = 1e-8);
        assert_relative_eq!(out.params[1], -5.0, epsilon = 1e-8);
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64 * 0.2).collect();
        let data: Vec<f64> = xs.iter().map(|x| (3.0 * x).sin() / (1.0 + x)).collect();
        let out = levenberg_marquardt(
            |p| {
                xs.iter()
                    .zip(data.iter())
                    .map(|(x, d)| p[0] * (p[1] * x).sin() / (1.0 + p[2] * x) - d)
                    .collect()
            },
            &[0.2, 10.0, 5.0],
            &LmOptions {
                max_iterations: 2,
                ..Default::default()
            },
        );
        assert!(!out.converged);
        assert_eq!(out.iterations, 2);
    }

    #[test]
    fn covariance_scales_with_residual_noise() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64 * 0.05).collect();
        // Deterministic pseudo-noise: small fixed-phase oscillation.
        let data: Vec<f64> = xs
            .iter()
            .map(|x| 1.0 + 0.5 * x + 0.01 * (37.0 * x).sin())
            .collect();
        let out = levenberg_marquardt(
            |p| {
                xs.iter()
                    .zip(data.iter())
                    .map(|(x, d)| p[0] + p[1] * x - d)
                    .collect()
            },
            &[0.0, 0.0],
            &LmOptions::default(),
        );
        let cov = out.covariance.expect("invertible normal matrix");
        assert!(cov[(0, 0)] > 0.0 && cov[(1, 1)] > 0.0);
        assert!(cov[(0, 0)].sqrt() < 0.01);
    }

    #[test]
    fn golden_section_finds_the_parabola_vertex() {
        let x = golden_max(|x| -(x - 0.7) * (x - 0.7), -3.0, 4.0, 1e-10);
        assert_relative_eq!(x, 0.7, epsilon = 1e-8);
    }
}

//! Damped least squares (Levenberg-Marquardt) with a finite-difference
//! Jacobian.

use nalgebra::{DMatrix, DVector};

use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Converged when `|dx| <= xtol (|x| + xtol)`.
    pub xtol: f64,
    /// Converged when the relative cost reduction of an accepted step falls
    /// below this.
    pub ftol: f64,
    pub initial_lambda: f64,
    /// Relative central-difference step.
    pub fd_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            xtol: 1e-10,
            ftol: 1e-15,
            initial_lambda: 1e-3,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// Covariance scaled by the residual variance; `None` when `J^T J` is
    /// singular or there are no degrees of freedom.
    pub covariance: Option<DMatrix<f64>>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl LmOutcome {
    /// One-sigma uncertainties; zero when the covariance is unavailable.
    pub fn sigmas(&self) -> Vec<f64> {
        match &self.covariance {
            Some(c) => (0..c.nrows()).map(|i| c[(i, i)].max(0.0).sqrt()).collect(),
            None => vec![0.0; self.params.len()],
        }
    }
}

fn eval<F>(f: &F, x: &[f64], m: usize) -> DVector<f64>
where
    F: Fn(&[f64], &mut [f64]),
{
    let mut r = DVector::zeros(m);
    f(x, r.as_mut_slice());
    r
}

fn jacobian<F>(f: &F, x: &[f64], m: usize, rel: f64) -> DMatrix<f64>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = x.len();
    let mut j = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    for k in 0..n {
        // parameters are scaled to order one by every caller; the unit floor
        // keeps the step above rounding for values that converge near zero
        let h = rel * x[k].abs().max(1.0);
        xp[k] = x[k] + h;
        let rp = eval(f, &xp, m);
        xp[k] = x[k] - h;
        let rm = eval(f, &xp, m);
        xp[k] = x[k];
        j.set_column(k, &((rp - rm) / (2.0 * h)));
    }
    j
}

/// Minimize `sum r_i(x)^2` where `f(x, r)` fills the `m` residuals.
pub fn levenberg_marquardt<F>(f: F, x0: &[f64], m: usize, opts: &LmOptions) -> Result<LmOutcome>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = x0.len();
    if n == 0 || m < n {
        return domain(format!("{m} residuals cannot determine {n} parameters"));
    }
    let mut x = DVector::from_column_slice(x0);
    let mut r = eval(&f, x.as_slice(), m);
    if !r.iter().all(|v| v.is_finite()) {
        return domain("residuals are not finite at the starting point");
    }
    let mut cost = r.norm_squared();
    let mut lambda = opts.initial_lambda;
    let mut converged = cost == 0.0;
    let mut iterations = 0;

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let j = jacobian(&f, x.as_slice(), m, opts.fd_step);
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        if g.amax() == 0.0 {
            converged = true;
            break;
        }
        let mut accepted = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let trial = &x + &step;
            let rt = eval(&f, trial.as_slice(), m);
            let ct = rt.norm_squared();
            if ct.is_finite() && ct <= cost {
                let small_step = step.norm() <= opts.xtol * (x.norm() + opts.xtol);
                let small_gain = cost - ct <= opts.ftol * cost;
                x = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 10.0).max(1e-15);
                accepted = true;
                converged = small_step || small_gain || cost == 0.0;
                break;
            }
            lambda *= 10.0;
            if step.norm() <= opts.xtol * (x.norm() + opts.xtol) {
                // no descent at machine resolution: at a minimum
                converged = true;
                break;
            }
        }
        if !accepted && !converged {
            break;
        }
    }

    let j = jacobian(&f, x.as_slice(), m, opts.fd_step);
    let covariance = if m > n {
        (j.transpose() * &j)
            .try_inverse()
            .map(|inv| inv * (cost / (m - n) as f64))
    } else {
        None
    };
    Ok(LmOutcome {
        params: x.as_slice().to_vec(),
        covariance,
        residual_norm: cost.sqrt(),
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_round_trip() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|&t| 2.5 * (-1.3 * t).exp() + 0.2).collect();
        let out = levenberg_marquardt(
            |p, r| {
                for (i, &ti) in t.iter().enumerate() {
                    r[i] = p[0] * (-p[1] * ti).exp() + p[2] - y[i];
                }
            },
            &[1.0, 0.5, 0.0],
            t.len(),
            &LmOptions::default(),
        )
        .unwrap();
        assert!(out.converged);
        assert!((out.params[0] - 2.5).abs() < 1e-8);
        assert!((out.params[1] - 1.3).abs() < 1e-8);
        assert!((out.params[2] - 0.2).abs() < 1e-8);
        assert!(out.residual_norm < 1e-8);
    }

    #[test]
    fn rosenbrock_minimum() {
        let out = levenberg_marquardt(
            |p, r| {
                r[0] = 10.0 * (p[1] - p[0] * p[0]);
                r[1] = 1.0 - p[0];
            },
            &[-1.2, 1.0],
            2,
            &LmOptions::default(),
        )
        .unwrap();
        assert!((out.params[0] - 1.0).abs() < 1e-8);
        assert!((out.params[1] - 1.0).abs() < 1e-8);
        assert!(out.covariance.is_none());
    }

    #[test]
    fn linear_fit_uncertainty() {
        // y = a x + b with unit-variance alternating residuals
        let x: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().enumerate().map(|(i, &x)| 3.0 * x + 1.0 + if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let out = levenberg_marquardt(
            |p, r| {
                for i in 0..x.len() {
                    r[i] = p[0] * x[i] + p[1] - y[i];
                }
            },
            &[0.0, 0.0],
            x.len(),
            &LmOptions::default(),
        )
        .unwrap();
        let s = out.sigmas();
        // closed form: sigma_a = s / sqrt(sum (x - xbar)^2)
        let xbar = 49.5;
        let sxx: f64 = x.iter().map(|v| (v - xbar).powi(2)).sum();
        let s2 = out.residual_norm.powi(2) / 98.0;
        assert!((s[0] - (s2 / sxx).sqrt()).abs() < 1e-6 * s[0]);
    }

    #[test]
    fn underdetermined_rejected() {
        assert!(levenberg_marquardt(|_, r| r[0] = 0.0, &[1.0, 2.0], 1, &LmOptions::default()).is_err());
    }
}

//! Maximum-likelihood estimation of covariance parameters on the log scale,
//! with the smoothness held fixed.
//!
//! The search is a quasi-Newton ascent: BFGS directions, steps capped in
//! log-space and an Armijo backtracking line search. Exact models supply
//! analytic gradients; every other method uses central differences.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{GpError, Result};
use crate::kernel::{CovarianceSpec, Point, Smoothness};
use crate::method::GpModel;
use crate::taper::sorted_pair_distances;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Relative log-likelihood change below which an accepted step counts
    /// as stationary.
    pub rel_tol: f64,
    /// Sup-norm bound on the log-space gradient.
    pub grad_tol: f64,
    /// Central-difference step in log-space.
    pub fd_step: f64,
    /// Largest step (sup-norm, log-space) tried by the line search.
    pub max_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iter: 1000, rel_tol: 1e-8, grad_tol: 1e-5, fd_step: 1e-4, max_step: 2.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub spec_hat: CovarianceSpec,
    pub loglik_at_optimum: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_seconds: f64,
    /// Log-likelihood after each accepted step, starting at the initial value.
    pub trace: Vec<f64>,
}

const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 50;
const INIT_QUANTILE: f64 = 0.3;

/// Starting values: both variances at half the sample variance of `y`, and
/// ranges chosen so the correlation at the 0.3-quantile of pairwise
/// distances equals 0.5.
pub fn default_init(locs: &[Point], y: &[f64], nu: Smoothness, ard: bool) -> Result<CovarianceSpec> {
    if y.len() < 2 || locs.len() != y.len() {
        return Err(GpError::DimensionMismatch("need at least two matching locations and responses".into()));
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let half = if var > 0.0 { var / 2.0 } else { 0.5 };
    let d = sorted_pair_distances(locs);
    let q = d[((d.len() - 1) as f64 * INIT_QUANTILE).round() as usize];
    let q = if q > 0.0 { q } else { d.iter().copied().find(|&x| x > 0.0).unwrap_or(1.0) };
    let rho = q / half_correlation_distance(nu);
    if ard {
        CovarianceSpec::ard(half, rho, rho, nu, half)
    } else {
        CovarianceSpec::isotropic(half, rho, nu, half)
    }
}

/// Scaled distance at which the correlation equals one half.
fn half_correlation_distance(nu: Smoothness) -> f64 {
    let (mut lo, mut hi) = (0.0, 50.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if nu.correlation(mid) > 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn to_spec(template: &CovarianceSpec, x: &DVector<f64>) -> Result<CovarianceSpec> {
    let p: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    template.with_params(&p)
}

struct Objective<'a> {
    model: &'a GpModel,
    template: CovarianceSpec,
    fd_step: f64,
}

impl Objective<'_> {
    /// Log-likelihood at log-parameters `x`; `None` where it cannot be evaluated.
    fn value(&self, x: &DVector<f64>) -> Option<f64> {
        let spec = to_spec(&self.template, x).ok()?;
        self.model.loglik(&spec).ok().filter(|v| v.is_finite())
    }

    fn value_and_grad(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let spec = to_spec(&self.template, x)?;
        let (f, grad) = self.model.loglik_and_grad(&spec)?;
        let g = match grad {
            Some(g) => DVector::from_iterator(x.len(), g.iter().zip(x.iter()).map(|(gi, xi)| gi * xi.exp())),
            None => {
                let mut g = DVector::zeros(x.len());
                for i in 0..x.len() {
                    let mut up = x.clone();
                    let mut dn = x.clone();
                    up[i] += self.fd_step;
                    dn[i] -= self.fd_step;
                    let fu = self.value(&up).ok_or(GpError::NonFiniteInit)?;
                    let fd = self.value(&dn).ok_or(GpError::NonFiniteInit)?;
                    g[i] = (fu - fd) / (2.0 * self.fd_step);
                }
                g
            }
        };
        Ok((f, g))
    }
}

/// Maximizes the model's log-likelihood starting from `init`.
pub fn fit_params(model: &GpModel, init: &CovarianceSpec, opts: &FitOptions) -> Result<FitResult> {
    let start = Instant::now();
    let obj = Objective { model, template: *init, fd_step: opts.fd_step };
    let mut x = DVector::from_iterator(init.n_params(), init.params().into_iter().map(f64::ln));
    let (mut f, mut g) = match obj.value_and_grad(&x) {
        Ok((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => (f, g),
        _ => return Err(GpError::NonFiniteInit),
    };
    let p = x.len();
    let mut h = DMatrix::<f64>::identity(p, p);
    let mut fresh_h = true;
    let mut trace = vec![f];
    let mut converged = g.amax() < opts.grad_tol;
    let mut iterations = 0;

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let mut dir = &h * &g;
        let mut slope = g.dot(&dir);
        if !(slope > 0.0) {
            // Not an ascent direction: fall back to the gradient.
            h = DMatrix::identity(p, p);
            fresh_h = true;
            dir = g.clone();
            slope = g.dot(&dir);
        }
        let big = dir.amax();
        if big > opts.max_step {
            dir *= opts.max_step / big;
            slope = g.dot(&dir);
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = &x + &dir * t;
            if let Some(ft) = obj.value(&trial) {
                if ft >= f + ARMIJO_C * t * slope {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if fresh_h {
                log::warn!("line search stalled after {iterations} iterations");
                break;
            }
            h = DMatrix::identity(p, p);
            fresh_h = true;
            continue;
        };
        let (f_eval, g_new) = obj.value_and_grad(&x_new)?;
        debug_assert_eq!(f_eval, f_new);
        let s = &x_new - &x;
        let yv = &g - &g_new;
        let sy = s.dot(&yv);
        if sy > 1e-12 * s.norm() * yv.norm() {
            if fresh_h {
                // Scale the initial inverse Hessian to the observed curvature.
                h *= sy / yv.norm_squared();
            }
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(p, p);
            let left = &i - &s * yv.transpose() * rho;
            let right = &i - &yv * s.transpose() * rho;
            h = &left * &h * &right + &s * s.transpose() * rho;
            fresh_h = false;
        }
        let rel = (f_new - f).abs() / f.abs().max(1.0);
        x = x_new;
        f = f_new;
        g = g_new;
        trace.push(f);
        converged = rel < opts.rel_tol && g.amax() < opts.grad_tol;
    }

    let spec_hat = to_spec(init, &x)?;
    Ok(FitResult {
        spec_hat,
        loglik_at_optimum: f,
        iterations,
        converged,
        wall_seconds: start.elapsed().as_secs_f64(),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use crate::kernel::Range;
    use crate::method::Approximation;
    use crate::simulate::{simulate_preset, Preset};

    #[test]
    fn half_correlation_point() {
        for nu in [Smoothness::Half, Smoothness::ThreeHalves, Smoothness::FiveHalves] {
            let r = half_correlation_distance(nu);
            assert!((nu.correlation(r) - 0.5).abs() < 1e-12);
        }
        assert!((half_correlation_distance(Smoothness::Half) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn default_init_values() {
        let locs: Vec<Point> = (0..50).map(|i| [(i % 10) as f64 / 10.0, (i / 10) as f64 / 5.0]).collect();
        let y: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let s = default_init(&locs, &y, Smoothness::ThreeHalves, true).unwrap();
        assert_eq!(s.nugget, s.sigma2);
        assert!(matches!(s.range, Range::Ard { x, y } if x == y));
    }

    #[test]
    fn exact_fit_from_truth_improves_and_is_reproducible() {
        let ds = simulate_preset(Preset::Std, 150, 4).unwrap().select(Split::Train);
        let truth = Preset::Std.spec();
        let model = GpModel::new(Approximation::Exact, &ds.locations, &ds.values, &truth).unwrap();
        let fit = fit_params(&model, &truth, &FitOptions::default()).unwrap();
        assert!(fit.converged, "{fit:?}");
        assert!(fit.loglik_at_optimum >= model.loglik(&truth).unwrap());
        assert!(fit.trace.windows(2).all(|w| w[1] >= w[0]));
        let again = model.loglik(&fit.spec_hat).unwrap();
        assert!((again - fit.loglik_at_optimum).abs() <= 1e-10 * again.abs());
        assert_eq!(fit.trace, fit_params(&model, &truth, &FitOptions::default()).unwrap().trace);
    }

    #[test]
    fn finite_difference_fit_converges() {
        let ds = simulate_preset(Preset::Std, 120, 6).unwrap().select(Split::Train);
        let init = default_init(&ds.locations, &ds.values, Smoothness::ThreeHalves, false).unwrap();
        let v = Approximation::Vecchia { neighbors: 10, seed: 1, predict_neighbors: None };
        let model = GpModel::new(v, &ds.locations, &ds.values, &init).unwrap();
        let fit = fit_params(&model, &init, &FitOptions::default()).unwrap();
        assert!(fit.converged, "{fit:?}");
        assert!(fit.spec_hat.params().iter().all(|&p| p > 0.0));
    }
}

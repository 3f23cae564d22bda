//! Exact Gaussian process likelihood, gradient and posterior prediction
//! through one dense Cholesky factorization of `K + σ_n² I`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dense::DenseCholesky;
use crate::error::{GpError, Result};
use crate::kernel::{build_cov, build_cov_sym, CovarianceSpec, Point};
use crate::predict::{Flavor, PredictiveDistribution};

/// Test points handled per block of triangular solves.
const PREDICT_CHUNK: usize = 256;

pub(crate) fn check_training(locs: &[Point], y: &[f64]) -> Result<()> {
    if locs.is_empty() {
        return Err(GpError::DimensionMismatch("at least one training point is required".into()));
    }
    if locs.len() != y.len() {
        return Err(GpError::DimensionMismatch(format!(
            "{} locations but {} responses",
            locs.len(),
            y.len()
        )));
    }
    Ok(())
}

/// Gaussian log density of `y` given the Cholesky factor of its covariance
/// and the whitened vector `L⁻¹ y`.
fn gaussian_loglik(chol: &DenseCholesky, whitened: &DVector<f64>) -> f64 {
    let n = whitened.len() as f64;
    -0.5 * whitened.norm_squared() - 0.5 * chol.logdet() - 0.5 * n * (2.0 * PI).ln()
}

/// A factorized exact GP, reusable for repeated prediction.
#[derive(Clone, Debug)]
pub struct ExactGp {
    spec: CovarianceSpec,
    locations: Vec<Point>,
    chol: DenseCholesky,
    alpha: DVector<f64>,
    loglik: f64,
}

impl ExactGp {
    pub fn fit(spec: &CovarianceSpec, locs: &[Point], y: &[f64]) -> Result<Self> {
        check_training(locs, y)?;
        spec.validate()?;
        let sigma = build_cov_sym(spec, locs, true, None);
        let chol = DenseCholesky::with_jitter(sigma)?;
        let mut w = DVector::from_column_slice(y);
        chol.forward_vec(w.as_mut_slice());
        let loglik = gaussian_loglik(&chol, &w);
        let mut alpha = w;
        chol.backward_vec(alpha.as_mut_slice());
        Ok(Self { spec: *spec, locations: locs.to_vec(), chol, alpha, loglik })
    }

    pub fn spec(&self) -> &CovarianceSpec {
        &self.spec
    }

    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    /// `(K + σ_n² I)⁻¹ y`.
    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn predict(&self, test: &[Point], flavor: Flavor) -> Result<PredictiveDistribution> {
        let parts: Vec<(Vec<f64>, Vec<f64>)> = test
            .par_chunks(PREDICT_CHUNK)
            .map(|chunk| -> Result<(Vec<f64>, Vec<f64>)> {
                let mut kx = build_cov(&self.spec, &self.locations, chunk, false, None)?;
                let mean = kx.tr_mul(&self.alpha);
                self.chol.forward_in_place(&mut kx);
                let var = kx.column_iter().map(|c| self.spec.sigma2 - c.norm_squared()).collect();
                Ok((mean.iter().copied().collect(), var))
            })
            .collect::<Result<_>>()?;
        let (mut mean, mut var) = (Vec::with_capacity(test.len()), Vec::with_capacity(test.len()));
        for (m, v) in parts {
            mean.extend(m);
            var.extend(v);
        }
        PredictiveDistribution::from_latent(mean, var, self.spec.nugget, flavor)
    }
}

/// `-½ yᵀ Σ⁻¹ y - ½ log|Σ| - (N/2) log 2π` with `Σ = K + σ_n² I`.
pub fn loglik_exact(spec: &CovarianceSpec, locs: &[Point], y: &[f64]) -> Result<f64> {
    Ok(ExactGp::fit(spec, locs, y)?.loglik())
}

/// Log-likelihood and its gradient with respect to `(σ_n², σ², ρ[, ρ_y])`.
pub fn loglik_and_grad_exact(spec: &CovarianceSpec, locs: &[Point], y: &[f64]) -> Result<(f64, Vec<f64>)> {
    let gp = ExactGp::fit(spec, locs, y)?;
    let n = locs.len();
    let p = spec.n_params();
    // W = Σ⁻¹ - α αᵀ, so that dℓ/dθ = -½ Σ_ij W_ij ∂Σ_ij.
    let mut w: DMatrix<f64> = gp.chol.inverse();
    let alpha = &gp.alpha;
    w.ger(-1.0, alpha, alpha, 1.0);

    let mut grad = vec![0.0; p];
    grad[0] = -0.5 * w.trace();
    let mut dk = vec![0.0; p - 1];
    let mut acc = vec![0.0; p - 1];
    for j in 0..n {
        for i in (j + 1)..n {
            spec.covariance_with_gradient(&locs[i], &locs[j], &mut dk);
            let wij = w[(i, j)];
            for (a, d) in acc.iter_mut().zip(&dk) {
                *a += 2.0 * wij * d;
            }
        }
        // Diagonal: only σ² contributes.
        acc[0] += w[(j, j)];
    }
    for (g, a) in grad[1..].iter_mut().zip(&acc) {
        *g = -0.5 * a;
    }
    Ok((gp.loglik(), grad))
}

pub fn grad_loglik_exact(spec: &CovarianceSpec, locs: &[Point], y: &[f64]) -> Result<Vec<f64>> {
    Ok(loglik_and_grad_exact(spec, locs, y)?.1)
}

pub fn predict_exact(
    spec: &CovarianceSpec,
    locs: &[Point],
    y: &[f64],
    test: &[Point],
    flavor: Flavor,
) -> Result<PredictiveDistribution> {
    ExactGp::fit(spec, locs, y)?.predict(test, flavor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Smoothness;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn instance(n: usize, seed: u64) -> (Vec<Point>, Vec<f64>) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let locs = (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let y = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        (locs, y)
    }

    #[test]
    fn scalar_cases() {
        let s = CovarianceSpec::isotropic(1.0, 0.1, Smoothness::ThreeHalves, 0.5).unwrap();
        let ll = loglik_exact(&s, &[[0.3, 0.3]], &[0.0]).unwrap();
        assert_relative_eq!(ll, -0.5 * (2.0 * PI * 1.5).ln(), max_relative = 1e-14);
        assert_relative_eq!(ll, -1.12167, epsilon = 1e-5);
        let s1 = CovarianceSpec::isotropic(0.6, 0.1, Smoothness::ThreeHalves, 0.4).unwrap();
        assert_relative_eq!(loglik_exact(&s1, &[[0.0, 0.0]], &[0.0]).unwrap(), -0.91894, epsilon = 1e-5);
        let g = grad_loglik_exact(&s, &[[0.3, 0.3]], &[0.0]).unwrap();
        assert_relative_eq!(g[0], -0.5 / 1.5, max_relative = 1e-14);
        assert_relative_eq!(g[1], -0.5 / 1.5, max_relative = 1e-14);
        assert_eq!(g[2], 0.0);
    }

    #[test]
    fn zero_response_gradient_is_trace_term() {
        let (locs, _) = instance(30, 4);
        let y = vec![0.0; 30];
        let s = CovarianceSpec::isotropic(1.3, 0.15, Smoothness::FiveHalves, 0.4).unwrap();
        let g = grad_loglik_exact(&s, &locs, &y).unwrap();
        let sigma = build_cov_sym(&s, &locs, true, None);
        let inv = sigma.clone().cholesky().unwrap().inverse();
        assert_relative_eq!(g[0], -0.5 * inv.trace(), max_relative = 1e-10);
        let k = build_cov_sym(&s, &locs, false, None) / s.sigma2;
        assert_relative_eq!(g[1], -0.5 * (&inv * k).trace(), max_relative = 1e-10);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (locs, y) = instance(50, 8);
        for spec in [
            CovarianceSpec::isotropic(0.9, 0.12, Smoothness::ThreeHalves, 0.3).unwrap(),
            CovarianceSpec::ard(1.1, 0.08, 0.2, Smoothness::Half, 0.6).unwrap(),
        ] {
            let g = grad_loglik_exact(&spec, &locs, &y).unwrap();
            let theta = spec.params();
            for i in 0..theta.len() {
                let h = 1e-5 * theta[i];
                let mut up = theta.clone();
                let mut dn = theta.clone();
                up[i] += h;
                dn[i] -= h;
                let fd = (loglik_exact(&spec.with_params(&up).unwrap(), &locs, &y).unwrap()
                    - loglik_exact(&spec.with_params(&dn).unwrap(), &locs, &y).unwrap())
                    / (2.0 * h);
                assert_relative_eq!(g[i], fd, max_relative = 1e-5);
            }
        }
    }

    #[test]
    fn prediction_limits() {
        let (locs, y) = instance(40, 2);
        let s = CovarianceSpec::isotropic(1.0, 0.05, Smoothness::ThreeHalves, 1e-12).unwrap();
        let p = predict_exact(&s, &locs, &y, &[locs[7], [50.0, 50.0], locs[7]], Flavor::Latent).unwrap();
        assert_relative_eq!(p.mean[0], y[7], epsilon = 1e-6);
        assert!(p.variance[0] < 1e-6);
        assert!(p.mean[1].abs() < 1e-12);
        assert_relative_eq!(p.variance[1], 1.0, epsilon = 1e-12);
        assert_eq!(p.mean[0], p.mean[2]);
        assert_eq!(p.variance[0], p.variance[2]);
        let o = predict_exact(&s, &locs, &y, &[[50.0, 50.0]], Flavor::Observable).unwrap();
        assert_relative_eq!(o.variance[0], 1.0 + 1e-12, epsilon = 1e-14);
    }

    #[test]
    fn loglik_is_permutation_invariant() {
        let (locs, y) = instance(60, 3);
        let s = CovarianceSpec::isotropic(1.0, 0.1, Smoothness::ThreeHalves, 0.5).unwrap();
        let a = loglik_exact(&s, &locs, &y).unwrap();
        let rev_l: Vec<Point> = locs.iter().rev().copied().collect();
        let rev_y: Vec<f64> = y.iter().rev().copied().collect();
        assert_relative_eq!(a, loglik_exact(&s, &rev_l, &rev_y).unwrap(), max_relative = 1e-12);
    }
}

//! Accuracy and probabilistic scores for Gaussian predictions, divergence to
//! exact predictions and bias/MSE summaries of parameter estimates.

use std::f64::consts::{PI, SQRT_2};

use statrs::function::erf::erfc;

use crate::error::{GpError, Result};
use crate::predict::PredictiveDistribution;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scores {
    pub rmse: f64,
    /// Mean Gaussian negative log-likelihood.
    pub log_score: f64,
    pub crps: f64,
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Closed-form CRPS of `N(mean, sd²)` at observation `y`.
pub fn crps_gaussian(mean: f64, sd: f64, y: f64) -> f64 {
    if sd == 0.0 {
        return (y - mean).abs();
    }
    let z = (y - mean) / sd;
    sd * (z * (2.0 * std_normal_cdf(z) - 1.0) + 2.0 * std_normal_pdf(z) - 1.0 / PI.sqrt())
}

/// Negative log density of `N(mean, var)` at `y`; `+∞` for a degenerate
/// distribution that misses `y`.
pub fn gaussian_nll(mean: f64, var: f64, y: f64) -> f64 {
    let r = y - mean;
    if var == 0.0 {
        return if r == 0.0 { f64::NEG_INFINITY } else { f64::INFINITY };
    }
    0.5 * ((2.0 * PI * var).ln() + r * r / var)
}

/// RMSE, log-score and CRPS of `pred` against `truth`. The variances of
/// `pred` are used as stored, so an observable prediction already carries
/// the nugget.
pub fn score_predictions(pred: &PredictiveDistribution, truth: &[f64]) -> Result<Scores> {
    if pred.len() != truth.len() {
        return Err(GpError::DimensionMismatch(format!(
            "{} predictions for {} observations",
            pred.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(GpError::DimensionMismatch("nothing to score".into()));
    }
    let n = truth.len() as f64;
    let (mut se, mut nll, mut crps) = (0.0, 0.0, 0.0);
    for ((&m, &v), &y) in pred.mean.iter().zip(&pred.variance).zip(truth) {
        se += (y - m) * (y - m);
        nll += gaussian_nll(m, v, y);
        crps += crps_gaussian(m, v.sqrt(), y);
    }
    Ok(Scores { rmse: (se / n).sqrt(), log_score: nll / n, crps: crps / n })
}

/// `KL(N(μ_q, σ_q²) ‖ N(μ_p, σ_p²))`; arguments are standard deviations.
pub fn kl_gaussian(mu_q: f64, sigma_q: f64, mu_p: f64, sigma_p: f64) -> Result<f64> {
    if !(sigma_q > 0.0) || !(sigma_p > 0.0) {
        return Err(GpError::InvalidParameter(format!(
            "standard deviations must be positive, got {sigma_q} and {sigma_p}"
        )));
    }
    let d = mu_q - mu_p;
    let kl = (sigma_p / sigma_q).ln() + (sigma_q * sigma_q + d * d) / (2.0 * sigma_p * sigma_p) - 0.5;
    // Rounding can leave a tiny negative value for identical inputs.
    Ok(kl.max(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactComparison {
    pub rmse_mean: f64,
    pub rmse_var: f64,
    /// Mean per-point `KL(approx ‖ exact)`.
    pub mean_kl: f64,
}

/// Compares approximate predictions with exact ones point by point.
pub fn compare_to_exact(approx: &PredictiveDistribution, exact: &PredictiveDistribution) -> Result<ExactComparison> {
    if approx.len() != exact.len() || approx.is_empty() {
        return Err(GpError::DimensionMismatch("prediction sets differ in length or are empty".into()));
    }
    let n = approx.len() as f64;
    let (mut dm, mut dv, mut kl) = (0.0, 0.0, 0.0);
    for i in 0..approx.len() {
        dm += (approx.mean[i] - exact.mean[i]).powi(2);
        dv += (approx.variance[i] - exact.variance[i]).powi(2);
        kl += kl_gaussian(approx.mean[i], approx.variance[i].sqrt(), exact.mean[i], exact.variance[i].sqrt())?;
    }
    Ok(ExactComparison { rmse_mean: (dm / n).sqrt(), rmse_var: (dv / n).sqrt(), mean_kl: kl / n })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimateSummary {
    pub bias: f64,
    pub mse: f64,
    pub se_bias: f64,
    pub se_mse: f64,
}

fn mean_and_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Bias and MSE per parameter over repetitions, with standard errors.
pub fn aggregate_estimates(estimates: &[Vec<f64>], truth: &[f64]) -> Result<Vec<EstimateSummary>> {
    if estimates.len() < 2 {
        return Err(GpError::OutOfRange("at least two repetitions are needed".into()));
    }
    if estimates.iter().any(|e| e.len() != truth.len()) {
        return Err(GpError::DimensionMismatch("estimate and truth lengths differ".into()));
    }
    Ok((0..truth.len())
        .map(|p| {
            let dev: Vec<f64> = estimates.iter().map(|e| e[p] - truth[p]).collect();
            let sq: Vec<f64> = dev.iter().map(|d| d * d).collect();
            let (bias, se_bias) = mean_and_se(&dev);
            let (mse, se_mse) = mean_and_se(&sq);
            EstimateSummary { bias, mse, se_bias, se_mse }
        })
        .collect())
}

//! Per-point Gaussian predictive distributions.

use crate::error::{GpError, Result};

/// Whether variances describe the latent process `f` or the noisy response `y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Flavor {
    Latent,
    Observable,
}

impl Flavor {
    pub fn label(self) -> &'static str {
        match self {
            Flavor::Latent => "latent",
            Flavor::Observable => "observable",
        }
    }
}

/// Computed variances in `(-VARIANCE_TOLERANCE, 0)` are treated as rounding
/// noise and clamped to zero.
pub const VARIANCE_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveDistribution {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub flavor: Flavor,
}

impl PredictiveDistribution {
    /// Builds a distribution from latent moments, clamping tiny negative
    /// variances and adding `nugget` for the observable flavor.
    pub fn from_latent(mean: Vec<f64>, mut variance: Vec<f64>, nugget: f64, flavor: Flavor) -> Result<Self> {
        if mean.len() != variance.len() {
            return Err(GpError::DimensionMismatch("means and variances differ in length".into()));
        }
        for v in variance.iter_mut() {
            *v = clamp_variance(*v)?;
            if flavor == Flavor::Observable {
                *v += nugget;
            }
        }
        Ok(Self { mean, variance, flavor })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Concatenates distributions of the same flavor.
    pub fn concat(parts: Vec<PredictiveDistribution>) -> Option<Self> {
        let flavor = parts.first()?.flavor;
        let mut out = Self { mean: Vec::new(), variance: Vec::new(), flavor };
        for p in parts {
            assert_eq!(p.flavor, flavor, "mixed predictive flavors");
            out.mean.extend(p.mean);
            out.variance.extend(p.variance);
        }
        Some(out)
    }
}

pub(crate) fn clamp_variance(v: f64) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else if v > -VARIANCE_TOLERANCE {
        log::warn!("clamping predictive variance {v:e} to zero");
        Ok(0.0)
    } else {
        Err(GpError::NegativeVariance(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observable_adds_nugget_and_clamps() {
        let p = PredictiveDistribution::from_latent(vec![0.0, 1.0], vec![-1e-12, 0.3], 0.5, Flavor::Observable).unwrap();
        assert_eq!(p.variance, vec![0.5, 0.8]);
        let l = PredictiveDistribution::from_latent(vec![0.0], vec![-1e-12], 0.5, Flavor::Latent).unwrap();
        assert_eq!(l.variance, vec![0.0]);
        assert!(matches!(
            PredictiveDistribution::from_latent(vec![0.0], vec![-1e-6], 0.5, Flavor::Latent),
            Err(GpError::NegativeVariance(_))
        ));
    }
}

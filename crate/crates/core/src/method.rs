//! One entry point for every likelihood approximation, holding the pieces
//! that do not depend on covariance parameters (neighbor sets, inducing
//! points, symbolic factorizations) so repeated evaluations reuse them.

use std::fmt;
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use crate::error::{GpError, Result};
use crate::exact::{check_training, loglik_and_grad_exact, ExactGp};
use crate::kernel::{CovarianceSpec, Point, TaperSpec};
use crate::kmeans::kmeanspp;
use crate::lowrank::LowRankGp;
use crate::predict::{Flavor, PredictiveDistribution};
use crate::sparse::SymbolicCholesky;
use crate::taper::TaperGp;
use crate::vecchia::{build_vecchia, vecchia_loglik, vecchia_predict, VecchiaStructure};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Approximation {
    Exact,
    Vecchia {
        neighbors: usize,
        seed: u64,
        /// Neighbors per test point. Defaults to `neighbors`, or to every
        /// training point once `neighbors` covers all predecessors.
        predict_neighbors: Option<usize>,
    },
    Fitc {
        inducing: usize,
        seed: u64,
    },
    Fsa {
        inducing: usize,
        seed: u64,
        taper: TaperSpec,
    },
    Taper {
        taper: TaperSpec,
    },
}

impl Approximation {
    pub fn name(&self) -> &'static str {
        match self {
            Approximation::Exact => "exact",
            Approximation::Vecchia { .. } => "vecchia",
            Approximation::Fitc { .. } => "fitc",
            Approximation::Fsa { .. } => "fsa",
            Approximation::Taper { .. } => "tapering",
        }
    }
}

impl fmt::Display for Approximation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A log-likelihood value with the symbolic-analysis time spent producing it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoglikEval {
    pub value: f64,
    pub symbolic_time: Duration,
}

/// An approximation bound to a training set.
pub struct GpModel {
    approx: Approximation,
    locations: Vec<Point>,
    y: Vec<f64>,
    vecchia: Option<VecchiaStructure>,
    inducing: Option<Vec<Point>>,
    symbolic: OnceLock<Arc<SymbolicCholesky>>,
}

impl GpModel {
    /// Prepares parameter-free structure. For the ARD family the Vecchia
    /// neighbor sets follow the correlation distance of `spec` and stay
    /// fixed afterwards.
    pub fn new(approx: Approximation, locs: &[Point], y: &[f64], spec: &CovarianceSpec) -> Result<Self> {
        check_training(locs, y)?;
        let mut vecchia = None;
        let mut inducing = None;
        match approx {
            Approximation::Vecchia { neighbors, seed, .. } => {
                vecchia = Some(build_vecchia(locs, spec, neighbors, seed)?);
            }
            Approximation::Fitc { inducing: m, seed } | Approximation::Fsa { inducing: m, seed, .. } => {
                if m > locs.len() {
                    return Err(GpError::OutOfRange(format!(
                        "{m} inducing points requested for {} training points",
                        locs.len()
                    )));
                }
                inducing = Some(kmeanspp(locs, m, seed)?);
            }
            Approximation::Exact | Approximation::Taper { .. } => {}
        }
        Ok(Self { approx, locations: locs.to_vec(), y: y.to_vec(), vecchia, inducing, symbolic: OnceLock::new() })
    }

    /// Uses the given inducing points instead of k-means++ centers.
    pub fn with_inducing(mut self, inducing: Vec<Point>) -> Result<Self> {
        match self.approx {
            Approximation::Fitc { .. } | Approximation::Fsa { .. } if !inducing.is_empty() => {
                self.inducing = Some(inducing);
                Ok(self)
            }
            _ => Err(GpError::InvalidParameter(format!("{} takes no inducing points", self.approx))),
        }
    }

    pub fn approximation(&self) -> &Approximation {
        &self.approx
    }

    pub fn locations(&self) -> &[Point] {
        &self.locations
    }

    pub fn responses(&self) -> &[f64] {
        &self.y
    }

    pub fn vecchia_structure(&self) -> Option<&VecchiaStructure> {
        self.vecchia.as_ref()
    }

    pub fn inducing(&self) -> Option<&[Point]> {
        self.inducing.as_deref()
    }

    pub fn has_analytic_gradient(&self) -> bool {
        matches!(self.approx, Approximation::Exact)
    }

    fn cached_symbolic(&self) -> Option<&Arc<SymbolicCholesky>> {
        self.symbolic.get()
    }

    fn remember_symbolic(&self, s: Option<&Arc<SymbolicCholesky>>) {
        if let Some(s) = s {
            let _ = self.symbolic.set(Arc::clone(s));
        }
    }

    pub fn loglik(&self, spec: &CovarianceSpec) -> Result<f64> {
        Ok(self.loglik_detailed(spec)?.value)
    }

    pub fn loglik_detailed(&self, spec: &CovarianceSpec) -> Result<LoglikEval> {
        let (locs, y) = (&self.locations[..], &self.y[..]);
        let plain = |value| LoglikEval { value, symbolic_time: Duration::ZERO };
        match &self.approx {
            Approximation::Exact => Ok(plain(ExactGp::fit(spec, locs, y)?.loglik())),
            Approximation::Vecchia { .. } => Ok(plain(vecchia_loglik(self.vecchia.as_ref().unwrap(), spec, locs, y)?)),
            Approximation::Fitc { .. } => {
                let gp = LowRankGp::fit(spec, locs, y, self.inducing.as_ref().unwrap(), None, None)?;
                Ok(plain(gp.loglik()))
            }
            Approximation::Fsa { taper, .. } => {
                let gp = LowRankGp::fit(spec, locs, y, self.inducing.as_ref().unwrap(), Some(taper), self.cached_symbolic())?;
                self.remember_symbolic(gp.symbolic());
                Ok(LoglikEval { value: gp.loglik(), symbolic_time: gp.symbolic_time() })
            }
            Approximation::Taper { taper } => {
                let gp = TaperGp::fit(taper, spec, locs, y, self.cached_symbolic())?;
                let r = gp.loglik();
                self.remember_symbolic(Some(&r.symbolic));
                Ok(LoglikEval { value: r.value, symbolic_time: r.symbolic_time })
            }
        }
    }

    /// Log-likelihood and, for the exact method, its gradient with respect
    /// to the parameter vector of `spec`.
    pub fn loglik_and_grad(&self, spec: &CovarianceSpec) -> Result<(f64, Option<Vec<f64>>)> {
        match self.approx {
            Approximation::Exact => {
                let (v, g) = loglik_and_grad_exact(spec, &self.locations, &self.y)?;
                Ok((v, Some(g)))
            }
            _ => Ok((self.loglik(spec)?, None)),
        }
    }

    pub fn predict(&self, spec: &CovarianceSpec, test: &[Point], flavor: Flavor) -> Result<PredictiveDistribution> {
        let (locs, y) = (&self.locations[..], &self.y[..]);
        match &self.approx {
            Approximation::Exact => ExactGp::fit(spec, locs, y)?.predict(test, flavor),
            Approximation::Vecchia { neighbors, predict_neighbors, .. } => {
                let n = locs.len();
                let m = predict_neighbors.unwrap_or(if *neighbors + 1 >= n { n } else { *neighbors });
                vecchia_predict(spec, locs, y, test, m, flavor)
            }
            Approximation::Fitc { .. } => {
                LowRankGp::fit(spec, locs, y, self.inducing.as_ref().unwrap(), None, None)?.predict(test, flavor)
            }
            Approximation::Fsa { taper, .. } => {
                let gp = LowRankGp::fit(spec, locs, y, self.inducing.as_ref().unwrap(), Some(taper), self.cached_symbolic())?;
                self.remember_symbolic(gp.symbolic());
                gp.predict(test, flavor)
            }
            Approximation::Taper { taper } => {
                let gp = TaperGp::fit(taper, spec, locs, y, self.cached_symbolic())?;
                self.remember_symbolic(Some(&gp.loglik().symbolic));
                gp.predict(test, flavor)
            }
        }
    }
}

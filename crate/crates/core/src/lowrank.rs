//! Inducing-point approximations: FITC (low rank plus diagonal residual) and
//! the full-scale approximation (low rank plus tapered residual).
//!
//! With `V = L_uu⁻¹ K_us` the approximate covariance is `Vᵀ V + D`, where `D`
//! holds the residual `K - Vᵀ V` (its diagonal, or its tapered version) plus
//! the nugget. Everything is evaluated through the Woodbury identity with
//! `B = I + V D⁻¹ Vᵀ`, so no dense N×N matrix is ever formed.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dense::DenseCholesky;
use crate::error::{GpError, Result};
use crate::exact::check_training;
use crate::kernel::{build_cov, build_cov_sym, euclidean, CovarianceSpec, Point, TaperSpec};
use crate::kmeans::kmeanspp;
use crate::neighbors::{cross_pairs_within, pairs_within};
use crate::predict::{Flavor, PredictiveDistribution};
use crate::sparse::{SparseCholesky, SparseMatrix, SymbolicCholesky};

/// Relative jitter added to the inducing-point covariance when it cannot be
/// factorized as is.
pub const INDUCING_JITTER: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LowRankConfig {
    pub n_inducing: usize,
    pub seed: u64,
    /// Residual taper; `None` gives FITC, `Some` the full-scale approximation.
    pub taper: Option<TaperSpec>,
}

impl LowRankConfig {
    pub fn fitc(n_inducing: usize, seed: u64) -> Self {
        Self { n_inducing, seed, taper: None }
    }

    pub fn fsa(n_inducing: usize, seed: u64, taper: TaperSpec) -> Self {
        Self { n_inducing, seed, taper: Some(taper) }
    }

    /// Inducing points placed by k-means++ on the training locations.
    pub fn inducing_points(&self, locs: &[Point]) -> Result<Vec<Point>> {
        kmeanspp(locs, self.n_inducing, self.seed)
    }
}

/// Residual-plus-nugget part `D` of the approximate covariance.
enum Residual {
    Diagonal(Vec<f64>),
    Sparse { chol: SparseCholesky, iperm: Vec<usize> },
}

impl Residual {
    fn logdet(&self) -> f64 {
        match self {
            Residual::Diagonal(d) => d.iter().map(|v| v.ln()).sum(),
            Residual::Sparse { chol, .. } => chol.logdet(),
        }
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        match self {
            Residual::Diagonal(d) => b.iter().zip(d).map(|(x, di)| x / di).collect(),
            Residual::Sparse { chol, .. } => chol.solve(b),
        }
    }
}

/// Factorized FITC or full-scale approximation.
pub struct LowRankGp {
    spec: CovarianceSpec,
    taper: Option<TaperSpec>,
    locations: Vec<Point>,
    inducing: Vec<Point>,
    l_uu: DenseCholesky,
    /// `V = L_uu⁻¹ K_us`, M×N.
    v: DMatrix<f64>,
    residual: Residual,
    /// `D⁻¹ Vᵀ`, N×M.
    dinv_vt: DMatrix<f64>,
    l_b: DenseCholesky,
    /// `Σ̃⁻¹ y`.
    alpha: Vec<f64>,
    /// `V α`.
    v_alpha: DVector<f64>,
    loglik: f64,
    symbolic_time: Duration,
}

impl LowRankGp {
    /// Factorizes the approximation for given inducing points. A symbolic
    /// factorization from an earlier call with the same taper pattern can be
    /// passed in for the full-scale residual.
    pub fn fit(
        spec: &CovarianceSpec,
        locs: &[Point],
        y: &[f64],
        inducing: &[Point],
        taper: Option<&TaperSpec>,
        reuse: Option<&Arc<SymbolicCholesky>>,
    ) -> Result<Self> {
        check_training(locs, y)?;
        spec.validate()?;
        if inducing.is_empty() {
            return Err(GpError::OutOfRange("at least one inducing point is required".into()));
        }
        let n = locs.len();
        let m = inducing.len();
        let k_uu = build_cov_sym(spec, inducing, false, None);
        let l_uu = match DenseCholesky::new(k_uu.clone()) {
            Ok(l) => l,
            Err(e) => {
                log::warn!("inducing covariance not positive definite ({e}); adding jitter");
                let mut k_uu = k_uu;
                for i in 0..m {
                    k_uu[(i, i)] += INDUCING_JITTER * spec.sigma2;
                }
                DenseCholesky::with_jitter(k_uu)?
            }
        };
        let mut v = build_cov(spec, inducing, locs, false, None)?;
        l_uu.forward_in_place(&mut v);

        let mut symbolic_time = Duration::ZERO;
        let residual = match taper {
            None => {
                // Without a nugget the residual vanishes at inducing
                // locations; the floor keeps D invertible.
                let floor = INDUCING_JITTER * spec.sigma2;
                let d = (0..n)
                    .map(|i| {
                        let r = (spec.sigma2 - v.column(i).norm_squared()).max(0.0) + spec.nugget;
                        if r > 0.0 { r } else { floor }
                    })
                    .collect::<Vec<_>>();
                if let Some(bad) = d.iter().position(|&x| !(x > 0.0)) {
                    return Err(GpError::NotPositiveDefinite { pivot: bad, value: d[bad] });
                }
                Residual::Diagonal(d)
            }
            Some(t) => {
                let r = tapered_residual(spec, locs, &v, t);
                let sym = match reuse {
                    Some(s) => Arc::clone(s),
                    None => {
                        let start = Instant::now();
                        let s = Arc::new(SymbolicCholesky::analyze(&r)?);
                        symbolic_time = start.elapsed();
                        s
                    }
                };
                let chol = SparseCholesky::new(&r, Some(&sym))?;
                let iperm = chol.inverse_permutation();
                Residual::Sparse { chol, iperm }
            }
        };

        // D⁻¹ Vᵀ one column at a time.
        let mut dinv_vt = DMatrix::zeros(n, m);
        let cols: Vec<Vec<f64>> = (0..m)
            .into_par_iter()
            .map(|a| residual.solve(v.row(a).transpose().as_slice()))
            .collect();
        for (a, c) in cols.iter().enumerate() {
            dinv_vt.column_mut(a).copy_from_slice(c);
        }
        let mut b = &v * &dinv_vt;
        for i in 0..m {
            b[(i, i)] += 1.0;
        }
        let l_b = DenseCholesky::with_jitter(b)?;

        let dinv_y = residual.solve(y);
        let mut z = dinv_vt.tr_mul(&DVector::from_column_slice(y));
        l_b.forward_vec(z.as_mut_slice());
        let quad = y.iter().zip(&dinv_y).map(|(a, b)| a * b).sum::<f64>() - z.norm_squared();
        let logdet = residual.logdet() + l_b.logdet();
        let loglik = -0.5 * quad - 0.5 * logdet - 0.5 * n as f64 * (2.0 * PI).ln();

        l_b.backward_vec(z.as_mut_slice());
        let correction = &dinv_vt * &z;
        let alpha: Vec<f64> = dinv_y.iter().zip(correction.iter()).map(|(a, c)| a - c).collect();
        let v_alpha = &v * DVector::from_column_slice(&alpha);

        Ok(Self {
            spec: *spec,
            taper: taper.copied(),
            locations: locs.to_vec(),
            inducing: inducing.to_vec(),
            l_uu,
            v,
            residual,
            dinv_vt,
            l_b,
            alpha,
            v_alpha,
            loglik,
            symbolic_time,
        })
    }

    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    /// Time spent in the symbolic sparse analysis during [`Self::fit`].
    pub fn symbolic_time(&self) -> Duration {
        self.symbolic_time
    }

    /// Symbolic factorization of the tapered residual, if any.
    pub fn symbolic(&self) -> Option<&Arc<SymbolicCholesky>> {
        match &self.residual {
            Residual::Sparse { chol, .. } => Some(chol.symbolic()),
            Residual::Diagonal(_) => None,
        }
    }

    pub fn inducing(&self) -> &[Point] {
        &self.inducing
    }

    pub fn predict(&self, test: &[Point], flavor: Flavor) -> Result<PredictiveDistribution> {
        let spec = &self.spec;
        let n = self.locations.len();
        let cross = match &self.taper {
            Some(t) => cross_pairs_within(test, &self.locations, t.range),
            None => vec![Vec::new(); test.len()],
        };
        let moments: Vec<(f64, f64)> = test
            .par_iter()
            .zip(cross.par_iter())
            .map_init(
                || vec![0.0; n],
                |work, (t, near)| {
                    let mut vs = DVector::from_iterator(
                        self.inducing.len(),
                        self.inducing.iter().map(|u| spec.covariance(t, u)),
                    );
                    self.l_uu.forward_vec(vs.as_mut_slice());
                    // Tapered residual cross-covariance with nearby training points.
                    let r: Vec<(usize, f64)> = match &self.taper {
                        Some(tp) => near
                            .iter()
                            .map(|&j| {
                                let q = vs.dot(&self.v.column(j));
                                let k = spec.covariance(t, &self.locations[j]);
                                (j, (k - q) * tp.value(euclidean(t, &self.locations[j])))
                            })
                            .collect(),
                        None => Vec::new(),
                    };
                    // Latent variance σ² - ‖v‖² - rᵀD⁻¹r + ‖L_B⁻¹(v - V D⁻¹ r)‖²,
                    // which avoids cancellation when D is small.
                    let mut mean = vs.dot(&self.v_alpha);
                    let mut e = vs.clone();
                    let mut var = spec.sigma2 - vs.norm_squared();
                    if !r.is_empty() {
                        for &(j, rj) in &r {
                            mean += rj * self.alpha[j];
                            e.axpy(-rj, &self.dinv_vt.row(j).transpose(), 1.0);
                        }
                        if let Residual::Sparse { chol, iperm } = &self.residual {
                            var -= chol.inv_quad_sparse(&r, work, iperm);
                        }
                    }
                    self.l_b.forward_vec(e.as_mut_slice());
                    var += e.norm_squared();
                    (mean, var)
                },
            )
            .collect();
        let (mean, var) = moments.into_iter().unzip();
        PredictiveDistribution::from_latent(mean, var, spec.nugget, flavor)
    }
}

/// `(K - Vᵀ V) ∘ T + σ_n² I` on the taper pattern.
fn tapered_residual(spec: &CovarianceSpec, locs: &[Point], v: &DMatrix<f64>, taper: &TaperSpec) -> SparseMatrix {
    let rows = pairs_within(locs, taper.range);
    let values: Vec<Vec<f64>> = rows
        .par_iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .map(|&j| {
                    let q = v.column(i).dot(&v.column(j));
                    if i == j {
                        spec.sigma2 - q + spec.nugget
                    } else {
                        (spec.covariance(&locs[i], &locs[j]) - q) * taper.value(euclidean(&locs[i], &locs[j]))
                    }
                })
                .collect()
        })
        .collect();
    let mut offsets = Vec::with_capacity(locs.len() + 1);
    offsets.push(0);
    let mut indices = Vec::new();
    for row in &rows {
        indices.extend_from_slice(row);
        offsets.push(indices.len());
    }
    let flat = values.into_iter().flatten().collect();
    SparseMatrix::from_csr_unchecked(locs.len(), locs.len(), offsets, indices, flat)
}

/// Log-likelihood under FITC or the full-scale approximation, with inducing
/// points chosen by `cfg`.
pub fn lowrank_loglik(cfg: &LowRankConfig, spec: &CovarianceSpec, locs: &[Point], y: &[f64]) -> Result<f64> {
    let u = cfg.inducing_points(locs)?;
    Ok(LowRankGp::fit(spec, locs, y, &u, cfg.taper.as_ref(), None)?.loglik())
}

pub fn lowrank_predict(
    cfg: &LowRankConfig,
    spec: &CovarianceSpec,
    locs: &[Point],
    y: &[f64],
    test: &[Point],
    flavor: Flavor,
) -> Result<PredictiveDistribution> {
    let u = cfg.inducing_points(locs)?;
    LowRankGp::fit(spec, locs, y, &u, cfg.taper.as_ref(), None)?.predict(test, flavor)
}

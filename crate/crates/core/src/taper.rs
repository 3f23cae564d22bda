//! Covariance tapering: the covariance is multiplied entrywise by a compactly
//! supported taper and handled with a sparse Cholesky factorization.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::error::{GpError, Result};
use crate::exact::check_training;
use crate::kernel::{build_tapered_sparse, euclidean, tapered_cross_rows, CovarianceSpec, Point, TaperSpec};
use crate::predict::{Flavor, PredictiveDistribution};
use crate::sparse::{SparseCholesky, SymbolicCholesky};

/// Up to this many points every pairwise distance enters the range quantile;
/// above it a fixed-seed sample of pairs is used.
pub const ALL_PAIRS_LIMIT: usize = 3000;
const SAMPLED_PAIRS: usize = 2_000_000;
const PAIR_SAMPLE_SEED: u64 = 0x7a9e_5eed;

/// Tapered log-likelihood together with what is needed to reuse and time it.
#[derive(Clone, Debug)]
pub struct TaperLoglik {
    pub value: f64,
    pub symbolic: Arc<SymbolicCholesky>,
    /// Zero when a symbolic factorization was passed in.
    pub symbolic_time: Duration,
    pub numeric_time: Duration,
    /// Stored entries of the tapered matrix per row, diagonal included.
    pub nnz_per_row: f64,
}

/// A factorized tapered GP.
pub struct TaperGp {
    spec: CovarianceSpec,
    taper: TaperSpec,
    locations: Vec<Point>,
    chol: SparseCholesky,
    iperm: Vec<usize>,
    alpha: Vec<f64>,
    result: TaperLoglik,
}

impl TaperGp {
    pub fn fit(
        taper: &TaperSpec,
        spec: &CovarianceSpec,
        locs: &[Point],
        y: &[f64],
        reuse: Option<&Arc<SymbolicCholesky>>,
    ) -> Result<Self> {
        check_training(locs, y)?;
        spec.validate()?;
        let start = Instant::now();
        let m = build_tapered_sparse(spec, locs, taper, true);
        let assembly = start.elapsed();
        let (symbolic, symbolic_time) = match reuse {
            Some(s) => (Arc::clone(s), Duration::ZERO),
            None => {
                let start = Instant::now();
                let s = Arc::new(SymbolicCholesky::analyze(&m)?);
                (s, start.elapsed())
            }
        };
        let start = Instant::now();
        let chol = SparseCholesky::new(&m, Some(&symbolic))?;
        let iperm = chol.inverse_permutation();
        let alpha = chol.solve(y);
        let quad: f64 = y.iter().zip(&alpha).map(|(a, b)| a * b).sum();
        let n = locs.len() as f64;
        let value = -0.5 * quad - 0.5 * chol.logdet() - 0.5 * n * (2.0 * PI).ln();
        let numeric_time = assembly + start.elapsed();
        let result = TaperLoglik { value, symbolic, symbolic_time, numeric_time, nnz_per_row: m.nnz() as f64 / n };
        Ok(Self { spec: *spec, taper: *taper, locations: locs.to_vec(), chol, iperm, alpha, result })
    }

    pub fn loglik(&self) -> &TaperLoglik {
        &self.result
    }

    pub fn predict(&self, test: &[Point], flavor: Flavor) -> Result<PredictiveDistribution> {
        let rows = tapered_cross_rows(&self.spec, test, &self.locations, &self.taper);
        let n = self.locations.len();
        let moments: Vec<(f64, f64)> = rows
            .par_iter()
            .map_init(
                || vec![0.0; n],
                |work, row| {
                    let mean = row.iter().map(|&(j, k)| k * self.alpha[j]).sum();
                    let var = self.spec.sigma2 - self.chol.inv_quad_sparse(row, work, &self.iperm);
                    (mean, var)
                },
            )
            .collect();
        let (mean, var) = moments.into_iter().unzip();
        PredictiveDistribution::from_latent(mean, var, self.spec.nugget, flavor)
    }
}

/// Log-likelihood under `(K ∘ T) + σ_n² I`, running the symbolic analysis
/// only when `reuse` is absent.
pub fn taper_loglik(
    taper: &TaperSpec,
    spec: &CovarianceSpec,
    locs: &[Point],
    y: &[f64],
    reuse: Option<&Arc<SymbolicCholesky>>,
) -> Result<TaperLoglik> {
    Ok(TaperGp::fit(taper, spec, locs, y, reuse)?.result)
}

pub fn taper_predict(
    taper: &TaperSpec,
    spec: &CovarianceSpec,
    locs: &[Point],
    y: &[f64],
    test: &[Point],
    flavor: Flavor,
) -> Result<PredictiveDistribution> {
    TaperGp::fit(taper, spec, locs, y, None)?.predict(test, flavor)
}

/// Taper range giving roughly `nnz_per_row` stored entries per row
/// (diagonal included) on these locations.
///
/// The range is the `(k-1)/(N-1)` quantile of the pairwise distances,
/// placed halfway to the next larger distance so that the strict support
/// test counts the quantile pair itself.
pub fn taper_range_for_nnz(locs: &[Point], nnz_per_row: usize) -> Result<f64> {
    let n = locs.len();
    if n < 2 {
        return Err(GpError::OutOfRange("at least two locations are needed to calibrate a taper".into()));
    }
    if nnz_per_row == 0 {
        return Err(GpError::OutOfRange("nonzeros per row must be at least 1".into()));
    }
    let d = sorted_pair_distances(locs);
    let frac = ((nnz_per_row - 1) as f64 / (n - 1) as f64).min(1.0);
    let count = (frac * d.len() as f64).round() as usize;
    let range = if count == 0 {
        // Diagonal only: anything below the smallest separation.
        d[0] * 0.5
    } else if count >= d.len() {
        d[d.len() - 1] * (1.0 + 1e-9) + f64::MIN_POSITIVE
    } else {
        0.5 * (d[count - 1] + d[count])
    };
    Ok(range.max(1e-12))
}

/// Every pairwise distance for up to [`ALL_PAIRS_LIMIT`] points, otherwise a
/// fixed-seed sample of pairs; sorted ascending.
pub(crate) fn sorted_pair_distances(locs: &[Point]) -> Vec<f64> {
    let n = locs.len();
    let mut d: Vec<f64> = if n <= ALL_PAIRS_LIMIT {
        (0..n)
            .into_par_iter()
            .flat_map_iter(|i| ((i + 1)..n).map(move |j| euclidean(&locs[i], &locs[j])))
            .collect()
    } else {
        let mut rng = ChaCha20Rng::seed_from_u64(PAIR_SAMPLE_SEED);
        (0..SAMPLED_PAIRS)
            .map(|_| {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                euclidean(&locs[i], &locs[j])
            })
            .collect()
    };
    d.sort_unstable_by(|a, b| a.total_cmp(b));
    d
}

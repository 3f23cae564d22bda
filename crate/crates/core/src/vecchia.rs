//! Vecchia approximation of the observable process. Points are visited in a
//! seeded random order and each one conditions on its nearest predecessors.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::dense::DenseCholesky;
use crate::error::{GpError, Result};
use crate::exact::check_training;
use crate::kernel::{CovarianceSpec, Point};
use crate::neighbors::{knn_exhaustive, GridIndex};
use crate::predict::{Flavor, PredictiveDistribution};

/// Above this many training points neighbor search switches from an
/// exhaustive scan to a bucket grid.
pub const EXHAUSTIVE_SEARCH_LIMIT: usize = 5000;

const GRID_POINTS_PER_CELL: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistanceMode {
    Euclidean,
    /// Euclidean distance after dividing each axis by its range.
    Correlation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VecchiaStructure {
    /// `ordering[k]` is the training index visited at position `k`.
    pub ordering: Vec<usize>,
    /// Conditioning set of the point at each ordered position, as training
    /// indices sorted nearest first.
    pub neighbors: Vec<Vec<usize>>,
    pub m: usize,
    pub mode: DistanceMode,
}

impl VecchiaStructure {
    pub fn len(&self) -> usize {
        self.ordering.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordering.is_empty()
    }
}

fn mode_for(spec: &CovarianceSpec) -> DistanceMode {
    if spec.is_ard() {
        DistanceMode::Correlation
    } else {
        DistanceMode::Euclidean
    }
}

fn search_coordinates(spec: &CovarianceSpec, locs: &[Point]) -> Vec<Point> {
    let [sx, sy] = spec.axis_scales();
    locs.iter().map(|p| [p[0] * sx, p[1] * sy]).collect()
}

/// Random ordering plus up to `m` nearest earlier neighbors per point.
pub fn build_vecchia(locs: &[Point], spec: &CovarianceSpec, m: usize, seed: u64) -> Result<VecchiaStructure> {
    if m == 0 {
        return Err(GpError::OutOfRange("the Vecchia neighbor count must be at least 1".into()));
    }
    let n = locs.len();
    let mut ordering: Vec<usize> = (0..n).collect();
    ordering.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    let coords = search_coordinates(spec, locs);
    let ordered: Vec<Point> = ordering.iter().map(|&i| coords[i]).collect();

    let mut neighbors = Vec::with_capacity(n);
    if n <= EXHAUSTIVE_SEARCH_LIMIT {
        for k in 0..n {
            let nb = knn_exhaustive(&ordered, 0..k, &ordered[k], m);
            neighbors.push(nb.into_iter().map(|(_, pos)| ordering[pos]).collect());
        }
    } else {
        let mut grid = GridIndex::new(&ordered, GridIndex::cell_for_density(&ordered, GRID_POINTS_PER_CELL));
        for k in 0..n {
            let nb = grid.knn(&ordered[k], m);
            neighbors.push(nb.into_iter().map(|(_, pos)| ordering[pos]).collect());
            grid.insert(k);
        }
    }
    Ok(VecchiaStructure { ordering, neighbors, m, mode: mode_for(spec) })
}

/// Conditional mean weights and variance of a target given a conditioning
/// set: returns `(C⁻¹ c, c_target - cᵀ C⁻¹ c)`.
fn conditional(cov_nn: DMatrix<f64>, cov_tn: DVector<f64>, var_t: f64) -> Result<(DVector<f64>, f64)> {
    if cov_tn.is_empty() {
        return Ok((cov_tn, var_t));
    }
    let chol = DenseCholesky::with_jitter(cov_nn)?;
    let mut w = cov_tn;
    chol.forward_vec(w.as_mut_slice());
    let var = var_t - w.norm_squared();
    chol.backward_vec(w.as_mut_slice());
    Ok((w, var))
}

fn neighbor_cov(spec: &CovarianceSpec, locs: &[Point], nb: &[usize], nugget: bool) -> DMatrix<f64> {
    let k = nb.len();
    let mut c = DMatrix::zeros(k, k);
    let diag = spec.sigma2 + if nugget { spec.nugget } else { 0.0 };
    for a in 0..k {
        c[(a, a)] = diag;
        for b in (a + 1)..k {
            let v = spec.covariance(&locs[nb[a]], &locs[nb[b]]);
            c[(a, b)] = v;
            c[(b, a)] = v;
        }
    }
    c
}

/// Sum over ordered points of the log density of `y_i` given its neighbors.
pub fn vecchia_loglik(structure: &VecchiaStructure, spec: &CovarianceSpec, locs: &[Point], y: &[f64]) -> Result<f64> {
    check_training(locs, y)?;
    if structure.len() != locs.len() {
        return Err(GpError::DimensionMismatch("structure was built for a different training set".into()));
    }
    spec.validate()?;
    let terms: Vec<f64> = (0..structure.len())
        .into_par_iter()
        .map(|k| -> Result<f64> {
            let i = structure.ordering[k];
            let nb = &structure.neighbors[k];
            let cov_nn = neighbor_cov(spec, locs, nb, true);
            let cov_tn = DVector::from_iterator(nb.len(), nb.iter().map(|&j| spec.covariance(&locs[i], &locs[j])));
            let (w, var) = conditional(cov_nn, cov_tn, spec.sigma2 + spec.nugget)?;
            if !(var > 0.0) {
                return Err(GpError::NonPositiveConditionalVariance { position: k, variance: var });
            }
            let mean: f64 = nb.iter().zip(w.iter()).map(|(&j, wj)| wj * y[j]).sum();
            let r = y[i] - mean;
            Ok(-0.5 * ((2.0 * PI * var).ln() + r * r / var))
        })
        .collect::<Result<_>>()?;
    // Summed in ordered position so the result does not depend on threading.
    Ok(terms.iter().sum())
}

/// Predicts each test point from its `m` nearest training points. The
/// distance mode follows the covariance family.
pub fn vecchia_predict(
    spec: &CovarianceSpec,
    locs: &[Point],
    y: &[f64],
    test: &[Point],
    m: usize,
    flavor: Flavor,
) -> Result<PredictiveDistribution> {
    check_training(locs, y)?;
    spec.validate()?;
    if m == 0 {
        return Err(GpError::OutOfRange("the prediction neighbor count must be at least 1".into()));
    }
    let coords = search_coordinates(spec, locs);
    let [sx, sy] = spec.axis_scales();
    let grid = (locs.len() > EXHAUSTIVE_SEARCH_LIMIT).then(|| GridIndex::full(&coords, GRID_POINTS_PER_CELL));
    let moments: Vec<(f64, f64)> = test
        .par_iter()
        .map(|t| -> Result<(f64, f64)> {
            let q = [t[0] * sx, t[1] * sy];
            let found = match &grid {
                Some(g) => g.knn(&q, m),
                None => knn_exhaustive(&coords, 0..coords.len(), &q, m),
            };
            let nb: Vec<usize> = found.into_iter().map(|(_, j)| j).collect();
            let cov_nn = neighbor_cov(spec, locs, &nb, true);
            let cov_tn = DVector::from_iterator(nb.len(), nb.iter().map(|&j| spec.covariance(t, &locs[j])));
            let (w, var) = conditional(cov_nn, cov_tn, spec.sigma2)?;
            let mean = nb.iter().zip(w.iter()).map(|(&j, wj)| wj * y[j]).sum();
            Ok((mean, var))
        })
        .collect::<Result<_>>()?;
    let (mean, var) = moments.into_iter().unzip();
    PredictiveDistribution::from_latent(mean, var, spec.nugget, flavor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{loglik_exact, predict_exact};
    use crate::kernel::Smoothness;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn instance(n: usize, seed: u64) -> (Vec<Point>, Vec<f64>) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let locs = (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let y = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        (locs, y)
    }

    fn std_spec() -> CovarianceSpec {
        CovarianceSpec::isotropic(1.0, 0.2 / 2.74, Smoothness::ThreeHalves, 0.5).unwrap()
    }

    #[test]
    fn structure_invariants() {
        let (locs, _) = instance(120, 1);
        let s = build_vecchia(&locs, &std_spec(), 7, 3).unwrap();
        let mut seen = s.ordering.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..120).collect::<Vec<_>>());
        let mut pos = vec![0; 120];
        for (k, &i) in s.ordering.iter().enumerate() {
            pos[i] = k;
        }
        for (k, nb) in s.neighbors.iter().enumerate() {
            assert_eq!(nb.len(), k.min(7));
            assert!(nb.iter().all(|&j| pos[j] < k));
        }
        assert_eq!(s, build_vecchia(&locs, &std_spec(), 7, 3).unwrap());
        assert!(build_vecchia(&locs, &std_spec(), 0, 3).is_err());
    }

    #[test]
    fn saturation_and_collinear_neighbors() {
        let (locs, _) = instance(30, 2);
        let s = build_vecchia(&locs, &std_spec(), 29, 5).unwrap();
        for (k, nb) in s.neighbors.iter().enumerate() {
            assert_eq!(nb.len(), k);
        }
        let line = [[0.0, 0.0], [0.1, 0.0], [0.2, 0.0]];
        let s = build_vecchia(&line, &std_spec(), 1, 11).unwrap();
        for k in 1..3 {
            let me = line[s.ordering[k]];
            let best = (0..k)
                .map(|p| s.ordering[p])
                .min_by(|&a, &b| {
                    let da = (line[a][0] - me[0]).abs();
                    let db = (line[b][0] - me[0]).abs();
                    da.partial_cmp(&db).unwrap().then(a.cmp(&b))
                })
                .unwrap();
            assert_eq!(s.neighbors[k], vec![best]);
        }
    }

    #[test]
    fn correlation_mode_scales_axes() {
        let spec = CovarianceSpec::ard(1.0, 0.05 / 2.74, 0.2 / 2.74, Smoothness::ThreeHalves, 0.5).unwrap();
        let pts = [[0.1, 0.0], [0.0, 0.1], [0.0, 0.0]];
        let p = vecchia_predict(&spec, &pts[..2], &[1.0, 2.0], &[pts[2]], 1, Flavor::Latent).unwrap();
        // The single neighbor is (0, 0.1) along the long-range axis.
        let w = spec.covariance(&pts[2], &pts[1]) / 1.5;
        assert_relative_eq!(p.mean[0], 2.0 * w, max_relative = 1e-14);
        assert_eq!(build_vecchia(&pts, &spec, 1, 0).unwrap().mode, DistanceMode::Correlation);
    }

    #[test]
    fn two_points_match_bivariate_density() {
        let locs = [[0.1, 0.2], [0.15, 0.22]];
        let y = [0.3, -0.4];
        let s = build_vecchia(&locs, &std_spec(), 1, 0).unwrap();
        let v = vecchia_loglik(&s, &std_spec(), &locs, &y).unwrap();
        let c = std_spec().covariance(&locs[0], &locs[1]);
        let a = 1.5;
        let det = a * a - c * c;
        let quad = (a * y[0] * y[0] - 2.0 * c * y[0] * y[1] + a * y[1] * y[1]) / det;
        assert_relative_eq!(v, -0.5 * quad - 0.5 * det.ln() - (2.0 * PI).ln(), max_relative = 1e-13);
    }

    #[test]
    fn exact_limits() {
        let (locs, y) = instance(80, 6);
        let spec = std_spec();
        let s = build_vecchia(&locs, &spec, 79, 4).unwrap();
        let exact = loglik_exact(&spec, &locs, &y).unwrap();
        assert_relative_eq!(vecchia_loglik(&s, &spec, &locs, &y).unwrap(), exact, max_relative = 1e-10);
        let test = [[0.5, 0.5], [0.9, 0.1], locs[3]];
        let pv = vecchia_predict(&spec, &locs, &y, &test, 80, Flavor::Observable).unwrap();
        let pe = predict_exact(&spec, &locs, &y, &test, Flavor::Observable).unwrap();
        for i in 0..3 {
            assert_relative_eq!(pv.mean[i], pe.mean[i], max_relative = 1e-9);
            assert_relative_eq!(pv.variance[i], pe.variance[i], max_relative = 1e-9);
        }
    }

    #[test]
    fn coincident_test_point_without_nugget() {
        let spec = CovarianceSpec::isotropic(1.0, 0.1, Smoothness::ThreeHalves, 0.0).unwrap();
        let locs = [[0.2, 0.2], [0.6, 0.7]];
        let p = vecchia_predict(&spec, &locs, &[1.7, -0.2], &[locs[0]], 1, Flavor::Latent).unwrap();
        assert_relative_eq!(p.mean[0], 1.7, max_relative = 1e-14);
        assert_eq!(p.variance[0], 0.0);
    }
}

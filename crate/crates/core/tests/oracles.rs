//! Fast paths checked against dense linear algebra done with nalgebra's own
//! factorizations.

use std::f64::consts::PI;

use approx::assert_relative_eq;
use gpscale_core::kernel::{build_cov, build_cov_sym, build_tapered_sparse};
use gpscale_core::kmeans::kmeanspp;
use gpscale_core::sparse::SparseCholesky;
use gpscale_core::{
    predict_exact, simulate_preset, taper_loglik, taper_predict, CovarianceSpec, Flavor, LowRankGp, Point, Preset,
    Split, TaperSpec,
};
use nalgebra::{DMatrix, DVector};

fn train(n: usize, seed: u64) -> (Vec<Point>, Vec<f64>) {
    let ds = simulate_preset(Preset::Std, n, seed).unwrap().select(Split::Train);
    (ds.locations, ds.values)
}

fn dense_loglik(sigma: &DMatrix<f64>, y: &[f64]) -> f64 {
    let c = sigma.clone().cholesky().expect("oracle matrix is positive definite");
    let y = DVector::from_column_slice(y);
    let logdet = 2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    -0.5 * y.dot(&c.solve(&y)) - 0.5 * logdet - 0.5 * y.len() as f64 * (2.0 * PI).ln()
}

/// `K_ab - Q_ab` with `Q = K_au K_uu⁻¹ K_ub`, and `Q_ab` itself.
fn nystrom(spec: &CovarianceSpec, a: &[Point], b: &[Point], u: &[Point]) -> (DMatrix<f64>, DMatrix<f64>) {
    let kuu = build_cov_sym(spec, u, false, None);
    let kua = build_cov(spec, u, a, false, None).unwrap();
    let kub = build_cov(spec, u, b, false, None).unwrap();
    let q = kua.transpose() * kuu.lu().solve(&kub).unwrap();
    let k = build_cov(spec, a, b, false, None).unwrap();
    (k - &q, q)
}

/// Dense approximate covariance over the training set: low rank part plus
/// the diagonal (FITC) or tapered (FSA) residual plus the nugget.
fn approx_cov(spec: &CovarianceSpec, locs: &[Point], u: &[Point], taper: Option<&TaperSpec>) -> DMatrix<f64> {
    let (r, q) = nystrom(spec, locs, locs, u);
    let n = locs.len();
    let mut s = q;
    for i in 0..n {
        for j in 0..n {
            let d = ((locs[i][0] - locs[j][0]).powi(2) + (locs[i][1] - locs[j][1]).powi(2)).sqrt();
            let w = match taper {
                None => f64::from(u8::from(i == j)),
                Some(t) => t.value(d),
            };
            s[(i, j)] += r[(i, j)] * w;
        }
        s[(i, i)] += spec.nugget;
    }
    s
}

#[test]
fn woodbury_logliks_equal_dense_approximate_covariance() {
    let (locs, y) = train(250, 11);
    let spec = Preset::Std.spec();
    for (m, taper) in [(30, None), (80, None), (20, Some(TaperSpec::new(0.08).unwrap())), (60, Some(TaperSpec::new(0.15).unwrap()))] {
        let u = kmeanspp(&locs, m, 3).unwrap();
        let fast = LowRankGp::fit(&spec, &locs, &y, &u, taper.as_ref(), None).unwrap().loglik();
        let oracle = dense_loglik(&approx_cov(&spec, &locs, &u, taper.as_ref()), &y);
        assert_relative_eq!(fast, oracle, max_relative = 1e-8);
    }
}

#[test]
fn lowrank_predictions_equal_dense_conditioning() {
    let (locs, y) = train(200, 12);
    let spec = Preset::Std.spec();
    let test: Vec<Point> = (0..25).map(|i| [0.04 * i as f64, 1.0 - 0.037 * i as f64]).collect();
    for taper in [None, Some(TaperSpec::new(0.1).unwrap())] {
        let u = kmeanspp(&locs, 40, 5).unwrap();
        let pred = LowRankGp::fit(&spec, &locs, &y, &u, taper.as_ref(), None).unwrap().predict(&test, Flavor::Latent).unwrap();
        let sigma = approx_cov(&spec, &locs, &u, taper.as_ref());
        let (r, q) = nystrom(&spec, &test, &locs, &u);
        let mut cross = q;
        if let Some(t) = &taper {
            for i in 0..test.len() {
                for j in 0..locs.len() {
                    let d = ((test[i][0] - locs[j][0]).powi(2) + (test[i][1] - locs[j][1]).powi(2)).sqrt();
                    cross[(i, j)] += r[(i, j)] * t.value(d);
                }
            }
        }
        let lu = sigma.lu();
        let w = lu.solve(&cross.transpose()).unwrap();
        let mean = &cross * lu.solve(&DVector::from_column_slice(&y)).unwrap();
        for i in 0..test.len() {
            let var = spec.sigma2 - cross.row(i).dot(&w.column(i).transpose());
            assert_relative_eq!(pred.mean[i], mean[i], max_relative = 1e-8, epsilon = 1e-12);
            assert_relative_eq!(pred.variance[i], var, max_relative = 1e-8);
        }
    }
}

#[test]
fn sparse_taper_path_equals_dense_tapered_path() {
    let (locs, y) = train(300, 13);
    let spec = Preset::Std.spec();
    let t = TaperSpec::new(0.1).unwrap();
    let dense = build_cov_sym(&spec, &locs, true, Some(&t));
    assert_relative_eq!(taper_loglik(&t, &spec, &locs, &y, None).unwrap().value, dense_loglik(&dense, &y), max_relative = 1e-10);

    let test: Vec<Point> = (0..30).map(|i| [0.033 * i as f64, 0.5 + 0.3 * (i as f64).sin()]).collect();
    let pred = taper_predict(&t, &spec, &locs, &y, &test, Flavor::Observable).unwrap();
    let cross = build_cov(&spec, &test, &locs, false, Some(&t)).unwrap();
    let lu = dense.lu();
    let mean = &cross * lu.solve(&DVector::from_column_slice(&y)).unwrap();
    let w = lu.solve(&cross.transpose()).unwrap();
    for i in 0..test.len() {
        let var = spec.sigma2 + spec.nugget - cross.row(i).dot(&w.column(i).transpose());
        assert_relative_eq!(pred.mean[i], mean[i], max_relative = 1e-8, epsilon = 1e-12);
        assert_relative_eq!(pred.variance[i], var, max_relative = 1e-10);
    }
}

#[test]
fn sparse_solve_matches_dense_solve() {
    let (locs, _) = train(200, 14);
    let spec = Preset::Std.spec();
    let t = TaperSpec::new(0.1).unwrap();
    let m = build_tapered_sparse(&spec, &locs, &t, true);
    let chol = SparseCholesky::new(&m, None).unwrap();
    let b: Vec<f64> = (0..200).map(|i| (i as f64 * 0.7).cos()).collect();
    let x = chol.solve(&b);
    let oracle = m.to_dense().lu().solve(&DVector::from_column_slice(&b)).unwrap();
    for (a, o) in x.iter().zip(oracle.iter()) {
        assert_relative_eq!(*a, *o, max_relative = 1e-8, epsilon = 1e-12);
    }
    let eig = m.to_dense().symmetric_eigenvalues();
    assert_relative_eq!(chol.logdet(), eig.iter().map(|v| v.ln()).sum::<f64>(), max_relative = 1e-10);
}

#[test]
fn exact_prediction_equals_joint_gaussian_conditioning() {
    let (locs, y) = train(200, 15);
    let spec = Preset::Std.spec();
    let test: Vec<Point> = (0..40).map(|i| [0.025 * i as f64, (0.1 * i as f64).sin().abs()]).collect();
    let pred = predict_exact(&spec, &locs, &y, &test, Flavor::Latent).unwrap();

    // Partition the joint covariance of (training observations, test latents).
    let n = locs.len();
    let all: Vec<Point> = locs.iter().chain(&test).copied().collect();
    let mut joint = build_cov_sym(&spec, &all, false, None);
    for i in 0..n {
        joint[(i, i)] += spec.nugget;
    }
    let s_tt = joint.view((0, 0), (n, n)).into_owned();
    let s_st = joint.view((n, 0), (test.len(), n)).into_owned();
    let s_ss = joint.view((n, n), (test.len(), test.len())).into_owned();
    let lu = s_tt.lu();
    let mean = &s_st * lu.solve(&DVector::from_column_slice(&y)).unwrap();
    let cov = s_ss - &s_st * lu.solve(&s_st.transpose()).unwrap();
    for i in 0..test.len() {
        assert_relative_eq!(pred.mean[i], mean[i], max_relative = 1e-10, epsilon = 1e-13);
        assert_relative_eq!(pred.variance[i], cov[(i, i)], max_relative = 1e-10);
    }
}

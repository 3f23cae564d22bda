//! Matérn covariance functions with closed-form half-integer smoothness,
//! Wendland tapers, and covariance-matrix assembly.
//!
//! Parameter vectors are always ordered `(nugget, sigma2, rho)` for the
//! isotropic family and `(nugget, sigma2, rho_x, rho_y)` for the ARD family.

use nalgebra::DMatrix;

use crate::error::{GpError, Result};
use crate::neighbors::{cross_pairs_within, pairs_within};
use crate::sparse::SparseMatrix;

/// A location in the plane.
pub type Point = [f64; 2];

const SQRT3: f64 = 1.732_050_807_568_877_2;
const SQRT5: f64 = 2.236_067_977_499_79;

/// Smoothness of the Matérn family. Only the half-integer values with a
/// closed form are supported.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Smoothness {
    /// nu = 1/2, the exponential covariance.
    Half,
    /// nu = 3/2.
    ThreeHalves,
    /// nu = 5/2.
    FiveHalves,
}

impl Smoothness {
    pub fn from_value(nu: f64) -> Result<Self> {
        if nu == 0.5 {
            Ok(Self::Half)
        } else if nu == 1.5 {
            Ok(Self::ThreeHalves)
        } else if nu == 2.5 {
            Ok(Self::FiveHalves)
        } else {
            Err(GpError::UnsupportedSmoothness(nu))
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Self::Half => 0.5,
            Self::ThreeHalves => 1.5,
            Self::FiveHalves => 2.5,
        }
    }

    /// Correlation at scaled distance `r = d / rho`.
    #[inline]
    pub fn correlation(self, r: f64) -> f64 {
        match self {
            Self::Half => (-r).exp(),
            Self::ThreeHalves => {
                let s = SQRT3 * r;
                (1.0 + s) * (-s).exp()
            }
            Self::FiveHalves => {
                let s = SQRT5 * r;
                (1.0 + s + s * s / 3.0) * (-s).exp()
            }
        }
    }

    /// Derivative of [`Self::correlation`] with respect to `r`.
    #[inline]
    pub fn correlation_derivative(self, r: f64) -> f64 {
        match self {
            Self::Half => -(-r).exp(),
            Self::ThreeHalves => -3.0 * r * (-SQRT3 * r).exp(),
            Self::FiveHalves => {
                let s = SQRT5 * r;
                -(5.0 * r / 3.0) * (1.0 + s) * (-s).exp()
            }
        }
    }
}

/// Range parameterization, which also selects the kernel family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Range {
    /// Isotropic Matérn with a single range.
    Isotropic(f64),
    /// ARD Matérn: the kernel argument is `|dx|/x + |dy|/y`.
    Ard { x: f64, y: f64 },
}

/// Covariance parameters of a zero-mean Matérn GP with a nugget.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CovarianceSpec {
    pub range: Range,
    /// Marginal variance of the latent process.
    pub sigma2: f64,
    pub nu: Smoothness,
    /// Error (nugget) variance.
    pub nugget: f64,
}

impl CovarianceSpec {
    pub fn isotropic(sigma2: f64, rho: f64, nu: Smoothness, nugget: f64) -> Result<Self> {
        let spec = Self { range: Range::Isotropic(rho), sigma2, nu, nugget };
        spec.validate()?;
        Ok(spec)
    }

    pub fn ard(sigma2: f64, rho_x: f64, rho_y: f64, nu: Smoothness, nugget: f64) -> Result<Self> {
        let spec = Self { range: Range::Ard { x: rho_x, y: rho_y }, sigma2, nu, nugget };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(GpError::InvalidParameter(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        let non_negative = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(GpError::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")))
            }
        };
        non_negative("sigma2", self.sigma2)?;
        non_negative("nugget", self.nugget)?;
        match self.range {
            Range::Isotropic(rho) => positive("rho", rho),
            Range::Ard { x, y } => {
                positive("rho_x", x)?;
                positive("rho_y", y)
            }
        }
    }

    pub fn is_ard(&self) -> bool {
        matches!(self.range, Range::Ard { .. })
    }

    /// Scaled separation entering the Matérn correlation.
    #[inline]
    pub fn scaled_distance(&self, a: &Point, b: &Point) -> f64 {
        let dx = a[0] - b[0];
        let dy = a[1] - b[1];
        match self.range {
            Range::Isotropic(rho) => (dx * dx + dy * dy).sqrt() / rho,
            Range::Ard { x, y } => ((dx / x).powi(2) + (dy / y).powi(2)).sqrt(),
        }
    }

    /// Per-axis scale factors that turn coordinates into correlation-distance
    /// coordinates (identity for the isotropic family).
    pub fn axis_scales(&self) -> [f64; 2] {
        match self.range {
            Range::Isotropic(_) => [1.0, 1.0],
            Range::Ard { x, y } => [1.0 / x, 1.0 / y],
        }
    }

    /// Latent covariance between two locations, nugget excluded.
    #[inline]
    pub fn covariance(&self, a: &Point, b: &Point) -> f64 {
        self.sigma2 * self.nu.correlation(self.scaled_distance(a, b))
    }

    /// Latent covariance at a Euclidean distance. Only defined for the
    /// isotropic family since the ARD form needs both axis offsets.
    pub fn covariance_at_distance(&self, d: f64) -> Result<f64> {
        if d < 0.0 {
            return Err(GpError::NegativeDistance(d));
        }
        match self.range {
            Range::Isotropic(rho) => Ok(self.sigma2 * self.nu.correlation(d / rho)),
            Range::Ard { .. } => Err(GpError::InvalidParameter(
                "ARD covariance needs a coordinate pair, not a distance".into(),
            )),
        }
    }

    /// Covariance together with its derivatives with respect to
    /// `sigma2` and the range parameter(s). `grad` must have length
    /// `n_params() - 1`.
    #[inline]
    pub fn covariance_with_gradient(&self, a: &Point, b: &Point, grad: &mut [f64]) -> f64 {
        let dx = (a[0] - b[0]).abs();
        let dy = (a[1] - b[1]).abs();
        match self.range {
            Range::Isotropic(rho) => {
                let r = (dx * dx + dy * dy).sqrt() / rho;
                let c = self.nu.correlation(r);
                grad[0] = c;
                grad[1] = -self.sigma2 * self.nu.correlation_derivative(r) * r / rho;
                self.sigma2 * c
            }
            Range::Ard { x, y } => {
                let (sx, sy) = (dx / x, dy / y);
                let r = (sx * sx + sy * sy).sqrt();
                let c = self.nu.correlation(r);
                // dr/dx = -sx²/(x r); the derivative of the correlation vanishes at r = 0.
                let dc = if r > 0.0 { self.sigma2 * self.nu.correlation_derivative(r) / r } else { 0.0 };
                grad[0] = c;
                grad[1] = -dc * sx * sx / x;
                grad[2] = -dc * sy * sy / y;
                self.sigma2 * c
            }
        }
    }

    pub fn n_params(&self) -> usize {
        match self.range {
            Range::Isotropic(_) => 3,
            Range::Ard { .. } => 4,
        }
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self.range {
            Range::Isotropic(_) => &["sigma_n2", "sigma2", "rho"],
            Range::Ard { .. } => &["sigma_n2", "sigma2", "rho_x", "rho_y"],
        }
    }

    /// Parameter vector `(nugget, sigma2, ranges...)`.
    pub fn params(&self) -> Vec<f64> {
        match self.range {
            Range::Isotropic(rho) => vec![self.nugget, self.sigma2, rho],
            Range::Ard { x, y } => vec![self.nugget, self.sigma2, x, y],
        }
    }

    /// Same family and smoothness with new parameter values.
    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        if params.len() != self.n_params() {
            return Err(GpError::DimensionMismatch(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                params.len()
            )));
        }
        let range = match self.range {
            Range::Isotropic(_) => Range::Isotropic(params[2]),
            Range::Ard { .. } => Range::Ard { x: params[2], y: params[3] },
        };
        let spec = Self { range, sigma2: params[1], nu: self.nu, nugget: params[0] };
        spec.validate()?;
        Ok(spec)
    }

    /// Every estimated parameter multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let p: Vec<f64> = self.params().iter().map(|v| v * factor).collect();
        self.with_params(&p)
    }
}

/// Members of the Wendland family that are positive definite in two dimensions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum WendlandShape {
    /// `(1-t)^2`
    Zero,
    /// `(1-t)^4 (1+4t)`
    #[default]
    One,
    /// `(1-t)^6 (3+18t+35t^2)/3`
    Two,
}

/// Compactly supported taper `T(d) = w(d / range)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaperSpec {
    pub range: f64,
    pub shape: WendlandShape,
}

impl TaperSpec {
    pub fn new(range: f64) -> Result<Self> {
        Self::with_shape(range, WendlandShape::default())
    }

    pub fn with_shape(range: f64, shape: WendlandShape) -> Result<Self> {
        if !(range > 0.0) || !range.is_finite() {
            return Err(GpError::InvalidParameter(format!(
                "taper range must be finite and > 0, got {range}"
            )));
        }
        Ok(Self { range, shape })
    }

    /// Taper multiplier in `[0, 1]`; exactly zero from `range` on.
    #[inline]
    pub fn value(&self, d: f64) -> f64 {
        let t = d / self.range;
        if t >= 1.0 {
            return 0.0;
        }
        let u = 1.0 - t;
        match self.shape {
            WendlandShape::Zero => u * u,
            WendlandShape::One => {
                let u2 = u * u;
                u2 * u2 * (1.0 + 4.0 * t)
            }
            WendlandShape::Two => {
                let u3 = u * u * u;
                u3 * u3 * (3.0 + 18.0 * t + 35.0 * t * t) / 3.0
            }
        }
    }
}

#[inline]
pub(crate) fn euclidean(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

/// Dense covariance matrix between location lists `a` and `b`.
///
/// With `add_nugget` the two lists must be identical; the nugget is then
/// added on the diagonal. A taper multiplies every entry.
pub fn build_cov(
    spec: &CovarianceSpec,
    a: &[Point],
    b: &[Point],
    add_nugget: bool,
    taper: Option<&TaperSpec>,
) -> Result<DMatrix<f64>> {
    if add_nugget && a != b {
        return Err(GpError::DimensionMismatch(
            "the nugget can only be added when both location lists are the same".into(),
        ));
    }
    if std::ptr::eq(a, b) || (add_nugget && a == b) {
        return Ok(build_cov_sym(spec, a, add_nugget, taper));
    }
    let mut out = DMatrix::zeros(a.len(), b.len());
    for (j, pb) in b.iter().enumerate() {
        for (i, pa) in a.iter().enumerate() {
            let mut v = spec.covariance(pa, pb);
            if let Some(t) = taper {
                v *= t.value(euclidean(pa, pb));
            }
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

/// Symmetric covariance matrix over one location list.
pub fn build_cov_sym(
    spec: &CovarianceSpec,
    locs: &[Point],
    add_nugget: bool,
    taper: Option<&TaperSpec>,
) -> DMatrix<f64> {
    let n = locs.len();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        out[(j, j)] = spec.sigma2 + if add_nugget { spec.nugget } else { 0.0 };
        for i in (j + 1)..n {
            let mut v = spec.covariance(&locs[i], &locs[j]);
            if let Some(t) = taper {
                v *= t.value(euclidean(&locs[i], &locs[j]));
            }
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Tapered covariance over one location list in sparse form. Only pairs
/// closer than the taper range are stored.
pub fn build_tapered_sparse(
    spec: &CovarianceSpec,
    locs: &[Point],
    taper: &TaperSpec,
    add_nugget: bool,
) -> SparseMatrix {
    let rows = pairs_within(locs, taper.range);
    let diag = spec.sigma2 + if add_nugget { spec.nugget } else { 0.0 };
    let mut offsets = Vec::with_capacity(locs.len() + 1);
    let mut indices = Vec::new();
    let mut values = Vec::new();
    offsets.push(0);
    for (i, row) in rows.iter().enumerate() {
        for &j in row {
            indices.push(j);
            values.push(if i == j {
                diag
            } else {
                spec.covariance(&locs[i], &locs[j]) * taper.value(euclidean(&locs[i], &locs[j]))
            });
        }
        offsets.push(indices.len());
    }
    SparseMatrix::from_csr_unchecked(locs.len(), locs.len(), offsets, indices, values)
}

/// Tapered cross-covariance rows: for every location in `a`, the sorted
/// `(index into b, value)` pairs within the taper range.
pub fn tapered_cross_rows(
    spec: &CovarianceSpec,
    a: &[Point],
    b: &[Point],
    taper: &TaperSpec,
) -> Vec<Vec<(usize, f64)>> {
    cross_pairs_within(a, b, taper.range)
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            row.into_iter()
                .map(|j| {
                    let d = euclidean(&a[i], &b[j]);
                    (j, spec.covariance(&a[i], &b[j]) * taper.value(d))
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn std_spec(nu: Smoothness, rho: f64) -> CovarianceSpec {
        CovarianceSpec::isotropic(1.0, rho, nu, 0.5).unwrap()
    }

    #[test]
    fn effective_range_calibration() {
        for (nu, rho) in [
            (Smoothness::Half, 0.2 / 3.0),
            (Smoothness::ThreeHalves, 0.2 / 2.74),
            (Smoothness::FiveHalves, 0.2 / 2.65),
        ] {
            let c = std_spec(nu, rho).covariance_at_distance(0.2).unwrap();
            assert!((0.048..=0.052).contains(&c), "nu={nu:?} corr={c}");
        }
    }

    #[test]
    fn origin_and_exponential() {
        let s = CovarianceSpec::isotropic(2.3, 0.1, Smoothness::FiveHalves, 0.0).unwrap();
        assert_eq!(s.covariance_at_distance(0.0).unwrap(), 2.3);
        let e = std_spec(Smoothness::Half, 1.0).covariance_at_distance(1.0).unwrap();
        assert_relative_eq!(e, (-1.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(e, 0.367879, epsilon = 1e-6);
    }

    #[test]
    fn unsupported_smoothness_and_negative_distance() {
        assert!(matches!(Smoothness::from_value(1.0), Err(GpError::UnsupportedSmoothness(_))));
        let s = std_spec(Smoothness::ThreeHalves, 0.1);
        assert!(matches!(s.covariance_at_distance(-0.1), Err(GpError::NegativeDistance(_))));
    }

    #[test]
    fn correlation_is_monotone_and_vanishes() {
        for nu in [Smoothness::Half, Smoothness::ThreeHalves, Smoothness::FiveHalves] {
            let mut prev = 1.0;
            for k in 1..200 {
                let c = nu.correlation(k as f64 * 0.1);
                assert!(c < prev);
                prev = c;
            }
            assert!(nu.correlation(60.0) < 1e-20);
        }
    }

    #[test]
    fn correlation_derivative_matches_finite_difference() {
        for nu in [Smoothness::Half, Smoothness::ThreeHalves, Smoothness::FiveHalves] {
            for r in [0.1, 0.7, 2.0, 4.5] {
                let h = 1e-6;
                let fd = (nu.correlation(r + h) - nu.correlation(r - h)) / (2.0 * h);
                assert_relative_eq!(nu.correlation_derivative(r), fd, max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn ard_agrees_with_iso_on_axis_aligned_pairs() {
        let rho = 0.13;
        let iso = std_spec(Smoothness::ThreeHalves, rho);
        let ard = CovarianceSpec::ard(1.0, rho, rho, Smoothness::ThreeHalves, 0.5).unwrap();
        let a = [0.3, 0.4];
        for b in [[0.5, 0.4], [0.3, 0.1], [0.31, 0.4]] {
            assert_relative_eq!(iso.covariance(&a, &b), ard.covariance(&a, &b), max_relative = 1e-14);
        }
        // Equal ranges reduce to the isotropic kernel everywhere.
        let b = [0.4, 0.5];
        assert_relative_eq!(iso.covariance(&a, &b), ard.covariance(&a, &b), max_relative = 1e-14);
        let stretched = CovarianceSpec::ard(1.0, rho, 2.0 * rho, Smoothness::ThreeHalves, 0.5).unwrap();
        assert!(stretched.covariance(&a, &b) > iso.covariance(&a, &b));
    }

    #[test]
    fn taper_values() {
        let t = TaperSpec::new(0.1).unwrap();
        assert_eq!(t.value(0.0), 1.0);
        assert_eq!(t.value(0.1), 0.0);
        assert_eq!(t.value(0.3), 0.0);
        // Expanded polynomial 1 - 10t^2 + 20t^3 - 15t^4 + 4t^5 evaluated at t = 1/2.
        let x: f64 = 0.5;
        let expanded = 1.0 - 10.0 * x.powi(2) + 20.0 * x.powi(3) - 15.0 * x.powi(4) + 4.0 * x.powi(5);
        assert_relative_eq!(t.value(0.05), expanded, max_relative = 1e-14);
        assert_relative_eq!(t.value(0.05), 0.1875, max_relative = 1e-14);
        for shape in [WendlandShape::Zero, WendlandShape::One, WendlandShape::Two] {
            let t = TaperSpec::with_shape(1.0, shape).unwrap();
            assert_eq!(t.value(0.0), 1.0);
            let near = t.value(1.0 - 1e-9);
            assert!((0.0..1e-8).contains(&near));
        }
        assert!(TaperSpec::new(0.0).is_err());
    }

    #[test]
    fn build_cov_examples() {
        let s = CovarianceSpec::isotropic(1.0, 0.1, Smoothness::ThreeHalves, 0.5).unwrap();
        let p = [[0.0, 0.0]];
        let m = build_cov(&s, &p, &p, true, None).unwrap();
        assert_eq!(m[(0, 0)], 1.5);
        let dup = [[0.2, 0.2], [0.2, 0.2]];
        let m = build_cov(&s, &dup, &dup, false, None).unwrap();
        assert!(m.iter().all(|&v| v == 1.0));
        let other = [[0.5, 0.5]];
        assert!(build_cov(&s, &p, &other, true, None).is_err());
        let cross = build_cov(&s, &dup, &other, false, None).unwrap();
        assert_eq!(cross.shape(), (2, 1));
    }

    #[test]
    fn tapered_sparse_matches_dense() {
        let s = std_spec(Smoothness::ThreeHalves, 0.2 / 2.74);
        let locs: Vec<Point> = (0..60).map(|i| [((i * 37) % 60) as f64 / 60.0, ((i * 11) % 17) as f64 / 17.0]).collect();
        let t = TaperSpec::new(0.15).unwrap();
        let dense = build_cov(&s, &locs, &locs, true, Some(&t)).unwrap();
        let sparse = build_tapered_sparse(&s, &locs, &t, true).to_dense();
        assert_relative_eq!(dense, sparse, epsilon = 1e-15);
        for i in 0..locs.len() {
            for j in 0..locs.len() {
                if euclidean(&locs[i], &locs[j]) >= 0.15 {
                    assert_eq!(dense[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn params_round_trip() {
        let s = CovarianceSpec::ard(1.0, 0.02, 0.07, Smoothness::ThreeHalves, 0.5).unwrap();
        assert_eq!(s.params(), vec![0.5, 1.0, 0.02, 0.07]);
        assert_eq!(s.with_params(&s.params()).unwrap(), s);
        let d = s.scaled(2.0).unwrap();
        assert_eq!(d.params(), vec![1.0, 2.0, 0.04, 0.14]);
        assert!(s.with_params(&[0.5, 1.0, -1.0, 0.1]).is_err());
    }
}

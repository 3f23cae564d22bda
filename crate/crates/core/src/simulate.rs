//! Simulated datasets on the unit square: training and interpolation points
//! outside the upper-right quarter, extrapolation points inside it, and one
//! latent Matérn GP draw shared by all three sets.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Dataset, Split};
use crate::dense::DenseCholesky;
use crate::error::{GpError, Result};
use crate::kernel::{build_cov, build_cov_sym, CovarianceSpec, Point, Smoothness};

/// Largest total point count (all three sets) sampled with one joint Cholesky.
pub const JOINT_SAMPLING_LIMIT: usize = 30_000;
const CONDITIONAL_BLOCK: usize = 2_000;

/// Named parameter settings. Unless varied, σ² = 1, σ_n² = 0.5, ν = 1.5 and
/// the range gives an effective range of 0.2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Preset {
    Std,
    SmallRange,
    LargeRange,
    LowNugget,
    Aniso,
    Nu05,
    Nu25,
}

impl Preset {
    pub const ALL: [Preset; 7] = [
        Preset::Std,
        Preset::SmallRange,
        Preset::LargeRange,
        Preset::LowNugget,
        Preset::Aniso,
        Preset::Nu05,
        Preset::Nu25,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Std => "std",
            Preset::SmallRange => "small_range",
            Preset::LargeRange => "large_range",
            Preset::LowNugget => "low_nugget",
            Preset::Aniso => "aniso",
            Preset::Nu05 => "nu05",
            Preset::Nu25 => "nu25",
        }
    }

    pub fn spec(self) -> CovarianceSpec {
        let iso = |rho: f64, nu: Smoothness, nugget: f64| CovarianceSpec::isotropic(1.0, rho, nu, nugget).unwrap();
        match self {
            Preset::Std => iso(0.2 / 2.74, Smoothness::ThreeHalves, 0.5),
            Preset::SmallRange => iso(0.05 / 2.74, Smoothness::ThreeHalves, 0.5),
            Preset::LargeRange => iso(0.5 / 2.74, Smoothness::ThreeHalves, 0.5),
            Preset::LowNugget => iso(0.2 / 2.74, Smoothness::ThreeHalves, 0.1),
            Preset::Aniso => {
                CovarianceSpec::ard(1.0, 0.05 / 2.74, 0.2 / 2.74, Smoothness::ThreeHalves, 0.5).unwrap()
            }
            Preset::Nu05 => iso(0.2 / 3.0, Smoothness::Half, 0.5),
            Preset::Nu25 => iso(0.2 / 2.65, Smoothness::FiveHalves, 0.5),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = GpError;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| GpError::InvalidParameter(format!("unknown simulation preset {s:?}")))
    }
}

fn outside_upper_quarter(rng: &mut ChaCha20Rng) -> Point {
    loop {
        let p = [rng.random::<f64>(), rng.random::<f64>()];
        if !(p[0] >= 0.5 && p[1] >= 0.5) {
            return p;
        }
    }
}

fn upper_quarter(rng: &mut ChaCha20Rng) -> Point {
    [0.5 + 0.5 * rng.random::<f64>(), 0.5 + 0.5 * rng.random::<f64>()]
}

fn normals(rng: &mut ChaCha20Rng, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
}

/// Draws `n` training, `n` interpolation and `n` extrapolation points (in
/// that order) with latent values and noisy responses.
pub fn simulate_dataset(spec: &CovarianceSpec, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(GpError::OutOfRange("each set needs at least one point".into()));
    }
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut locations = Vec::with_capacity(3 * n);
    locations.extend((0..2 * n).map(|_| outside_upper_quarter(&mut rng)));
    locations.extend((0..n).map(|_| upper_quarter(&mut rng)));
    let split: Vec<Split> = [Split::Train, Split::TestInterp, Split::TestExtrap]
        .iter()
        .flat_map(|&s| std::iter::repeat_n(s, n))
        .collect();

    let latent: Vec<f64> = if spec.sigma2 == 0.0 {
        vec![0.0; 3 * n]
    } else if 3 * n <= JOINT_SAMPLING_LIMIT {
        let chol = DenseCholesky::with_jitter(build_cov_sym(spec, &locations, false, None))?;
        (chol.l() * normals(&mut rng, 3 * n)).iter().copied().collect()
    } else {
        sample_conditionally(spec, &locations, n, &mut rng)?
    };
    let values = latent
        .iter()
        .map(|f| f + spec.nugget.sqrt() * Distribution::<f64>::sample(&StandardNormal, &mut rng))
        .collect();
    Ok(Dataset { locations, values, latent: Some(latent), covariates: None, split })
}

/// Exact draw on the training set; each test block is then drawn from its
/// conditional law given the training values.
fn sample_conditionally(spec: &CovarianceSpec, locs: &[Point], n: usize, rng: &mut ChaCha20Rng) -> Result<Vec<f64>> {
    log::info!("sampling {} test points conditionally on the training draw", 2 * n);
    let train = &locs[..n];
    let chol = DenseCholesky::with_jitter(build_cov_sym(spec, train, false, None))?;
    let f_train = chol.l() * normals(rng, n);
    let mut w = f_train.clone();
    chol.forward_vec(w.as_mut_slice());
    let mut out: Vec<f64> = f_train.iter().copied().collect();
    for block in locs[n..].chunks(CONDITIONAL_BLOCK) {
        let mut cross: DMatrix<f64> = build_cov(spec, train, block, false, None)?;
        chol.forward_in_place(&mut cross);
        let mean = cross.tr_mul(&w);
        let cov = build_cov_sym(spec, block, false, None) - cross.tr_mul(&cross);
        let c = DenseCholesky::with_jitter(cov)?;
        let draw = mean + c.l() * normals(rng, block.len());
        out.extend(draw.iter());
    }
    Ok(out)
}

pub fn simulate_preset(preset: Preset, n: usize, seed: u64) -> Result<Dataset> {
    simulate_dataset(&preset.spec(), n, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_and_sizes() {
        let ds = simulate_preset(Preset::Std, 300, 1).unwrap();
        assert_eq!(ds.len(), 900);
        for (p, s) in ds.locations.iter().zip(&ds.split) {
            assert!((0.0..1.0).contains(&p[0]) && (0.0..1.0).contains(&p[1]));
            let upper = p[0] >= 0.5 && p[1] >= 0.5;
            assert_eq!(upper, *s == Split::TestExtrap);
        }
        for s in Split::ALL {
            assert_eq!(ds.select(s).len(), 300);
        }
        assert_eq!(ds, simulate_preset(Preset::Std, 300, 1).unwrap());
        assert_ne!(ds.values, simulate_preset(Preset::Std, 300, 2).unwrap().values);
    }

    #[test]
    fn single_point_sets() {
        let ds = simulate_preset(Preset::Aniso, 1, 9).unwrap();
        let t = ds.locations[0];
        let e = ds.locations[2];
        assert!(!(t[0] >= 0.5 && t[1] >= 0.5));
        assert!(e[0] >= 0.5 && e[1] >= 0.5);
    }

    #[test]
    fn zero_variance_gives_pure_noise() {
        let spec = CovarianceSpec::isotropic(0.0, 0.1, Smoothness::ThreeHalves, 0.5).unwrap();
        let ds = simulate_dataset(&spec, 3400, 5).unwrap();
        assert!(ds.latent.as_ref().unwrap().iter().all(|&f| f == 0.0));
        let n = ds.len() as f64;
        let mean = ds.values.iter().sum::<f64>() / n;
        let var = ds.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var - 0.5).abs() < 0.015, "variance {var}");
    }

    #[test]
    fn conditional_fallback_keeps_the_marginal_law() {
        let spec = Preset::Std.spec();
        let locs: Vec<Point> = (0..60).map(|i| [(i % 10) as f64 * 0.1, (i / 10) as f64 * 0.1]).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let f = sample_conditionally(&spec, &locs, 20, &mut rng).unwrap();
        assert_eq!(f.len(), 60);
        assert!(f.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn preset_names_round_trip() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!("nope".parse::<Preset>().is_err());
    }
}

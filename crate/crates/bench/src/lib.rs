//! Shared fixtures for the benchmarks.

use gpscale_core::{simulate_preset, taper_range_for_nnz, Approximation, Point, Preset, Split, TaperSpec};

/// Training locations and responses of the standard scenario.
pub fn training_set(n: usize, seed: u64) -> (Vec<Point>, Vec<f64>) {
    let ds = simulate_preset(Preset::Std, n, seed).expect("standard preset simulates").select(Split::Train);
    (ds.locations, ds.values)
}

/// One mid-sweep tier per method, sized for a training set of `locs`.
pub fn methods(locs: &[Point]) -> Vec<Approximation> {
    let taper = |nnz| TaperSpec::new(taper_range_for_nnz(locs, nnz).expect("enough points")).expect("positive range");
    vec![
        Approximation::Exact,
        Approximation::Vecchia { neighbors: 20, seed: 0, predict_neighbors: None },
        Approximation::Taper { taper: taper(30) },
        Approximation::Fitc { inducing: 254, seed: 0 },
        Approximation::Fsa { inducing: 24, seed: 0, taper: taper(8) },
    ]
}

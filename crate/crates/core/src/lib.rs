//! Exact and approximate Gaussian process regression for two-dimensional
//! spatial data: Matérn covariances, Vecchia, FITC/FSA and covariance
//! tapering, plus simulation, scoring and maximum-likelihood fitting.

pub mod data;
pub mod dense;
pub mod error;
pub mod estimate;
pub mod exact;
pub mod kernel;
pub mod kmeans;
pub mod lowrank;
pub mod method;
pub mod metrics;
pub mod neighbors;
pub mod predict;
pub mod simulate;
pub mod sparse;
pub mod taper;
pub mod vecchia;

pub use data::{Dataset, LinearTrend, Split};
pub use error::{GpError, Result};
pub use estimate::{default_init, fit_params, FitOptions, FitResult};
pub use exact::{grad_loglik_exact, loglik_exact, predict_exact, ExactGp};
pub use kernel::{CovarianceSpec, Point, Range, Smoothness, TaperSpec, WendlandShape};
pub use lowrank::{lowrank_loglik, lowrank_predict, LowRankConfig, LowRankGp};
pub use method::{Approximation, GpModel, LoglikEval};
pub use metrics::{aggregate_estimates, compare_to_exact, kl_gaussian, score_predictions, Scores};
pub use predict::{Flavor, PredictiveDistribution};
pub use simulate::{simulate_dataset, simulate_preset, Preset};
pub use taper::{taper_loglik, taper_predict, taper_range_for_nnz, TaperGp, TaperLoglik};
pub use vecchia::{build_vecchia, vecchia_loglik, vecchia_predict, DistanceMode, VecchiaStructure};

//! Executes a scenario: repetitions × methods × tiers × tasks, timing each
//! task and streaming records to a CSV sink.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::time::Instant;

use gpscale_core::{
    aggregate_estimates, compare_to_exact, default_init, fit_params, score_predictions, simulate_dataset,
    taper_range_for_nnz, Approximation, CovarianceSpec, Dataset, FitOptions, Flavor, GpError, GpModel,
    LinearTrend, Point, PredictiveDistribution, Split, TaperSpec,
};
use thiserror::Error;

use crate::config::{DataSource, MethodKind, Scenario, Task};
use crate::record::{BenchmarkRecord, CsvSink, FAILED, SKIPPED};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("cannot load data: {0}")]
    Data(#[from] GpError),
    #[error("cannot open {path}: {source}")]
    Open { path: String, source: std::io::Error },
    #[error("cannot write results: {0}")]
    Output(#[from] csv::Error),
    #[error("cannot build thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub records: usize,
    pub failed: usize,
    pub skipped: usize,
}

/// One tuning tier of one method.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Tier {
    Exact,
    Vecchia(usize),
    Tapering(usize),
    Fitc(usize),
    /// Inducing points and nonzeros per row of the residual taper.
    Fsa(usize, usize),
}

impl Tier {
    pub fn value_label(&self) -> String {
        match *self {
            Tier::Exact => "full".into(),
            Tier::Vecchia(k) | Tier::Tapering(k) | Tier::Fitc(k) => k.to_string(),
            Tier::Fsa(m, k) => format!("{m}:{k}"),
        }
    }

    /// The approximation for this tier on these training locations. Taper
    /// ranges are calibrated to the requested nonzeros per row.
    pub fn approximation(&self, train: &[Point], seed: u64, predict_neighbors: Option<usize>) -> gpscale_core::Result<Approximation> {
        Ok(match *self {
            Tier::Exact => Approximation::Exact,
            Tier::Vecchia(m) => Approximation::Vecchia { neighbors: m, seed, predict_neighbors },
            Tier::Tapering(k) => Approximation::Taper { taper: TaperSpec::new(taper_range_for_nnz(train, k)?)? },
            Tier::Fitc(m) => Approximation::Fitc { inducing: m, seed },
            Tier::Fsa(m, k) => Approximation::Fsa { inducing: m, seed, taper: TaperSpec::new(taper_range_for_nnz(train, k)?)? },
        })
    }
}

#[derive(Clone, Debug)]
pub struct Lane {
    pub method: MethodKind,
    /// 0 for exact, 1-based otherwise.
    pub tier: usize,
    pub spec: Tier,
}

/// Every (method, tier) pair of the scenario, in sweep order.
pub fn lanes(s: &Scenario) -> Vec<Lane> {
    let mut out = Vec::new();
    for &method in &s.methods {
        let tiers: Vec<Tier> = match method {
            MethodKind::Exact => vec![Tier::Exact],
            MethodKind::Vecchia => s.tiers.vecchia.iter().map(|&m| Tier::Vecchia(m)).collect(),
            MethodKind::Tapering => s.tiers.tapering.iter().map(|&k| Tier::Tapering(k)).collect(),
            MethodKind::Fitc => s.tiers.fitc.iter().map(|&m| Tier::Fitc(m)).collect(),
            MethodKind::Fsa => s.tiers.fsa.iter().map(|&(m, k)| Tier::Fsa(m, k)).collect(),
        };
        let offset = usize::from(method != MethodKind::Exact);
        out.extend(tiers.into_iter().enumerate().map(|(i, spec)| Lane { method, tier: i + offset, spec }));
    }
    out
}

/// The dataset for one repetition. CSV data is the same for every repetition.
pub fn load_dataset(s: &Scenario, seed: u64) -> Result<Dataset, RunError> {
    match &s.data {
        DataSource::Simulate { n, .. } => Ok(simulate_dataset(&s.truth.expect("simulated data has a truth"), *n, seed)?),
        DataSource::Csv(path) => {
            let f = File::open(path).map_err(|source| RunError::Open { path: path.display().to_string(), source })?;
            let ds = Dataset::read_csv(BufReader::new(f))?;
            ds.validate()?;
            Ok(ds)
        }
    }
}

/// Training data with any linear trend removed, and the held-out sets.
pub struct Prepared {
    pub train: Dataset,
    /// Training responses minus the trend.
    pub y: Vec<f64>,
    pub trend: Option<LinearTrend>,
    pub interp: Dataset,
    pub extrap: Dataset,
    /// Simulated data: score latent predictions against the latent truth.
    pub latent: bool,
}

impl Prepared {
    pub fn new(ds: &Dataset) -> Result<Self, GpError> {
        let train = ds.select(Split::Train);
        if train.is_empty() {
            return Err(GpError::DimensionMismatch("no training points".into()));
        }
        let trend = match &train.covariates {
            Some(x) => Some(LinearTrend::fit(x, &train.values)?),
            None => None,
        };
        let y = match (&trend, &train.covariates) {
            (Some(t), Some(x)) => train.values.iter().zip(t.predict(x)?).map(|(v, m)| v - m).collect(),
            _ => train.values.clone(),
        };
        Ok(Self {
            interp: ds.select(Split::TestInterp),
            extrap: ds.select(Split::TestExtrap),
            latent: ds.latent.is_some(),
            train,
            y,
            trend,
        })
    }

    pub fn test_set(&self, task: Task) -> &Dataset {
        match task {
            Task::PredictTrain => &self.train,
            Task::PredictInterp => &self.interp,
            Task::PredictExtrap => &self.extrap,
            _ => unreachable!("not a prediction task"),
        }
    }

    pub fn flavor(&self) -> Flavor {
        if self.latent {
            Flavor::Latent
        } else {
            Flavor::Observable
        }
    }

    /// Values predictions are scored against.
    pub fn truth_for<'a>(&self, set: &'a Dataset) -> &'a [f64] {
        match &set.latent {
            Some(l) if self.latent => l,
            _ => &set.values,
        }
    }

    /// Adds the trend back to predictive means.
    pub fn add_trend(&self, set: &Dataset, mut pred: PredictiveDistribution) -> Result<PredictiveDistribution, GpError> {
        if let (Some(t), Some(x)) = (&self.trend, &set.covariates) {
            for (m, b) in pred.mean.iter_mut().zip(t.predict(x)?) {
                *m += b;
            }
        }
        Ok(pred)
    }
}

/// Untimed exact quantities that approximate results are compared with.
#[derive(Default)]
struct ExactReference {
    loglik: BTreeMap<Task, Option<f64>>,
    predictions: BTreeMap<Task, Option<PredictiveDistribution>>,
    fitted: Option<Option<CovarianceSpec>>,
}

struct Rep<'a> {
    scenario: &'a Scenario,
    rep: usize,
    seed: u64,
    data: Prepared,
    exact_feasible: bool,
    reference: ExactReference,
}

/// Outcome of one task: metrics plus the timed wall-clock seconds.
struct TaskOutcome {
    metrics: Vec<(String, f64)>,
    wall: f64,
    estimate: Option<Vec<f64>>,
}

impl Rep<'_> {
    fn options(&self) -> FitOptions {
        FitOptions { max_iter: self.scenario.max_iter, ..FitOptions::default() }
    }

    fn eval_spec(&self, task: Task) -> CovarianceSpec {
        let spec = self.scenario.fit_template().expect("likelihood tasks require parameters");
        match task {
            Task::LoglikDoubled => spec.scaled(2.0).expect("doubling keeps parameters positive"),
            _ => spec,
        }
    }

    fn init(&self) -> Result<CovarianceSpec, GpError> {
        let nu = self.scenario.fit_smoothness().ok_or_else(|| GpError::InvalidParameter("no smoothness to fit with".into()))?;
        default_init(&self.data.train.locations, &self.data.y, nu, self.scenario.fit_ard())
    }

    fn model(&self, lane: &Tier, spec: &CovarianceSpec) -> Result<GpModel, GpError> {
        let approx = lane.approximation(&self.data.train.locations, self.seed, self.scenario.vecchia_predict_neighbors)?;
        GpModel::new(approx, &self.data.train.locations, &self.data.y, spec)
    }

    /// Timed log-likelihood evaluation, symbolic analysis excluded.
    fn timed_loglik(&self, lane: &Tier, spec: &CovarianceSpec) -> Result<(f64, f64), GpError> {
        let start = Instant::now();
        let model = self.model(lane, spec)?;
        let eval = model.loglik_detailed(spec)?;
        let wall = (start.elapsed() - eval.symbolic_time).as_secs_f64();
        Ok((eval.value, wall))
    }

    /// Parameters for prediction: the truth on simulated data, otherwise a
    /// fit with this method, whose time then counts towards prediction.
    fn prediction_spec(&self, lane: &Tier) -> Result<(CovarianceSpec, f64), GpError> {
        if self.data.latent {
            if let Some(spec) = self.scenario.fit_template() {
                return Ok((spec, 0.0));
            }
        }
        let init = self.init()?;
        let start = Instant::now();
        let model = self.model(lane, &init)?;
        let fit = fit_params(&model, &init, &self.options())?;
        Ok((fit.spec_hat, start.elapsed().as_secs_f64()))
    }

    fn predict(&self, lane: &Tier, spec: &CovarianceSpec, task: Task) -> Result<(PredictiveDistribution, f64), GpError> {
        let set = self.data.test_set(task);
        let start = Instant::now();
        let model = self.model(lane, spec)?;
        let pred = model.predict(spec, &set.locations, self.data.flavor())?;
        let wall = start.elapsed().as_secs_f64();
        Ok((self.data.add_trend(set, pred)?, wall))
    }

    fn exact_loglik(&mut self, task: Task) -> Option<f64> {
        if !self.exact_feasible {
            return None;
        }
        if !self.reference.loglik.contains_key(&task) {
            let spec = self.eval_spec(task);
            let v = self.model(&Tier::Exact, &spec).and_then(|m| m.loglik(&spec));
            if let Err(e) = &v {
                log::warn!("exact reference log-likelihood failed: {e}");
            }
            self.reference.loglik.insert(task, v.ok());
        }
        self.reference.loglik[&task]
    }

    fn exact_prediction(&mut self, task: Task) -> Option<&PredictiveDistribution> {
        if !self.exact_feasible || self.data.test_set(task).is_empty() {
            return None;
        }
        if self.reference.fitted.is_none() {
            let spec = self.prediction_spec(&Tier::Exact);
            if let Err(e) = &spec {
                log::warn!("exact reference fit failed: {e}");
            }
            self.reference.fitted = Some(spec.ok().map(|s| s.0));
        }
        if !self.reference.predictions.contains_key(&task) {
            let pred = match self.reference.fitted.unwrap() {
                Some(spec) => self.predict(&Tier::Exact, &spec, task).map(|p| p.0),
                None => Err(GpError::NonFiniteInit),
            };
            if let Err(e) = &pred {
                log::warn!("exact reference prediction failed: {e}");
            }
            self.reference.predictions.insert(task, pred.ok());
        }
        self.reference.predictions[&task].as_ref()
    }

    fn run_task(&mut self, lane: &Tier, task: Task) -> Result<TaskOutcome, GpError> {
        match task {
            Task::LoglikTrue | Task::LoglikDoubled => {
                let spec = self.eval_spec(task);
                let (value, wall) = self.timed_loglik(lane, &spec)?;
                let mut metrics = vec![("loglik".to_string(), value)];
                if let Some(exact) = self.exact_loglik(task) {
                    metrics.push(("abs_diff_exact".into(), (value - exact).abs()));
                }
                Ok(TaskOutcome { metrics, wall, estimate: None })
            }
            Task::Estimate => {
                let init = self.init()?;
                let start = Instant::now();
                let model = self.model(lane, &init)?;
                let fit = fit_params(&model, &init, &self.options())?;
                let wall = start.elapsed().as_secs_f64();
                let params = fit.spec_hat.params();
                let mut metrics: Vec<(String, f64)> =
                    fit.spec_hat.param_names().iter().zip(&params).map(|(n, v)| (n.to_string(), *v)).collect();
                metrics.push(("loglik".into(), fit.loglik_at_optimum));
                metrics.push(("iterations".into(), fit.iterations as f64));
                metrics.push(("converged".into(), f64::from(u8::from(fit.converged))));
                if !fit.converged {
                    log::warn!("estimation did not converge after {} iterations", fit.iterations);
                }
                Ok(TaskOutcome { metrics, wall, estimate: Some(params) })
            }
            Task::PredictTrain | Task::PredictInterp | Task::PredictExtrap => {
                if self.data.test_set(task).is_empty() {
                    return Err(GpError::DimensionMismatch(format!("no points for {task}")));
                }
                let (spec, fit_wall) = self.prediction_spec(lane)?;
                let (pred, pred_wall) = self.predict(lane, &spec, task)?;
                let set = self.data.test_set(task);
                let scores = score_predictions(&pred, self.data.truth_for(set))?;
                let mut metrics =
                    vec![("rmse".to_string(), scores.rmse), ("log_score".into(), scores.log_score), ("crps".into(), scores.crps)];
                if let Some(exact) = self.exact_prediction(task) {
                    let c = compare_to_exact(&pred, exact)?;
                    metrics.push(("rmse_mean_exact".into(), c.rmse_mean));
                    metrics.push(("rmse_var_exact".into(), c.rmse_var));
                    metrics.push(("kl_exact".into(), c.mean_kl));
                }
                Ok(TaskOutcome { metrics, wall: fit_wall + pred_wall, estimate: None })
            }
        }
    }
}

/// Runs the scenario, writing records to `out`. Numerical failures become
/// `failed` records; only I/O and data-loading problems abort the run.
pub fn run_scenario<W: Write>(s: &Scenario, out: W) -> Result<RunSummary, RunError> {
    // Only the computations run on the pool; the sink stays on this thread.
    let pool = rayon::ThreadPoolBuilder::new().num_threads(s.threads).build()?;
    let mut sink = CsvSink::new(out)?;
    let lanes = lanes(s);
    // Lowest tier per method whose iteration exceeded the time cap.
    let mut capped: BTreeMap<MethodKind, usize> = BTreeMap::new();
    let mut estimates: BTreeMap<usize, (Vec<Vec<f64>>, Vec<f64>)> = BTreeMap::new();
    let csv_data = match s.data {
        DataSource::Csv(_) => Some(load_dataset(s, s.seed)?),
        DataSource::Simulate { .. } => None,
    };

    for rep in 0..s.reps {
        let seed = s.seed + rep as u64;
        let ds = match &csv_data {
            Some(d) => d.clone(),
            None => load_dataset(s, seed)?,
        };
        let data = pool.install(|| Prepared::new(&ds))?;
        let exact_feasible = data.train.len() <= s.exact_cutoff;
        let mut r = Rep { scenario: s, rep, seed, data, exact_feasible, reference: ExactReference::default() };
        log::info!("repetition {rep} (seed {seed}, {} training points)", r.data.train.len());

        for (li, lane) in lanes.iter().enumerate() {
            let record = |task: Task, metric: &str, value: f64, wall: f64| BenchmarkRecord {
                method: lane.method.name().into(),
                tier: lane.tier,
                tier_value: lane.spec.value_label(),
                task: task.name().into(),
                metric: metric.into(),
                value,
                wall_seconds: wall,
                rep: rep.to_string(),
                seed: seed.to_string(),
                threads: s.threads,
            };
            for &task in &s.tasks {
                if capped.get(&lane.method).is_some_and(|&t| t <= lane.tier) {
                    sink.push(&record(task, SKIPPED, f64::NAN, 0.0))?;
                    continue;
                }
                match pool.install(|| r.run_task(&lane.spec, task)) {
                    Ok(outcome) => {
                        for (metric, value) in &outcome.metrics {
                            sink.push(&record(task, metric, *value, outcome.wall))?;
                        }
                        if let Some(p) = outcome.estimate {
                            let entry = estimates.entry(li).or_default();
                            entry.0.push(p);
                            entry.1.push(outcome.wall);
                        }
                        if outcome.wall > s.time_cap {
                            log::warn!(
                                "{} tier {} took {:.1}s on {task}, above the {:.1}s cap; skipping its remaining work",
                                lane.method,
                                lane.tier,
                                outcome.wall,
                                s.time_cap
                            );
                            capped.insert(lane.method, lane.tier);
                        }
                    }
                    Err(e) => {
                        log::error!("{} tier {} failed on {task} in repetition {}: {e}", lane.method, lane.tier, r.rep);
                        sink.push(&record(task, FAILED, f64::NAN, 0.0))?;
                    }
                }
            }
        }
    }

    if let Some(truth) = s.truth.filter(|_| matches!(s.data, DataSource::Simulate { .. })) {
        for (li, (est, walls)) in &estimates {
            if est.len() < 2 {
                continue;
            }
            let lane = &lanes[*li];
            let Ok(summary) = aggregate_estimates(est, &truth.params()) else { continue };
            let mean_wall = walls.iter().sum::<f64>() / walls.len() as f64;
            for (name, sm) in truth.param_names().iter().zip(&summary) {
                for (stat, value) in [("bias", sm.bias), ("se_bias", sm.se_bias), ("mse", sm.mse), ("se_mse", sm.se_mse)] {
                    sink.push(&BenchmarkRecord {
                        method: lane.method.name().into(),
                        tier: lane.tier,
                        tier_value: lane.spec.value_label(),
                        task: Task::Estimate.name().into(),
                        metric: format!("{stat}_{name}"),
                        value,
                        wall_seconds: mean_wall,
                        rep: "all".into(),
                        seed: s.seed.to_string(),
                        threads: s.threads,
                    })?;
                }
            }
        }
    }

    Ok(RunSummary { records: sink.written(), failed: sink.failed(), skipped: sink.skipped() })
}

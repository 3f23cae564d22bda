//! The `simulate`, `fit` and `predict` subcommands.

use std::io::Write;

use gpscale_core::{data::fmt17, fit_params, Dataset, FitOptions, Split};

use crate::config::{MethodKind, Scenario};
use crate::runner::{lanes, load_dataset, Prepared, RunError};

/// Writes the simulated dataset for the base seed.
pub fn simulate<W: Write>(s: &Scenario, out: W) -> Result<Dataset, RunError> {
    let ds = load_dataset(s, s.seed)?;
    ds.write_csv(out)?;
    Ok(ds)
}

fn single_lane(s: &Scenario) -> crate::runner::Lane {
    let all = lanes(s);
    if all.len() > 1 {
        log::info!("using the first of {} tiers of {}", all.len(), s.methods[0]);
    }
    all.into_iter().next().expect("one method with at least one tier")
}

fn write_rows<W: Write>(out: W, header: &[&str], rows: &[Vec<String>]) -> Result<(), RunError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Fits the covariance parameters on the training split with the single
/// configured method and writes `parameter,value` rows.
pub fn fit<W: Write>(s: &Scenario, out: W) -> Result<(), RunError> {
    let ds = load_dataset(s, s.seed)?;
    let data = Prepared::new(&ds)?;
    let lane = single_lane(s);
    let nu = s.fit_smoothness().expect("validated at parse time");
    let init = gpscale_core::default_init(&data.train.locations, &data.y, nu, s.fit_ard())?;
    let approx = lane.spec.approximation(&data.train.locations, s.seed, s.vecchia_predict_neighbors)?;
    let model = gpscale_core::GpModel::new(approx, &data.train.locations, &data.y, &init)?;
    let opts = FitOptions { max_iter: s.max_iter, ..FitOptions::default() };
    let result = fit_params(&model, &init, &opts)?;
    let mut rows: Vec<Vec<String>> = result
        .spec_hat
        .param_names()
        .iter()
        .zip(result.spec_hat.params())
        .map(|(n, v)| vec![n.to_string(), fmt17(v)])
        .collect();
    rows.push(vec!["nu".into(), result.spec_hat.nu.value().to_string()]);
    rows.push(vec!["loglik".into(), fmt17(result.loglik_at_optimum)]);
    rows.push(vec!["iterations".into(), result.iterations.to_string()]);
    rows.push(vec!["converged".into(), result.converged.to_string()]);
    rows.push(vec!["wall_seconds".into(), result.wall_seconds.to_string()]);
    if let Some(t) = &data.trend {
        for (i, b) in t.coefficients.iter().enumerate() {
            rows.push(vec![format!("beta{i}"), fmt17(*b)]);
        }
    }
    write_rows(out, &["parameter", "value"], &rows)
}

/// Predicts every held-out point with the configured method. Parameters are
/// the configured truth when present, otherwise fitted first.
pub fn predict<W: Write>(s: &Scenario, out: W) -> Result<(), RunError> {
    let ds = load_dataset(s, s.seed)?;
    let data = Prepared::new(&ds)?;
    let lane = single_lane(s);
    let approx = lane.spec.approximation(&data.train.locations, s.seed, s.vecchia_predict_neighbors)?;
    let spec = match s.fit_template() {
        Some(spec) => spec,
        None => {
            let nu = s.fit_smoothness().expect("validated at parse time");
            let init = gpscale_core::default_init(&data.train.locations, &data.y, nu, false)?;
            let model = gpscale_core::GpModel::new(approx, &data.train.locations, &data.y, &init)?;
            let opts = FitOptions { max_iter: s.max_iter, ..FitOptions::default() };
            fit_params(&model, &init, &opts)?.spec_hat
        }
    };
    let model = gpscale_core::GpModel::new(approx, &data.train.locations, &data.y, &spec)?;
    let mut rows = Vec::new();
    for (split, set) in [(Split::TestInterp, &data.interp), (Split::TestExtrap, &data.extrap)] {
        if set.is_empty() {
            continue;
        }
        let pred = model.predict(&spec, &set.locations, data.flavor())?;
        let pred = data.add_trend(set, pred)?;
        for (i, p) in set.locations.iter().enumerate() {
            rows.push(vec![
                fmt17(p[0]),
                fmt17(p[1]),
                split.label().to_string(),
                fmt17(pred.mean[i]),
                fmt17(pred.variance[i]),
            ]);
        }
    }
    if s.methods[0] == MethodKind::Exact && rows.is_empty() {
        log::warn!("no held-out points to predict");
    }
    write_rows(out, &["x", "y", "split", "mean", "variance"], &rows)
}

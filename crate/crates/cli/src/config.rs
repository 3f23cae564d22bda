//! Scenario configuration: flat `key = value` lines, `#` comments, dotted
//! section prefixes. Lists are comma separated.
//!
//! ```text
//! data.preset   = std          # simulated data; or data.csv = path
//! data.n        = 2000         # points per set (simulated only)
//! seed          = 1            # repetition r uses seed + r
//! reps          = 20
//! methods       = exact, vecchia, tapering
//! tiers         = table1       # tier preset; per-method lists override it
//! vecchia.tiers = 5, 10, 20, 40
//! fsa.tiers     = 10:5, 24:8   # inducing points : nonzeros per row
//! tasks         = loglik_true, predict_interp
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gpscale_core::{CovarianceSpec, Preset, Smoothness};
use thiserror::Error;

use crate::tiers::{tier_preset, TierSet};

#[derive(Debug, Error)]
#[error("{}: {message}", location(*.line))]
pub struct ConfigError {
    /// 1-based line of the offending entry; 0 when no single line is at fault.
    pub line: usize,
    pub message: String,
}

fn location(line: usize) -> String {
    if line == 0 {
        "config".to_string()
    } else {
        format!("config line {line}")
    }
}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { line, message: message.into() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MethodKind {
    Exact,
    Vecchia,
    Tapering,
    Fitc,
    Fsa,
}

impl MethodKind {
    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Exact => "exact",
            MethodKind::Vecchia => "vecchia",
            MethodKind::Tapering => "tapering",
            MethodKind::Fitc => "fitc",
            MethodKind::Fsa => "fsa",
        }
    }
}

impl FromStr for MethodKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "exact" => MethodKind::Exact,
            "vecchia" => MethodKind::Vecchia,
            "tapering" | "taper" => MethodKind::Tapering,
            "fitc" => MethodKind::Fitc,
            "fsa" => MethodKind::Fsa,
            _ => return Err(format!("unknown method {s:?}")),
        })
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Task {
    LoglikTrue,
    LoglikDoubled,
    Estimate,
    PredictTrain,
    PredictInterp,
    PredictExtrap,
}

impl Task {
    pub const ALL: [Task; 6] = [
        Task::LoglikTrue,
        Task::LoglikDoubled,
        Task::Estimate,
        Task::PredictTrain,
        Task::PredictInterp,
        Task::PredictExtrap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::LoglikTrue => "loglik_true",
            Task::LoglikDoubled => "loglik_doubled",
            Task::Estimate => "estimate",
            Task::PredictTrain => "predict_train",
            Task::PredictInterp => "predict_interp",
            Task::PredictExtrap => "predict_extrap",
        }
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Task::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| format!("unknown task {s:?}"))
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Subcommand a configuration is read for; each checks different keys.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Run,
    Simulate,
    Fit,
    Predict,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Simulate { preset: Preset, n: usize },
    Csv(PathBuf),
}

/// A parsed benchmark scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub data: DataSource,
    /// Data-generating parameters, or for CSV data the parameters at which
    /// likelihoods are evaluated. Absent for CSV data without `truth.*`.
    pub truth: Option<CovarianceSpec>,
    /// Smoothness used for fitting and prediction.
    pub fit_nu: Option<Smoothness>,
    pub methods: Vec<MethodKind>,
    pub tiers: TierSet,
    pub tasks: Vec<Task>,
    pub reps: usize,
    pub seed: u64,
    pub threads: usize,
    /// Seconds; one task iteration above this ends its lane.
    pub time_cap: f64,
    /// Exact reference computations run only up to this many training points.
    pub exact_cutoff: usize,
    pub vecchia_predict_neighbors: Option<usize>,
    pub max_iter: usize,
    pub output: Option<PathBuf>,
}

const KEYS: &[&str] = &[
    "data.preset",
    "data.n",
    "data.csv",
    "truth.nugget",
    "truth.sigma2",
    "truth.rho",
    "truth.rho_y",
    "truth.nu",
    "fit.nu",
    "methods",
    "tiers",
    "vecchia.tiers",
    "vecchia.predict_neighbors",
    "tapering.tiers",
    "fitc.tiers",
    "fsa.tiers",
    "tasks",
    "reps",
    "seed",
    "threads",
    "time_cap",
    "exact_cutoff",
    "estimate.max_iter",
    "output",
];

/// Splits the text into `(line, key, value)` entries, rejecting malformed
/// lines, unknown keys and duplicates.
pub fn parse_entries(text: &str) -> Result<BTreeMap<String, (usize, String)>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            return err(line, format!("expected `key = value`, found {body:?}"));
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return err(line, "empty key or value");
        }
        if !KEYS.contains(&k) {
            return err(line, format!("unknown key {k:?}"));
        }
        if let Some((first, _)) = out.insert(k.to_string(), (line, v.to_string())) {
            return err(line, format!("duplicate key {k:?} (first set on line {first})"));
        }
    }
    Ok(out)
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn get(&self, key: &str) -> Option<(usize, &str)> {
        self.map.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).or_else(|e| err(line, format!("{key}: {e}"))),
        }
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let Some((line, v)) = self.get(key) else { return Ok(None) };
        v.split(',')
            .map(|s| s.trim().parse::<T>().or_else(|e| err(line, format!("{key}: {e}"))))
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    fn line(&self, key: &str) -> usize {
        self.get(key).map_or(0, |(l, _)| l)
    }
}

fn parse_fsa_tier(s: &str) -> Result<(usize, usize), String> {
    let (m, k) = s.split_once(':').ok_or_else(|| format!("fsa tier {s:?} is not `inducing:nnz`"))?;
    let parse = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("fsa tier {s:?}: {e}"));
    Ok((parse(m)?, parse(k)?))
}

struct FsaTier((usize, usize));

impl FromStr for FsaTier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        parse_fsa_tier(s).map(FsaTier)
    }
}

fn smoothness(line: usize, v: f64) -> Result<Smoothness, ConfigError> {
    Smoothness::from_value(v).or_else(|e| err(line, e.to_string()))
}

impl Scenario {
    /// Parses and validates a scenario; relative paths resolve against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self, ConfigError> {
        Self::parse_for(text, base, Command::Run)
    }

    pub fn parse_for(text: &str, base: Option<&Path>, cmd: Command) -> Result<Self, ConfigError> {
        let e = Entries { map: parse_entries(text)? };
        let resolve = |p: &str| match base {
            Some(b) if Path::new(p).is_relative() => b.join(p),
            _ => PathBuf::from(p),
        };

        let preset: Option<Preset> = e.parse("data.preset")?;
        let data = match (preset, e.get("data.csv")) {
            (Some(_), Some((line, _))) => return err(line, "data.preset and data.csv are mutually exclusive"),
            (Some(p), None) => {
                let n = e.parse::<usize>("data.n")?.ok_or(ConfigError {
                    line: e.line("data.preset"),
                    message: "simulated data needs data.n".into(),
                })?;
                if n == 0 {
                    return err(e.line("data.n"), "data.n must be positive");
                }
                DataSource::Simulate { preset: p, n }
            }
            (None, Some((_, path))) => {
                if let Some((line, _)) = e.get("data.n") {
                    return err(line, "data.n only applies to simulated data");
                }
                DataSource::Csv(resolve(path))
            }
            (None, None) => return err(0, "one of data.preset or data.csv is required"),
        };

        let truth = Self::parse_truth(&e, preset)?;
        let fit_nu = match e.parse::<f64>("fit.nu")? {
            Some(v) => Some(smoothness(e.line("fit.nu"), v)?),
            None => None,
        };

        let methods: Vec<MethodKind> = e.list("methods")?.unwrap_or_default();
        let tasks: Vec<Task> = e.list("tasks")?.unwrap_or_default();
        match cmd {
            Command::Run => {
                if methods.is_empty() {
                    return err(e.line("methods"), "at least one method is required");
                }
                if tasks.is_empty() {
                    return err(e.line("tasks"), "at least one task is required");
                }
            }
            Command::Fit | Command::Predict => {
                if methods.len() != 1 {
                    return err(e.line("methods"), "exactly one method is required");
                }
            }
            Command::Simulate => {
                if !matches!(data, DataSource::Simulate { .. }) {
                    return err(e.line("data.csv"), "simulate needs data.preset");
                }
            }
        }
        let needs_truth = tasks.iter().any(|t| matches!(t, Task::LoglikTrue | Task::LoglikDoubled));
        if needs_truth && truth.is_none() {
            return err(e.line("tasks"), "likelihood tasks on CSV data need truth.nugget, truth.sigma2, truth.rho and truth.nu");
        }
        if tasks.contains(&Task::Estimate) && matches!(data, DataSource::Csv(_)) {
            return err(e.line("tasks"), "the estimate task needs simulated data with known parameters");
        }
        if matches!(cmd, Command::Fit | Command::Predict) && truth.is_none() && fit_nu.is_none() {
            return err(0, "CSV data without truth.* needs fit.nu");
        }

        let mut tiers = match e.get("tiers") {
            Some((line, name)) => tier_preset(name).ok_or(ConfigError { line, message: format!("unknown tier preset {name:?}") })?,
            None => TierSet::default(),
        };
        if let Some(v) = e.list("vecchia.tiers")? {
            tiers.vecchia = v;
        }
        if let Some(v) = e.list("tapering.tiers")? {
            tiers.tapering = v;
        }
        if let Some(v) = e.list("fitc.tiers")? {
            tiers.fitc = v;
        }
        if let Some(v) = e.list::<FsaTier>("fsa.tiers")? {
            tiers.fsa = v.into_iter().map(|t| t.0).collect();
        }
        for m in &methods {
            let (empty, zero) = match m {
                MethodKind::Exact => (false, false),
                MethodKind::Vecchia => (tiers.vecchia.is_empty(), tiers.vecchia.contains(&0)),
                MethodKind::Tapering => (tiers.tapering.is_empty(), tiers.tapering.contains(&0)),
                MethodKind::Fitc => (tiers.fitc.is_empty(), tiers.fitc.contains(&0)),
                MethodKind::Fsa => (tiers.fsa.is_empty(), tiers.fsa.iter().any(|&(a, b)| a == 0 || b == 0)),
            };
            if empty {
                return err(e.line("methods"), format!("no tiers for method {m}; set tiers or {m}.tiers"));
            }
            if zero {
                return err(e.line(&format!("{m}.tiers")), format!("{m} tiers must be positive"));
            }
        }

        let positive = |key: &str, v: usize| if v == 0 { err(e.line(key), format!("{key} must be positive")) } else { Ok(v) };
        let reps = positive("reps", e.parse("reps")?.unwrap_or(1))?;
        let threads = positive("threads", e.parse("threads")?.unwrap_or(1))?;
        let max_iter = positive("estimate.max_iter", e.parse("estimate.max_iter")?.unwrap_or(1000))?;
        let time_cap: f64 = e.parse("time_cap")?.unwrap_or(600.0);
        if !(time_cap > 0.0) {
            return err(e.line("time_cap"), "time_cap must be > 0");
        }
        let vecchia_predict_neighbors = e.parse("vecchia.predict_neighbors")?;
        if vecchia_predict_neighbors == Some(0) {
            return err(e.line("vecchia.predict_neighbors"), "vecchia.predict_neighbors must be positive");
        }

        Ok(Self {
            data,
            truth,
            fit_nu,
            methods,
            tiers,
            tasks,
            reps,
            seed: e.parse("seed")?.unwrap_or(1),
            threads,
            time_cap,
            exact_cutoff: e.parse("exact_cutoff")?.unwrap_or(5000),
            vecchia_predict_neighbors,
            max_iter,
            output: e.get("output").map(|(_, p)| resolve(p)),
        })
    }

    /// Truth from the preset, with any `truth.*` entries overriding it.
    fn parse_truth(e: &Entries, preset: Option<Preset>) -> Result<Option<CovarianceSpec>, ConfigError> {
        let keys = ["truth.nugget", "truth.sigma2", "truth.rho", "truth.rho_y", "truth.nu"];
        let any = keys.iter().any(|k| e.get(k).is_some());
        let base = match preset {
            Some(p) => p.spec(),
            None if !any => return Ok(None),
            None => {
                for k in ["truth.nugget", "truth.sigma2", "truth.rho", "truth.nu"] {
                    if e.get(k).is_none() {
                        return err(0, format!("{k} is required when truth is given for CSV data"));
                    }
                }
                CovarianceSpec::isotropic(1.0, 1.0, Smoothness::ThreeHalves, 1.0).expect("valid placeholder")
            }
        };
        let params = base.params();
        let (rx, ry) = match base.range {
            gpscale_core::Range::Isotropic(r) => (r, None),
            gpscale_core::Range::Ard { x, y } => (x, Some(y)),
        };
        let nugget = e.parse("truth.nugget")?.unwrap_or(params[0]);
        let sigma2 = e.parse("truth.sigma2")?.unwrap_or(params[1]);
        let rho_x = e.parse("truth.rho")?.unwrap_or(rx);
        let rho_y: Option<f64> = e.parse("truth.rho_y")?.or(ry);
        let nu = match e.parse::<f64>("truth.nu")? {
            Some(v) => smoothness(e.line("truth.nu"), v)?,
            None => base.nu,
        };
        let spec = match rho_y {
            Some(y) => CovarianceSpec::ard(sigma2, rho_x, y, nu, nugget),
            None => CovarianceSpec::isotropic(sigma2, rho_x, nu, nugget),
        };
        let line = keys.iter().map(|k| e.line(k)).max().unwrap_or(0);
        spec.map(Some).or_else(|x| err(line, x.to_string()))
    }

    /// Covariance family and smoothness used for fitting and prediction.
    pub fn fit_template(&self) -> Option<CovarianceSpec> {
        self.truth.map(|t| CovarianceSpec { nu: self.fit_nu.unwrap_or(t.nu), ..t })
    }

    /// Smoothness for fitting: `fit.nu`, else the truth's.
    pub fn fit_smoothness(&self) -> Option<Smoothness> {
        self.fit_nu.or(self.truth.map(|t| t.nu))
    }

    /// Whether the fitted family is ARD.
    pub fn fit_ard(&self) -> bool {
        self.truth.is_some_and(|t| t.is_ard())
    }
}

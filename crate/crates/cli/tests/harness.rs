use std::fs;
use std::path::Path;
use std::process::Command as Process;

use gpscale_cli::{run_scenario, Command, Scenario, HEADER};
use gpscale_core::{loglik_exact, simulate_preset, Preset, Split};

struct Row {
    method: String,
    tier_value: String,
    task: String,
    metric: String,
    value: f64,
    wall: f64,
    rep: String,
}

fn run(cfg: &str) -> (String, Vec<Row>) {
    let s = Scenario::parse(cfg, None).unwrap();
    let mut out = Vec::new();
    run_scenario(&s, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    (text.clone(), parse(&text))
}

fn parse(text: &str) -> Vec<Row> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), HEADER);
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            Row {
                method: r[0].into(),
                tier_value: r[2].into(),
                task: r[3].into(),
                metric: r[4].into(),
                value: r[5].parse().unwrap(),
                wall: r[6].parse().unwrap(),
                rep: r[7].into(),
            }
        })
        .collect()
}

/// Every column except `wall_seconds`.
fn without_timing(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f.remove(6);
            f.join(",")
        })
        .collect()
}

#[test]
fn exact_limit_end_to_end() {
    let cfg = "data.preset = std\ndata.n = 80\nmethods = exact, vecchia\nvecchia.tiers = 79\n\
               tasks = loglik_true, loglik_doubled, predict_train, predict_interp, predict_extrap\n";
    let (_, rows) = run(cfg);
    let accuracy: Vec<&Row> = rows.iter().filter(|r| r.metric.ends_with("_exact")).collect();
    assert_eq!(accuracy.len(), 2 * (2 + 3 * 3));
    for r in accuracy {
        assert!(r.value.abs() < 1e-8, "{} {} {} = {}", r.method, r.task, r.metric, r.value);
    }
    assert!(rows.iter().all(|r| r.wall >= 0.0));
}

#[test]
fn doubled_task_uses_twice_the_parameters() {
    let (_, rows) = run("data.preset = std\ndata.n = 60\nseed = 4\nmethods = exact\ntasks = loglik_doubled\n");
    let train = simulate_preset(Preset::Std, 60, 4).unwrap().select(Split::Train);
    let doubled = Preset::Std.spec().scaled(2.0).unwrap();
    let expect = loglik_exact(&doubled, &train.locations, &train.values).unwrap();
    let got = rows.iter().find(|r| r.metric == "loglik").unwrap().value;
    assert_eq!(got, expect);
}

#[test]
fn reruns_match_in_all_non_timing_columns() {
    let cfg = "data.preset = std\ndata.n = 150\nreps = 2\nmethods = exact, vecchia, tapering, fitc, fsa\n\
               vecchia.tiers = 5, 10\ntapering.tiers = 11\nfitc.tiers = 20\nfsa.tiers = 10:5\n\
               tasks = loglik_true, estimate, predict_interp\n";
    let (a, rows) = run(cfg);
    let (b, _) = run(cfg);
    assert_eq!(without_timing(&a), without_timing(&b));
    assert!(rows.iter().any(|r| r.rep == "all" && r.metric == "bias_rho"));
    // One record per (method, tier, task, metric, rep).
    let mut keys: Vec<_> = rows.iter().map(|r| (&r.method, &r.tier_value, &r.task, &r.metric, &r.rep)).collect();
    let n = keys.len();
    keys.sort();
    keys.dedup();
    assert_eq!(keys.len(), n);
}

#[test]
fn time_cap_skips_the_rest_of_the_sweep() {
    let cfg = "data.preset = std\ndata.n = 100\nreps = 2\nmethods = vecchia, fitc\nvecchia.tiers = 5, 10, 20\n\
               fitc.tiers = 10\ntasks = loglik_true, predict_interp\ntime_cap = 1e-12\n";
    let (_, rows) = run(cfg);
    let ran: Vec<_> = rows.iter().filter(|r| r.metric != "skipped").map(|r| (&*r.method, &*r.tier_value, &*r.rep)).collect();
    // The first task of the first tier of each method runs, then its lane ends.
    assert!(ran.iter().all(|&(_, t, rep)| (t == "5" || t == "10") && rep == "0"));
    let skipped = rows.iter().filter(|r| r.metric == "skipped").count();
    // vecchia: 1 task left in rep 0 tier 1, 2 tiers × 2 tasks in rep 0, 3 × 2 in rep 1.
    // fitc: 1 in rep 0, 2 in rep 1.
    assert_eq!(skipped, 1 + 4 + 6 + 1 + 2);
}

fn gpscale(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = Process::new(env!("CARGO_BIN_EXE_gpscale")).args(args).current_dir(dir).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("bad.cfg"), "data.preset = std\ndata.n = 20\nmethods = exact\ntasks = nope\n").unwrap();
    let (code, err) = gpscale(p, &["run", "bad.cfg"]);
    assert_eq!(code, 1);
    assert!(err.contains("line 4"), "{err}");

    fs::write(p.join("partial.cfg"), "data.preset = std\ndata.n = 20\nmethods = fitc\nfitc.tiers = 5, 50\ntasks = loglik_true\noutput = partial.csv\n")
        .unwrap();
    assert_eq!(gpscale(p, &["run", "partial.cfg"]).0, 2);
    let rows = parse(&fs::read_to_string(p.join("partial.csv")).unwrap());
    assert!(rows.iter().any(|r| r.tier_value == "50" && r.metric == "failed"));
    assert!(rows.iter().any(|r| r.tier_value == "5" && r.metric == "loglik"));

    fs::write(p.join("ok.cfg"), "data.preset = std\ndata.n = 20\nmethods = exact\ntasks = loglik_true\noutput = ok.csv\n").unwrap();
    assert_eq!(gpscale(p, &["run", "ok.cfg"]).0, 0);
    assert_eq!(gpscale(p, &["run", "missing.cfg"]).0, 1);
}

#[test]
fn csv_round_trip_through_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("sim.cfg"), "data.preset = std\ndata.n = 60\nseed = 3\noutput = data.csv\n").unwrap();
    assert_eq!(gpscale(p, &["simulate", "sim.cfg"]).0, 0);
    let ds = gpscale_core::Dataset::read_csv(fs::File::open(p.join("data.csv")).unwrap()).unwrap();
    assert_eq!(ds, simulate_preset(Preset::Std, 60, 3).unwrap());

    // Real-data style: drop the latent column so scoring uses observations.
    let text = fs::read_to_string(p.join("data.csv")).unwrap();
    let stripped: String = text
        .lines()
        .enumerate()
        .map(|(i, l)| {
            let mut f: Vec<&str> = l.split(',').collect();
            if i > 0 {
                f[3] = "";
            }
            f.join(",") + "\n"
        })
        .collect();
    fs::write(p.join("real.csv"), stripped).unwrap();

    fs::write(p.join("fit.cfg"), "data.csv = real.csv\nmethods = vecchia\nvecchia.tiers = 10\nfit.nu = 1.5\noutput = fit.csv\n").unwrap();
    assert_eq!(gpscale(p, &["fit", "fit.cfg"]).0, 0);
    let fit = fs::read_to_string(p.join("fit.csv")).unwrap();
    assert!(fit.starts_with("parameter,value\nsigma_n2,"), "{fit}");
    assert!(fit.contains("converged,"));

    fs::write(p.join("pred.cfg"), "data.csv = real.csv\nmethods = exact\nfit.nu = 1.5\noutput = pred.csv\n").unwrap();
    assert_eq!(gpscale(p, &["predict", "pred.cfg"]).0, 0);
    let pred = fs::read_to_string(p.join("pred.csv")).unwrap();
    assert_eq!(pred.lines().count(), 1 + 120);

    let run = "data.csv = real.csv\nmethods = exact, vecchia\nvecchia.tiers = 5\nfit.nu = 1.5\n\
               tasks = predict_interp, predict_extrap\noutput = run.csv\n";
    fs::write(p.join("run.cfg"), run).unwrap();
    assert_eq!(gpscale(p, &["run", "run.cfg"]).0, 0);
    let rows = parse(&fs::read_to_string(p.join("run.csv")).unwrap());
    assert!(rows.iter().any(|r| r.method == "vecchia" && r.metric == "kl_exact" && r.value > 0.0));
    let s = Scenario::parse_for(run, Some(p), Command::Run).unwrap();
    assert!(s.truth.is_none());
}

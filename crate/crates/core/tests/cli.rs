use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use bess_pfc::model::EnergyBuildOptions;
use bess_pfc::scenario;
use bess_pfc::simulate::generate_n_events;
use bess_pfc::trace::{extract_intervals, load_trace, synthesize_trace, FrequencyTrace};
use serde_json::Value;
use tempfile::TempDir;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bess-pfc")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_slice(&fs::read(&path).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synthetic_trace(dir: &Path, events: usize) -> PathBuf {
    let model = scenario::stochastic_model(&EnergyBuildOptions::default()).unwrap();
    let ev = generate_n_events(&model, events, 5);
    let path = dir.join("trace.txt");
    synthesize_trace(&ev, 10.0, 60.0, 0.05)
        .unwrap()
        .write(fs::File::create(&path).unwrap())
        .unwrap();
    path
}

#[test]
fn fit_writes_its_files() {
    let tmp = TempDir::new().unwrap();
    let trace = synthetic_trace(tmp.path(), 300);
    let out = tmp.path().join("fit");
    let o = cli(&[
        "fit", "--trace", s(&trace), "--out-dir", s(&out), "--seed", "1", "--set", "fit.min_event_samples=1",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "i_distribution.json",
        "j_distribution.json",
        "model.json",
        "events.csv",
        "correlation.csv",
        "correlation.json",
        "segmentation.json",
        "manifest.json",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    // excursions shorter than half a sample vanish when rendered
    let expected = extract_intervals(&load_trace(&trace).unwrap(), 0.01, 1).unwrap().len();
    assert!((290..=300).contains(&expected));
    assert_eq!(json(out.join("model.json"))["events"], expected);
    let manifest = json(out.join("manifest.json"));
    for key in ["command", "version", "config_sha256", "config", "seed", "seed_generated", "outputs"] {
        assert!(manifest.get(key).is_some(), "manifest lacks {key}");
    }
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["seed_generated"], false);
}

#[test]
fn empty_trace_is_a_parse_error_with_no_outputs() {
    let tmp = TempDir::new().unwrap();
    let trace = tmp.path().join("empty.txt");
    fs::write(&trace, "").unwrap();
    let out = tmp.path().join("fit");
    let o = cli(&["fit", "--trace", s(&trace), "--out-dir", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists() || fs::read_dir(&out).unwrap().next().is_none());
}

#[test]
fn unknown_config_key_is_a_parse_error() {
    let o = cli(&["solve", "--set", "market.c_q=3"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn long_trace_fits_in_time() {
    let tmp = TempDir::new().unwrap();
    let n = 2_556_000;
    let samples: Vec<f64> = (0..n)
        .map(|k| match k % 3000 {
            0..=2399 => 60.0,
            2400..=2699 => 60.03,
            _ => 59.97,
        })
        .collect();
    let trace = tmp.path().join("long.txt");
    FrequencyTrace::new(10.0, 60.0, samples)
        .unwrap()
        .write(std::io::BufWriter::new(fs::File::create(&trace).unwrap()))
        .unwrap();
    let start = Instant::now();
    let o = cli(&["fit", "--trace", s(&trace), "--out-dir", s(&tmp.path().join("fit"))]);
    let secs = start.elapsed().as_secs_f64();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(secs < 30.0, "{secs}s");
}

#[test]
fn solve_reports_agreeing_methods() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("solve");
    let o = cli(&["solve", "--out-dir", s(&out), "--set", "solver.grid_size=101"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = json(out.join("thresholds.json"));
    assert!(t["method_gap_cells"].as_u64().unwrap() <= 2);
    assert_eq!(t["degenerate_objective"], false);
    let lo = t["roots"]["pi_low"].as_f64().unwrap();
    let hi = t["roots"]["pi_high"].as_f64().unwrap();
    assert!(0.0 <= lo && lo <= hi && hi <= 1.0);
    let rows = fs::read_to_string(out.join("value_function.csv")).unwrap();
    assert_eq!(rows.lines().count(), 102);
}

#[test]
fn free_market_is_flagged_degenerate() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("solve");
    let o = cli(&[
        "solve", "--out-dir", s(&out), "--set", "solver.grid_size=51", "--set", "market.c_e=0", "--set",
        "market.c_p=0",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(out.join("thresholds.json"))["degenerate_objective"], true);
}

#[test]
fn zero_horizon_gives_an_empty_report() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("sim");
    let o = cli(&[
        "simulate", "--out-dir", s(&out), "--set", "simulate.horizon_hours=0.0", "--set",
        "simulate.optimal_band=[0.3, 0.6]",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = json(out.join("comparison.json"));
    let policies = table["policies"].as_array().unwrap();
    assert_eq!(policies.len(), 4);
    for p in policies {
        assert_eq!(p["events"], 0);
        assert_eq!(p["aggregate_cost"], 0.0);
    }
}

#[test]
fn simulate_without_a_band_exits_with_missing_policy() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("sim");
    let o = cli(&["simulate", "--out-dir", s(&out), "--set", "simulate.n_events=10"]);
    assert_eq!(code(&o), 5);
}

#[test]
fn same_seed_same_bytes() {
    let tmp = TempDir::new().unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let o = cli(&[
            "simulate", "--seed", "42", "--out-dir", s(&out), "--set", "simulate.n_events=2000", "--set",
            "simulate.optimal_band=[0.3, 0.6]", "--set", "simulate.trajectory=true",
        ]);
        assert_eq!(code(&o), 0);
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        files
    };
    let (a, b) = (run("a"), run("b"));
    assert!(a.len() >= 7);
    assert_eq!(a, b);
}

#[test]
fn free_capital_plans_the_largest_battery() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("plan");
    let o = cli(&[
        "plan", "--out-dir", s(&out), "--set", "solver.grid_size=51", "--set",
        "plan.capacities_kwh=[50.0, 100.0, 200.0, 400.0]", "--set",
        "plan.capital={form=\"affine\", q0=0.0, q1=0.0, lambda=1.0}",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let plan = json(out.join("planning.json"));
    assert_eq!(plan["choice"]["capacity_kwh"], 400.0);
    assert!(out.join("planning.csv").is_file());
}

#[test]
fn inputs_are_left_untouched() {
    let tmp = TempDir::new().unwrap();
    let trace = synthetic_trace(tmp.path(), 100);
    let config = tmp.path().join("run.toml");
    fs::write(&config, "seed = 7\n\n[fit]\ndead_band_hz = 0.01\n").unwrap();
    let before = (fs::read(&trace).unwrap(), fs::read(&config).unwrap());
    let out = tmp.path().join("fit");
    let o = cli(&["fit", "--config", s(&config), "--trace", s(&trace), "--out-dir", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(before, (fs::read(&trace).unwrap(), fs::read(&config).unwrap()));
    assert_eq!(json(out.join("manifest.json"))["seed"], 7);
}

//! Command-line front end: `fit`, `solve`, `simulate` and `plan`.
//!
//! Every command reads an optional TOML config, applies `--set key=value`
//! overrides, validates everything, and only then computes and writes its
//! outputs plus a `manifest.json` into `--out-dir`.
//!
//! Exit codes: 0 success, 1 I/O or other failure, 2 parse or invalid input,
//! 3 too few events to fit, 4 solver non-convergence, 5 missing policy input.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::battery::{BatteryParams, Soc};
use crate::distribution::ScalarDistribution;
use crate::dp::{self, ThresholdPolicy, ValueFunction};
use crate::error::Error;
use crate::model::{EnergyBuildOptions, ExcursionSignModel, StochasticModel};
use crate::planner::{self, CapitalCostModel, CapitalForm, PlanningResult};
use crate::scenario;
use crate::simulate::{self, Policy};
use crate::stage_cost::{CostModel, MarketParams};
use crate::trace::{self, EventSequence};

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_INSUFFICIENT_EVENTS: i32 = 3;
pub const EXIT_NONCONVERGENCE: i32 = 4;
pub const EXIT_MISSING_POLICY: i32 = 5;

#[derive(Parser, Debug)]
#[command(name = "bess-pfc", version, about = "Battery threshold control and sizing for primary frequency control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Segment a frequency trace and fit interval and sign distributions.
    Fit {
        #[command(flatten)]
        common: CommonArgs,
        /// Trace file; overrides `fit.trace`.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Solve for the optimal idle band by value iteration and the direct method.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Compare recharging policies on simulated or trace-derived events.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Sweep capacities and choose the one balancing capital and operating cost.
    Plan {
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory receiving all outputs.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Seed for every random draw; generated and recorded when absent.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Override a config key, e.g. `--set market.c_p=20`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug)]
struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Parse { .. } | Error::InvalidParameter(_) | Error::Json(_) | Error::Csv(_) => EXIT_PARSE,
            Error::InsufficientEvents { .. } => EXIT_INSUFFICIENT_EVENTS,
            Error::NonConvergence { .. } => EXIT_NONCONVERGENCE,
            Error::Quadrature { .. } | Error::Io(_) => EXIT_FAILURE,
        };
        Self::new(code, e.to_string())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::new(EXIT_FAILURE, format!("{}: {e}", path.display()))
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    seed: Option<u64>,
    #[serde(default)]
    battery: BatterySection,
    #[serde(default)]
    market: MarketSection,
    #[serde(default)]
    model: ModelSection,
    #[serde(default)]
    solver: SolverSection,
    #[serde(default)]
    fit: FitSection,
    #[serde(default)]
    simulate: SimulateSection,
    #[serde(default)]
    plan: PlanSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct BatterySection {
    e_max_kwh: f64,
    p_max_kw: f64,
    eta: f64,
}

impl Default for BatterySection {
    fn default() -> Self {
        Self {
            e_max_kwh: scenario::E_MAX_KWH,
            p_max_kw: scenario::P_MAX_KW,
            eta: scenario::ETA,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct MarketSection {
    c_e: f64,
    c_p: f64,
    alpha: f64,
    reserve_kw: f64,
}

impl Default for MarketSection {
    fn default() -> Self {
        Self {
            c_e: scenario::C_E,
            c_p: scenario::C_P,
            alpha: scenario::ALPHA,
            reserve_kw: scenario::RESERVE_KW,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ModelSection {
    /// Output of `fit`; supplies `i`, `j` and `p1` unless given inline.
    model_file: Option<PathBuf>,
    p1: Option<f64>,
    i: Option<ScalarDistribution>,
    j: Option<ScalarDistribution>,
    p_pfc: Option<ScalarDistribution>,
    energy_grid: usize,
    truncation: Option<f64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = EnergyBuildOptions::default();
        Self {
            model_file: None,
            p1: None,
            i: None,
            j: None,
            p_pfc: None,
            energy_grid: d.grid_size,
            truncation: d.truncation,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SolverSection {
    grid_size: usize,
    rel_tol: f64,
    max_iter: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            grid_size: dp::DEFAULT_GRID,
            rel_tol: 1e-4,
            max_iter: dp::DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct FitSection {
    trace: Option<PathBuf>,
    dead_band_hz: f64,
    min_event_samples: usize,
    max_lag: usize,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            trace: None,
            dead_band_hz: trace::DEFAULT_DEAD_BAND_HZ,
            min_event_samples: trace::DEFAULT_MIN_EVENT_SAMPLES,
            max_lag: 20,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SimulateSection {
    n_events: Option<usize>,
    horizon_hours: Option<f64>,
    events_csv: Option<PathBuf>,
    initial_soc: f64,
    heuristic_band: [f64; 2],
    optimal_band: Option<[f64; 2]>,
    thresholds_file: Option<PathBuf>,
    trajectory: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            n_events: None,
            horizon_hours: None,
            events_csv: None,
            initial_soc: 0.5,
            heuristic_band: [scenario::HEURISTIC_BAND.0, scenario::HEURISTIC_BAND.1],
            optimal_band: None,
            thresholds_file: None,
            trajectory: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct PlanSection {
    capacities_kwh: Vec<f64>,
    capital: Option<CapitalCostModel>,
    rel_tol: f64,
}

impl Default for PlanSection {
    fn default() -> Self {
        Self {
            capacities_kwh: vec![50.0, 100.0, 500.0, 1500.0, 5000.0, 10000.0],
            capital: None,
            rel_tol: 1e-8,
        }
    }
}

/// Parses `value` as a TOML value, falling back to a bare string.
fn parse_override_value(value: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

fn apply_override(table: &mut toml::Table, spec: &str) -> CliResult<()> {
    let (key, value) = spec
        .split_once('=')
        .ok_or_else(|| CliError::new(EXIT_PARSE, format!("override `{spec}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::new(EXIT_PARSE, format!("bad override key `{key}`")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::new(EXIT_PARSE, format!("override `{key}`: `{p}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_override_value(value.trim()));
    Ok(())
}

struct Loaded {
    config: RunConfig,
    /// Canonical text of the effective configuration.
    canonical: String,
    seed: u64,
    seed_generated: bool,
}

fn load_config(common: &CommonArgs) -> CliResult<Loaded> {
    let mut table = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            text.parse::<toml::Table>()
                .map_err(|e| CliError::new(EXIT_PARSE, format!("{}: {e}", path.display())))?
        }
        None => toml::Table::new(),
    };
    for o in &common.overrides {
        apply_override(&mut table, o)?;
    }
    let config: RunConfig = table
        .clone()
        .try_into()
        .map_err(|e| CliError::new(EXIT_PARSE, format!("config: {e}")))?;
    let (seed, seed_generated) = match common.seed.or(config.seed) {
        Some(s) => (s, false),
        None => {
            let nanos = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_nanos() as u64)
                .unwrap_or(0);
            (nanos, true)
        }
    };
    let canonical = toml::to_string(&table).map_err(|e| CliError::new(EXIT_PARSE, e.to_string()))?;
    Ok(Loaded {
        config,
        canonical,
        seed,
        seed_generated,
    })
}

#[derive(Serialize, Deserialize)]
struct FittedModel {
    p1: f64,
    i: ScalarDistribution,
    j: ScalarDistribution,
    events: usize,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::new(EXIT_PARSE, format!("{}: {e}", path.display())))
}

fn build_cost_model(cfg: &RunConfig) -> CliResult<CostModel> {
    let b = &cfg.battery;
    let battery = BatteryParams::new(b.e_max_kwh, b.p_max_kw, b.eta)?;
    let m = &cfg.market;
    let market = MarketParams::new(m.c_e, m.c_p, m.alpha, m.reserve_kw)?;
    let md = &cfg.model;
    let fitted: Option<FittedModel> = md.model_file.as_deref().map(read_json).transpose()?;
    let interval = match (&md.i, &fitted) {
        (Some(d), _) => d.clone(),
        (None, Some(f)) => f.i.clone(),
        (None, None) => ScalarDistribution::exponential_mean(scenario::MEAN_I_H)?.with_units("h"),
    };
    let excursion = match (&md.j, &fitted) {
        (Some(d), _) => d.clone(),
        (None, Some(f)) => f.j.clone(),
        (None, None) => ScalarDistribution::exponential_mean(scenario::MEAN_J_H)?.with_units("h"),
    };
    let p1 = md.p1.or(fitted.as_ref().map(|f| f.p1)).unwrap_or(scenario::P1);
    let p_pfc = match &md.p_pfc {
        Some(d) => d.clone(),
        None => ScalarDistribution::uniform(0.5 * market.reserve_kw(), market.reserve_kw())?.with_units("kW"),
    };
    if p_pfc.upper() > market.reserve_kw() * (1.0 + 1e-12) {
        return Err(CliError::new(
            EXIT_PARSE,
            format!("PFC power reaches {} kW, above the reserve of {} kW", p_pfc.upper(), market.reserve_kw()),
        ));
    }
    let opts = EnergyBuildOptions {
        grid_size: md.energy_grid,
        truncation: md.truncation,
    };
    let model = StochasticModel::new(interval, excursion, p_pfc, ExcursionSignModel::new(p1)?, &opts)?;
    Ok(CostModel::new(battery, market, model))
}

fn check_solver(s: &SolverSection) -> CliResult<()> {
    if s.grid_size < 51 {
        return Err(CliError::new(EXIT_PARSE, format!("solver.grid_size must be >= 51, got {}", s.grid_size)));
    }
    if !(s.rel_tol > 0.0) || s.max_iter == 0 {
        return Err(CliError::new(EXIT_PARSE, "solver.rel_tol and solver.max_iter must be positive"));
    }
    Ok(())
}

struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn create(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn with_writer(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> crate::Result<()>) -> CliResult<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    fn manifest(mut self, command: &str, loaded: &Loaded) -> CliResult<()> {
        let hash = hex::encode(Sha256::digest(loaded.canonical.as_bytes()));
        let outputs = self.written.clone();
        self.json(
            "manifest.json",
            &json!({
                "command": command,
                "version": env!("CARGO_PKG_VERSION"),
                "config_sha256": hash,
                "config": loaded.canonical,
                "seed": loaded.seed,
                "seed_generated": loaded.seed_generated,
                "outputs": outputs,
            }),
        )
    }
}

fn cmd_fit(common: &CommonArgs, trace_arg: Option<&Path>) -> CliResult<()> {
    let loaded = load_config(common)?;
    let cfg = &loaded.config.fit;
    let path = trace_arg
        .map(Path::to_path_buf)
        .or_else(|| cfg.trace.clone())
        .ok_or_else(|| CliError::new(EXIT_PARSE, "no trace given (use --trace or fit.trace)"))?;
    let t = trace::load_trace(&path).map_err(|e| match e {
        Error::Io(io) => io_err(&path, io),
        other => CliError::from(other),
    })?;
    let ev = trace::extract_intervals(&t, cfg.dead_band_hz, cfg.min_event_samples)?;
    let (i, j, signs) = trace::fit_empirical(&ev)?;
    let corr = trace::correlation_report(&ev, cfg.max_lag);

    let mut out = Outputs::create(&common.out_dir)?;
    out.json("i_distribution.json", &i)?;
    out.json("j_distribution.json", &j)?;
    out.json(
        "model.json",
        &FittedModel {
            p1: signs.p1(),
            i,
            j,
            events: ev.len(),
        },
    )?;
    out.with_writer("events.csv", |w| ev.write_csv(w))?;
    out.with_writer("correlation.csv", |w| corr.write_csv(w))?;
    out.json("correlation.json", &corr)?;
    out.json(
        "segmentation.json",
        &json!({
            "samples": t.samples().len(),
            "duration_h": t.duration_h(),
            "events": ev.len(),
            "trailing_i_h": ev.trailing_i_h,
            "dropped_h": ev.dropped_h,
            "start_index": ev.start_index,
            "end_index": ev.end_index,
        }),
    )?;
    out.manifest("fit", &loaded)?;
    println!(
        "events={} p1={:.6} max|corr|={:.4} band={:.4}",
        ev.len(),
        signs.p1(),
        corr.max_abs_nonzero_lag(),
        corr.band
    );
    Ok(())
}

fn band_json(b: &ThresholdPolicy) -> serde_json::Value {
    json!({ "pi_low": b.pi_low(), "pi_high": b.pi_high() })
}

fn cmd_solve(common: &CommonArgs) -> CliResult<()> {
    let loaded = load_config(common)?;
    let cfg = &loaded.config;
    check_solver(&cfg.solver)?;
    let m = build_cost_model(cfg)?;
    let s = &cfg.solver;
    let report = dp::solve(&m, s.grid_size, s.rel_tol, s.max_iter)?;
    let vi = &report.value_iteration;
    let cell = 1.0 / (s.grid_size - 1) as f64;
    let gap = |a: f64, b: f64| ((a - b).abs() / cell).round() as usize;
    let agreement = gap(report.roots.pi_low(), report.direct.policy.pi_low())
        .max(gap(report.roots.pi_high(), report.direct.policy.pi_high()));

    let mut out = Outputs::create(&common.out_dir)?;
    out.json(
        "thresholds.json",
        &json!({
            "roots": band_json(&report.roots),
            "direct": band_json(&report.direct.policy),
            "greedy": band_json(&report.greedy_band),
            "greedy_clamp_deviation_cells": report.greedy_clamp_deviation,
            "method_gap_cells": agreement,
            "direct_objective": report.direct.objective,
            "roots_objective": report.roots_objective,
            "direct_pairs_evaluated": report.direct.pairs_evaluated,
            "degenerate_objective": report.degenerate,
            "grid_size": report.grid_size,
            "tolerance": report.tolerance,
            "iterations": vi.iterations,
            "residual": vi.residual,
        }),
    )?;
    out.with_writer("value_function.csv", |w| write_value_csv(&vi.value, &report.direct.value, &vi.policy, w))?;
    out.manifest("solve", &loaded)?;
    println!(
        "pi_low={:.6} pi_high={:.6} (direct {:.6}, {:.6}) iterations={} elapsed={:.2}s{}",
        report.roots.pi_low(),
        report.roots.pi_high(),
        report.direct.policy.pi_low(),
        report.direct.policy.pi_high(),
        vi.iterations,
        vi.elapsed_s,
        if report.degenerate { " degenerate" } else { "" }
    );
    Ok(())
}

fn write_value_csv(h: &ValueFunction, direct: &ValueFunction, policy: &[usize], w: &mut Vec<u8>) -> crate::Result<()> {
    let g = h.grid();
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["soc", "value", "direct_value", "greedy_target"])?;
    for k in 0..g.len() {
        out.write_record([
            g.point(k).to_string(),
            h.values()[k].to_string(),
            direct.values()[k].to_string(),
            g.point(policy[k]).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn resolve_optimal_band(cfg: &SimulateSection) -> CliResult<ThresholdPolicy> {
    if let Some([lo, hi]) = cfg.optimal_band {
        return Ok(ThresholdPolicy::new(lo, hi)?);
    }
    let Some(path) = &cfg.thresholds_file else {
        return Err(CliError::new(
            EXIT_MISSING_POLICY,
            "no optimal band: set simulate.optimal_band or simulate.thresholds_file",
        ));
    };
    let value: serde_json::Value = read_json(path)?;
    let band = value.get("roots").cloned().unwrap_or(value);
    serde_json::from_value(band).map_err(|e| CliError::new(EXIT_MISSING_POLICY, format!("{}: {e}", path.display())))
}

fn cmd_simulate(common: &CommonArgs) -> CliResult<()> {
    let loaded = load_config(common)?;
    let cfg = &loaded.config;
    let sim = &cfg.simulate;
    let optimal = resolve_optimal_band(sim)?;
    let heuristic = ThresholdPolicy::new(sim.heuristic_band[0], sim.heuristic_band[1])?;
    let s0 = Soc::new(sim.initial_soc)?;
    let m = build_cost_model(cfg)?;
    let events = match (&sim.events_csv, sim.n_events, sim.horizon_hours) {
        (Some(path), _, _) => {
            let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
            let mut ev = EventSequence::read_csv(file)?;
            simulate::assign_pfc_power(&mut ev, &m.model.pfc_power, loaded.seed);
            ev
        }
        (None, Some(n), _) => simulate::generate_n_events(&m.model, n, loaded.seed),
        (None, None, Some(h)) => simulate::generate_events(&m.model, h, loaded.seed)?,
        (None, None, None) => simulate::generate_n_events(&m.model, 100_000, loaded.seed),
    };
    let policies = [
        Policy::NoRecharge,
        Policy::Aggressive,
        Policy::FixedBand { band: heuristic },
        Policy::OptimalBand { band: optimal },
    ];
    let labels: Vec<String> = ["no_recharge", "aggressive", "heuristic", "optimal"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let reports = simulate::compare_policies(&events, &policies, &m, s0, sim.trajectory)?;

    let mut out = Outputs::create(&common.out_dir)?;
    out.with_writer("comparison.csv", |w| simulate::write_comparison_csv(&reports, &labels, w))?;
    let table: Vec<serde_json::Value> = reports
        .iter()
        .zip(&labels)
        .map(|(r, l)| {
            let mut v = serde_json::to_value(r).unwrap_or_default();
            if let Some(obj) = v.as_object_mut() {
                obj.remove("trajectory");
                obj.insert("label".into(), json!(l));
            }
            v
        })
        .collect();
    out.json("comparison.json", &json!({ "seed": loaded.seed, "policies": table }))?;
    if sim.trajectory {
        for (r, l) in reports.iter().zip(&labels) {
            if let Some(tr) = &r.trajectory {
                out.with_writer(&format!("trajectory_{l}.csv"), |w| simulate::write_trajectory_csv(tr, w))?;
            }
        }
    }
    out.manifest("simulate", &loaded)?;
    for (r, l) in reports.iter().zip(&labels) {
        println!(
            "{l:<12} cost={:.4} charging={:.4} penalty={:.4} failures={}/{}",
            r.aggregate_cost, r.charging_cost, r.penalty_cost, r.failures, r.events
        );
    }
    Ok(())
}

fn cmd_plan(common: &CommonArgs) -> CliResult<()> {
    let loaded = load_config(common)?;
    let cfg = &loaded.config;
    check_solver(&cfg.solver)?;
    let plan = &cfg.plan;
    let capital = match &plan.capital {
        Some(c) => c.clone(),
        None => CapitalCostModel::new(CapitalForm::Affine { q0: 0.0, q1: 0.0 }, 1.0)?,
    };
    if !(plan.rel_tol > 0.0) {
        return Err(CliError::new(EXIT_PARSE, "plan.rel_tol must be positive"));
    }
    let m = build_cost_model(cfg)?;
    let rows = planner::expected_cost_vs_capacity(
        &m,
        &plan.capacities_kwh,
        cfg.solver.grid_size,
        plan.rel_tol,
        cfg.solver.max_iter,
    )?;
    let failed: Vec<String> = rows.iter().filter_map(|r| r.error.clone()).collect();
    let mut out = Outputs::create(&common.out_dir)?;
    let result = if rows.iter().filter(|r| r.error.is_none()).count() >= 3 {
        let result = PlanningResult::new(rows, capital)?;
        out.with_writer("planning.csv", |w| result.write_csv(w))?;
        out.json("planning.json", &result)?;
        Some(result)
    } else {
        out.json("planning.json", &json!({ "rows": rows }))?;
        None
    };
    out.manifest("plan", &loaded)?;
    if !failed.is_empty() {
        return Err(CliError::new(
            EXIT_NONCONVERGENCE,
            format!("{} capacities failed: {}", failed.len(), failed.join("; ")),
        ));
    }
    if let Some(r) = result {
        println!(
            "e_max*={:.3} kWh total={:.4} residual={:.3e}{}",
            r.choice.capacity_kwh,
            r.choice.total_cost,
            r.choice.marginal_residual,
            if r.choice.nonconvex_warning { " (non-convex column: grid argmin)" } else { "" }
        );
    }
    Ok(())
}

fn set_threads(common: &CommonArgs) -> CliResult<()> {
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::new(EXIT_FAILURE, e.to_string()))?;
    }
    Ok(())
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_PARSE } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Fit { common, trace } => set_threads(common).and_then(|_| cmd_fit(common, trace.as_deref())),
        Command::Solve { common } => set_threads(common).and_then(|_| cmd_solve(common)),
        Command::Simulate { common } => set_threads(common).and_then(|_| cmd_simulate(common)),
        Command::Plan { common } => set_threads(common).and_then(|_| cmd_plan(common)),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_nest_and_type() {
        let mut t = toml::Table::new();
        apply_override(&mut t, "market.c_p=20").unwrap();
        apply_override(&mut t, "simulate.optimal_band=[0.5, 0.6]").unwrap();
        apply_override(&mut t, "fit.trace=data/trace.csv").unwrap();
        let cfg: RunConfig = t.try_into().unwrap();
        assert_eq!(cfg.market.c_p, 20.0);
        assert_eq!(cfg.simulate.optimal_band, Some([0.5, 0.6]));
        assert_eq!(cfg.fit.trace, Some(PathBuf::from("data/trace.csv")));
        assert!(apply_override(&mut toml::Table::new(), "novalue").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let t: toml::Table = "[battery]\ncapacity = 3".parse().unwrap();
        assert!(t.try_into::<RunConfig>().is_err());
    }

    #[test]
    fn inline_distributions_parse() {
        let t: toml::Table = r#"
            [model]
            p1 = 0.4
            i = { kind = "exponential", rate = 20.0, units = "h" }
            p_pfc = { kind = "uniform", lower = 100.0, upper = 200.0 }
        "#
        .parse()
        .unwrap();
        let cfg: RunConfig = t.try_into().unwrap();
        assert_eq!(cfg.model.i.unwrap().units(), Some("h"));
        assert_eq!(cfg.model.p_pfc.unwrap().upper(), 200.0);
    }
}

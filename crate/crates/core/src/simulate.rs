//! Event-driven simulation of recharging policies.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::battery::{
    charging_cost, end_of_interval_soc, penalty_cost, post_event_soc, shortage, ExcursionSign, Soc,
};
use crate::distribution::ScalarDistribution;
use crate::dp::ThresholdPolicy;
use crate::error::{invalid, Result};
use crate::model::StochasticModel;
use crate::stage_cost::CostModel;
use crate::trace::{Event, EventSequence};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    /// Never recharge: the target is always the current SoC.
    NoRecharge,
    /// Always recharge toward a full battery.
    Aggressive,
    FixedBand { band: ThresholdPolicy },
    OptimalBand { band: ThresholdPolicy },
}

impl Policy {
    pub fn target(&self, s: f64) -> f64 {
        match self {
            Self::NoRecharge => s,
            Self::Aggressive => 1.0,
            Self::FixedBand { band } | Self::OptimalBand { band } => band.target(s),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::NoRecharge => "no_recharge",
            Self::Aggressive => "aggressive",
            Self::FixedBand { .. } => "fixed_band",
            Self::OptimalBand { .. } => "optimal_band",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    /// End of a quiet interval.
    IEnd,
    /// End of an excursion.
    JEnd,
}

impl StepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::IEnd => "i_end",
            Self::JEnd => "j_end",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub time_h: f64,
    pub event_index: usize,
    pub soc: f64,
    pub event_type: StepKind,
    pub cumulative_cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub policy: Policy,
    pub initial_soc: f64,
    pub charging_cost: f64,
    pub penalty_cost: f64,
    pub aggregate_cost: f64,
    pub events: usize,
    pub failures: usize,
    pub failure_probability: f64,
    pub final_soc: f64,
    pub duration_h: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Vec<TrajectoryPoint>>,
}

fn draw_sign<R: Rng>(rng: &mut R, p1: f64) -> ExcursionSign {
    if rng.gen::<f64>() < p1 {
        ExcursionSign::Over
    } else {
        ExcursionSign::Under
    }
}

fn draw_event<R: Rng>(model: &StochasticModel, rng: &mut R) -> Event {
    let i_len_h = model.interval.sample(rng);
    let j_len_h = model.excursion.sample(rng);
    let q = draw_sign(rng, model.signs.p1());
    let p = model.pfc_power.sample(rng);
    Event {
        i_len_h,
        j_len_h,
        q,
        p_pfc_kw: Some(p),
    }
}

/// Draws stages until the clock passes `horizon_h`. A stage is kept when its
/// quiet interval ends inside the horizon; the truncated remainder of a
/// quiet interval that does not is kept as the trailing interval.
pub fn generate_events(model: &StochasticModel, horizon_h: f64, seed: u64) -> Result<EventSequence> {
    if !(horizon_h >= 0.0 && horizon_h.is_finite()) {
        return Err(invalid(format!("horizon must be finite and >= 0, got {horizon_h}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seq = EventSequence::default();
    let mut t = 0.0;
    while t < horizon_h {
        let e = draw_event(model, &mut rng);
        if t + e.i_len_h > horizon_h {
            seq.trailing_i_h = horizon_h - t;
            break;
        }
        t += e.i_len_h + e.j_len_h;
        seq.events.push(e);
    }
    Ok(seq)
}

/// Exactly `n` stages.
pub fn generate_n_events(model: &StochasticModel, n: usize, seed: u64) -> EventSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    EventSequence {
        events: (0..n).map(|_| draw_event(model, &mut rng)).collect(),
        ..Default::default()
    }
}

/// Fills in missing excursion powers from `p_pfc`, one draw per event in order.
pub fn assign_pfc_power(ev: &mut EventSequence, p_pfc: &ScalarDistribution, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for e in &mut ev.events {
        let p = p_pfc.sample(&mut rng);
        e.p_pfc_kw.get_or_insert(p);
    }
}

fn check_policy(policy: &Policy) -> Result<()> {
    if let Policy::FixedBand { band } | Policy::OptimalBand { band } = policy {
        ThresholdPolicy::new(band.pi_low(), band.pi_high())?;
    }
    Ok(())
}

/// Replays `ev` under `policy` from `s0`, accumulating undiscounted costs.
pub fn simulate_policy(
    ev: &EventSequence,
    policy: &Policy,
    m: &CostModel,
    s0: Soc,
    keep_trajectory: bool,
) -> Result<SimulationReport> {
    check_policy(policy)?;
    let b = &m.battery;
    let (c_e, c_p) = (m.market.c_e(), m.market.c_p());
    let mut s = s0;
    let (mut charge, mut penalty, mut failures) = (0.0, 0.0, 0usize);
    let mut t = 0.0;
    let mut traj = keep_trajectory.then(Vec::new);
    for (k, e) in ev.events.iter().enumerate() {
        let energy = e
            .energy_kwh()
            .ok_or_else(|| invalid(format!("event {k} has no PFC power assigned")))?;
        let pi = Soc::clamped(policy.target(s.value()));
        charge += charging_cost(s, pi, e.i_len_h, b, c_e);
        let s_end = end_of_interval_soc(s, pi, e.i_len_h, b);
        t += e.i_len_h;
        if let Some(tr) = traj.as_mut() {
            tr.push(TrajectoryPoint {
                time_h: t,
                event_index: k,
                soc: s_end.value(),
                event_type: StepKind::IEnd,
                cumulative_cost: charge + penalty,
            });
        }
        if shortage(s_end, e.q, energy, b) > 0.0 {
            failures += 1;
        }
        penalty += penalty_cost(s_end, e.q, energy, b, c_p);
        s = post_event_soc(s_end, e.q, energy, b);
        t += e.j_len_h;
        if let Some(tr) = traj.as_mut() {
            tr.push(TrajectoryPoint {
                time_h: t,
                event_index: k,
                soc: s.value(),
                event_type: StepKind::JEnd,
                cumulative_cost: charge + penalty,
            });
        }
    }
    let n = ev.events.len();
    Ok(SimulationReport {
        policy: *policy,
        initial_soc: s0.value(),
        charging_cost: charge,
        penalty_cost: penalty,
        aggregate_cost: charge + penalty,
        events: n,
        failures,
        failure_probability: if n > 0 { failures as f64 / n as f64 } else { 0.0 },
        final_soc: s.value(),
        duration_h: ev.total_duration_h(),
        trajectory: traj,
    })
}

/// Runs every policy on the same events.
pub fn compare_policies(
    ev: &EventSequence,
    policies: &[Policy],
    m: &CostModel,
    s0: Soc,
    keep_trajectory: bool,
) -> Result<Vec<SimulationReport>> {
    if policies.is_empty() {
        return Err(invalid("at least one policy is required"));
    }
    policies
        .par_iter()
        .map(|p| simulate_policy(ev, p, m, s0, keep_trajectory))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscountedEstimate {
    /// Penalty replaced by its expectation given the stage's SoC, sign and power.
    pub mean: f64,
    pub std_error: f64,
    /// Plain estimate from the sampled penalties.
    pub raw_mean: f64,
    pub raw_std_error: f64,
    pub replications: usize,
    pub stages: usize,
}

/// `E[(P·J − a)⁺ | P = p] = p · E[(J − a/p)⁺]`.
fn expected_shortage_given_power(j: &ScalarDistribution, p: f64, a: f64) -> f64 {
    if p > 0.0 {
        p * j.excess_mean(a / p)
    } else {
        0.0
    }
}

fn mean_and_error(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte-Carlo estimate of the discounted cost `Σ αⁿ costₙ` from `s0`,
/// truncated after `stages` stages. Replication `r` uses stream `r` of `seed`.
///
/// Besides the plain estimate, each sampled penalty is also replaced by its
/// conditional mean over `J` given the SoC, sign and power of that stage. The
/// state path is unchanged, so both estimate the same quantity; the second
/// one drops most of the heavy penalty tail from the variance.
pub fn discounted_cost(
    m: &CostModel,
    policy: &Policy,
    s0: Soc,
    stages: usize,
    replications: usize,
    seed: u64,
) -> Result<DiscountedEstimate> {
    check_policy(policy)?;
    if replications < 2 {
        return Err(invalid("need at least two replications"));
    }
    let b = &m.battery;
    let (c_e, c_p, alpha) = (m.market.c_e(), m.market.c_p(), m.market.alpha());
    let (raw, conditional): (Vec<f64>, Vec<f64>) = (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let mut s = s0;
            let mut disc = 1.0;
            let (mut raw, mut cond) = (0.0, 0.0);
            for _ in 0..stages {
                let e = draw_event(&m.model, &mut rng);
                let power = e.p_pfc_kw.unwrap_or(0.0);
                let energy = power * e.j_len_h;
                let pi = Soc::clamped(policy.target(s.value()));
                let charge = charging_cost(s, pi, e.i_len_h, b, c_e);
                let s_end = end_of_interval_soc(s, pi, e.i_len_h, b);
                let room = match e.q {
                    ExcursionSign::Over => b.headroom(s_end.value()),
                    ExcursionSign::Under => b.deliverable(s_end.value()),
                };
                raw += disc * (charge + penalty_cost(s_end, e.q, energy, b, c_p));
                cond += disc * (charge + c_p * expected_shortage_given_power(&m.model.excursion, power, room));
                s = post_event_soc(s_end, e.q, energy, b);
                disc *= alpha;
            }
            (raw, cond)
        })
        .unzip();
    let (raw_mean, raw_std_error) = mean_and_error(&raw);
    let (mean, std_error) = mean_and_error(&conditional);
    Ok(DiscountedEstimate {
        mean,
        std_error,
        raw_mean,
        raw_std_error,
        replications,
        stages,
    })
}

/// Comparison table as CSV, one row per policy.
pub fn write_comparison_csv<W: Write>(reports: &[SimulationReport], labels: &[String], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "policy",
        "pi_low",
        "pi_high",
        "initial_soc",
        "charging_cost",
        "penalty_cost",
        "aggregate_cost",
        "events",
        "failures",
        "failure_probability",
        "final_soc",
        "duration_h",
    ])?;
    for (r, label) in reports.iter().zip(labels) {
        let (lo, hi) = match r.policy {
            Policy::FixedBand { band } | Policy::OptimalBand { band } => {
                (band.pi_low().to_string(), band.pi_high().to_string())
            }
            _ => (String::new(), String::new()),
        };
        out.write_record([
            label.clone(),
            lo,
            hi,
            r.initial_soc.to_string(),
            r.charging_cost.to_string(),
            r.penalty_cost.to_string(),
            r.aggregate_cost.to_string(),
            r.events.to_string(),
            r.failures.to_string(),
            r.failure_probability.to_string(),
            r.final_soc.to_string(),
            r.duration_h.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Trajectory as CSV: `time_h, event_index, soc, event_type, cumulative_cost`.
pub fn write_trajectory_csv<W: Write>(points: &[TrajectoryPoint], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["time_h", "event_index", "soc", "event_type", "cumulative_cost"])?;
    for p in points {
        out.write_record([
            p.time_h.to_string(),
            p.event_index.to_string(),
            p.soc.to_string(),
            p.event_type.as_str().to_string(),
            p.cumulative_cost.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

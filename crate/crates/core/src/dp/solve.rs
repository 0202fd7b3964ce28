use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::discrete::{DiscreteModel, TransitionMatrix};
use super::policy::ThresholdPolicy;
use super::value::{SlopeInterpolant, ValueFunction};
use crate::error::{invalid, Error, Result};
use crate::stage_cost::CostModel;

pub const DEFAULT_GRID: usize = 201;
pub const DEFAULT_MAX_ITER: usize = 10_000;
/// Largest grid solved by dense LU in policy evaluation.
const DENSE_LIMIT: usize = 512;
const BISECTION_TOL: f64 = 1e-10;

pub fn bellman_operator(h: &ValueFunction, dm: &DiscreteModel) -> Result<(ValueFunction, Vec<usize>)> {
    dm.bellman(h)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValueIteration {
    pub value: ValueFunction,
    /// Greedy target index per grid state.
    pub policy: Vec<usize>,
    pub iterations: usize,
    /// Sup-norm change in the last sweep.
    pub residual: f64,
    /// Wall-clock time; not serialized so outputs stay byte-identical.
    #[serde(skip)]
    pub elapsed_s: f64,
}

/// Iterates `H ← TH` from `H = 0` until the sweep change certifies
/// `‖H - H*‖∞ ≤ tol`.
pub fn value_iteration(dm: &DiscreteModel, tol: f64, max_iter: usize) -> Result<ValueIteration> {
    if !(tol > 0.0) {
        return Err(invalid(format!("tolerance must be > 0, got {tol}")));
    }
    let start = Instant::now();
    let alpha = dm.alpha();
    let stop = tol * (1.0 - alpha) / (2.0 * alpha);
    let mut h = ValueFunction::zeros(dm.grid());
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let (next, policy) = dm.bellman(&h)?;
        residual = next.sup_distance(&h);
        h = next;
        if residual <= stop {
            return Ok(ValueIteration {
                value: h,
                policy,
                iterations: it,
                residual,
                elapsed_s: start.elapsed().as_secs_f64(),
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Band read off a greedy policy: the highest target chosen by a charging
/// state and the lowest chosen by a discharging state.
///
/// Targets far beyond one interval's reach are nearly tied, so the extremes
/// of the grid are not reliable witnesses on their own.
pub fn greedy_band(dm: &DiscreteModel, policy: &[usize]) -> Result<ThresholdPolicy> {
    let g = dm.grid();
    let n = g.len();
    let low = policy
        .iter()
        .enumerate()
        .filter(|&(i, &j)| j > i)
        .map(|(_, &j)| j)
        .max()
        .unwrap_or(0);
    let high = policy
        .iter()
        .enumerate()
        .filter(|&(i, &j)| j < i)
        .map(|(_, &j)| j)
        .min()
        .unwrap_or(n - 1);
    ThresholdPolicy::new(g.point(low.min(high)), g.point(high.max(low)))
}

/// Largest distance, in cells, between a greedy policy and the clamp rule of `band`.
pub fn clamp_deviation(dm: &DiscreteModel, policy: &[usize], band: &ThresholdPolicy) -> usize {
    let g = dm.grid();
    policy
        .iter()
        .enumerate()
        .map(|(i, &j)| j.abs_diff(g.nearest(band.target(g.point(i)))))
        .max()
        .unwrap_or(0)
}

/// Marginal continuation value of the target, `α · d/dπ E[H*(next) | π]`
/// for a stage that reaches its target, with `H*′` from central differences.
pub fn u_of_pi(pi: f64, h: &ValueFunction, m: &CostModel) -> Result<f64> {
    let b = &m.battery;
    let e = &m.model.energy;
    let signs = &m.model.signs;
    let slope = SlopeInterpolant::new(h);
    let tol = m.quad_tol();
    let pi = pi.clamp(0.0, 1.0);
    let mut total = 0.0;
    if signs.p1() > 0.0 {
        let up = e.expect_below(|x| slope.at(pi + b.eta() * x / b.e_max()), b.headroom(pi), tol)?;
        total += signs.p1() * up;
    }
    if signs.p_minus1() > 0.0 {
        let down = e.expect_below(|x| slope.at(pi - x / (b.eta() * b.e_max())), b.deliverable(pi), tol)?;
        total += signs.p_minus1() * down;
    }
    Ok(m.market.alpha() * total)
}

/// Root of a non-decreasing `f` on `[0, 1]`; 0 if `f(0) > 0`, 1 if `f(1) < 0`.
fn monotone_root<F: Fn(f64) -> Result<f64>>(f: F) -> Result<f64> {
    let f0 = f(0.0)?;
    if f0 >= 0.0 {
        return Ok(0.0);
    }
    if f(1.0)? <= 0.0 {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Band from the first-order conditions `r₁E_max + u = 0` and `r₂E_max + u = 0`.
pub fn solve_thresholds_by_roots(m: &CostModel, h: &ValueFunction) -> Result<ThresholdPolicy> {
    let e_max = m.battery.e_max();
    let low = monotone_root(|p| Ok(m.r_marginals(p).0 * e_max + u_of_pi(p, h, m)?))?;
    let high = monotone_root(|p| Ok(m.r_marginals(p).1 * e_max + u_of_pi(p, h, m)?))?;
    // r₁ ≥ r₂ pointwise, so only bisection round-off can invert the pair
    ThresholdPolicy::new(low.min(high), high.max(low))
}

pub fn build_transition_matrix(policy: &ThresholdPolicy, dm: &DiscreteModel) -> Result<TransitionMatrix> {
    dm.transition_matrix(policy)
}

/// Solves `(I - αP) H = h`.
pub fn evaluate_linear(p: &TransitionMatrix, h: &[f64], alpha: f64) -> Result<ValueFunction> {
    let n = p.len();
    if n <= DENSE_LIMIT {
        let a = DMatrix::from_fn(n, n, |i, j| {
            let d = if i == j { 1.0 } else { 0.0 };
            d - alpha * p.get(i, j)
        });
        let lu = a.lu();
        // (I - αP) is strictly diagonally dominant for α < 1 and row-stochastic P
        let x = lu
            .solve(&DVector::from_column_slice(h))
            .ok_or_else(|| invalid("policy evaluation system is singular"))?;
        return ValueFunction::new(x.iter().copied().collect());
    }
    let scale = h.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let stop = 1e-13 * scale * (1.0 - alpha);
    let mut v = h.to_vec();
    for _ in 0..DEFAULT_MAX_ITER * 10 {
        let pv = p.apply(&v);
        let next: Vec<f64> = h.iter().zip(pv).map(|(a, b)| a + alpha * b).collect();
        let delta = next.iter().zip(&v).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        v = next;
        if delta <= stop {
            return ValueFunction::new(v);
        }
    }
    Err(Error::NonConvergence {
        iterations: DEFAULT_MAX_ITER * 10,
        residual: f64::NAN,
    })
}

/// Discounted cost of following `policy` forever, from every grid state.
pub fn policy_evaluation(policy: &ThresholdPolicy, dm: &DiscreteModel) -> Result<ValueFunction> {
    let p = dm.transition_matrix(policy)?;
    let h = dm.policy_stage_costs(policy)?;
    evaluate_linear(&p, &h, dm.alpha())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DirectSolution {
    pub policy: ThresholdPolicy,
    pub value: ValueFunction,
    /// Uniform average of the value vector.
    pub objective: f64,
    pub pairs_evaluated: usize,
}

fn better(a: (f64, usize, usize), b: (f64, usize, usize), tol: f64) -> bool {
    // lower objective, then the wider band, then the lower threshold
    if a.0 < b.0 - tol {
        return true;
    }
    if a.0 > b.0 + tol {
        return false;
    }
    let (wa, wb) = (a.2 - a.1, b.2 - b.1);
    wa > wb || (wa == wb && a.1 < b.1)
}

/// Two-scalar search over band pairs on the grid, each scored by the uniform
/// average of its exactly evaluated value vector. A coarse sweep is refined
/// once around its best pair at single-cell resolution.
pub fn solve_thresholds_direct(dm: &DiscreteModel) -> Result<DirectSolution> {
    let n = dm.grid().len();
    let coarse = ((n - 1) / 20).max(1);
    let events = dm.events();
    let alpha = dm.alpha();
    let tol = 1e-12 * dm.cost().cost_scale();

    let score = |pairs: Vec<(usize, usize)>| -> Result<Vec<(f64, usize, usize)>> {
        pairs
            .into_par_iter()
            .map(|(l, h)| {
                let (stage, p) = dm.grid_policy_system(&events, l, h)?;
                let v = evaluate_linear(&p, &stage, alpha)?;
                Ok((v.mean(), l, h))
            })
            .collect()
    };
    let pick = |scored: &[(f64, usize, usize)]| {
        scored
            .iter()
            .copied()
            .reduce(|best, c| if better(c, best, tol) { c } else { best })
            .expect("non-empty candidate set")
    };

    let mut ticks: Vec<usize> = (0..n).step_by(coarse).collect();
    if *ticks.last().expect("grid has points") != n - 1 {
        ticks.push(n - 1);
    }
    let mut pairs = Vec::new();
    for (a, &l) in ticks.iter().enumerate() {
        for &h in &ticks[a..] {
            pairs.push((l, h));
        }
    }
    let mut evaluated = pairs.len();
    let best = pick(&score(pairs)?);

    let window = |c: usize| c.saturating_sub(coarse)..=(c + coarse).min(n - 1);
    let mut fine = Vec::new();
    for l in window(best.1) {
        for h in window(best.2) {
            if l <= h {
                fine.push((l, h));
            }
        }
    }
    evaluated += fine.len();
    let mut scored = score(fine)?;
    scored.push(best);
    let (_, l, h) = pick(&scored);

    let g = dm.grid();
    let (stage, p) = dm.grid_policy_system(&events, l, h)?;
    let value = evaluate_linear(&p, &stage, alpha)?;
    Ok(DirectSolution {
        policy: ThresholdPolicy::new(g.point(l), g.point(h))?,
        objective: value.mean(),
        value,
        pairs_evaluated: evaluated,
    })
}

/// Everything `solve` produces for one cost model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub grid_size: usize,
    pub tolerance: f64,
    pub value_iteration: ValueIteration,
    pub greedy_band: ThresholdPolicy,
    /// Largest greedy-vs-clamp disagreement in cells.
    pub greedy_clamp_deviation: usize,
    pub roots: ThresholdPolicy,
    pub direct: DirectSolution,
    /// Uniform average of the value vector of the root band.
    pub roots_objective: f64,
    /// Every action costs the same: both prices are zero.
    pub degenerate: bool,
}

pub fn solve(m: &CostModel, grid_size: usize, rel_tol: f64, max_iter: usize) -> Result<SolveReport> {
    let dm = DiscreteModel::new(m, grid_size)?;
    let tol = rel_tol * m.cost_scale();
    let vi = value_iteration(&dm, tol, max_iter)?;
    let greedy = greedy_band(&dm, &vi.policy)?;
    let deviation = clamp_deviation(&dm, &vi.policy, &greedy);
    let roots = solve_thresholds_by_roots(m, &vi.value)?;
    let direct = solve_thresholds_direct(&dm)?;
    let roots_objective = policy_evaluation(&roots, &dm)?.mean();
    Ok(SolveReport {
        grid_size,
        tolerance: tol,
        value_iteration: vi,
        greedy_band: greedy,
        greedy_clamp_deviation: deviation,
        roots,
        direct,
        roots_objective,
        degenerate: m.market.c_e() == 0.0 && m.market.c_p() == 0.0,
    })
}

//! The SoC-grid MDP shared by value iteration and the direct method.
//!
//! A stage from grid state `i` with target `π` has two legs: a full-rate
//! move toward `π` lasting `min(I, Q₁)`, then the excursion jump. Values
//! off the grid are read by linear interpolation. Along any monotone path
//! over the grid, `E[V(X)] = V(x₀) + Σ_m (V(x_{m+1}) - V(x_m)) · ā_m`,
//! where `ā_m` is the average of `Pr{X beyond x}` over segment `m`; the
//! averages reduce to differences of limited means, so both legs cost
//! O(path length) per state and no nested quadrature is needed. The same
//! path weights make up the rows of the transition matrix, so the operator
//! and the matrix describe one and the same chain.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::SocGrid;
use super::policy::ThresholdPolicy;
use super::value::ValueFunction;
use crate::battery::Soc;
use crate::error::{invalid, Result};
use crate::stage_cost::CostModel;

/// Relative width of the window inside which two actions count as tied.
const TIE_TOL: f64 = 1e-12;

pub struct DiscreteModel {
    cost: CostModel,
    grid: SocGrid,
    /// `stage[i * n + j] = h(s_i, s_j)`.
    stage: Vec<f64>,
    /// Average travel-distance ccdf over the `r`-th grid segment.
    travel: Vec<f64>,
    /// Average post-event ccdf over the `r`-th segment, upward and downward.
    up: Vec<f64>,
    down: Vec<f64>,
}

/// Row-stochastic matrix over the SoC grid, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    n: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(invalid("transition matrix must be square and non-empty"));
        }
        Ok(Self {
            n,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn max_row_sum_error(&self) -> f64 {
        (0..self.n)
            .map(|i| (self.row(i).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `P v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(v).map(|(p, x)| p * x).sum())
            .collect()
    }

    /// `v P`.
    pub fn left_apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(self.row(i)) {
                *o += vi * p;
            }
        }
        out
    }
}

/// Coefficients `c_m` on path points `x_0..x_L` given segment averages `ā_m`.
fn path_coefficients(avgs: &[f64]) -> Vec<f64> {
    let l = avgs.len();
    let mut c = Vec::with_capacity(l + 1);
    if l == 0 {
        c.push(1.0);
        return c;
    }
    c.push(1.0 - avgs[0]);
    for m in 1..l {
        c.push(avgs[m - 1] - avgs[m]);
    }
    c.push(avgs[l - 1]);
    c
}

impl DiscreteModel {
    pub fn new(cost: &CostModel, n: usize) -> Result<Self> {
        let grid = SocGrid::new(n)?;
        let points = grid.points();
        let stage_rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let s = Soc::clamped(points[i]);
                points
                    .iter()
                    .map(|&p| cost.one_stage_cost(s, Soc::clamped(p)))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        let stage = stage_rows.into_iter().flatten().collect();

        let b = &cost.battery;
        let d = grid.step();
        let interval = &cost.model.interval;
        let energy = &cost.model.energy;
        let t = d * b.e_max() / b.p_max();
        let travel = (0..n - 1)
            .map(|r| (interval.limited_mean((r + 1) as f64 * t) - interval.limited_mean(r as f64 * t)) / t)
            .collect();
        let eu = d * b.e_max() / b.eta();
        let up = (0..n - 1)
            .map(|r| (energy.limited_mean((r + 1) as f64 * eu) - energy.limited_mean(r as f64 * eu)) / eu)
            .collect();
        let ed = d * b.e_max() * b.eta();
        let down = (0..n - 1)
            .map(|r| (energy.limited_mean((r + 1) as f64 * ed) - energy.limited_mean(r as f64 * ed)) / ed)
            .collect();
        Ok(Self {
            cost: cost.clone(),
            grid,
            stage,
            travel,
            up,
            down,
        })
    }

    pub fn cost(&self) -> &CostModel {
        &self.cost
    }

    pub fn grid(&self) -> SocGrid {
        self.grid
    }

    pub fn alpha(&self) -> f64 {
        self.cost.market.alpha()
    }

    pub fn stage_cost(&self, i: usize, j: usize) -> f64 {
        self.stage[i * self.grid.len() + j]
    }

    fn tie_tol(&self) -> f64 {
        TIE_TOL * self.cost.cost_scale()
    }

    /// Expected value after the excursion, starting from each grid node.
    pub fn post_event_values(&self, h: &[f64]) -> Vec<f64> {
        let n = h.len();
        let p1 = self.cost.model.signs.p1();
        let pm1 = self.cost.model.signs.p_minus1();
        (0..n)
            .into_par_iter()
            .map(|k| {
                let mut up = h[k];
                for r in 0..n - 1 - k {
                    up += (h[k + r + 1] - h[k + r]) * self.up[r];
                }
                let mut down = h[k];
                for r in 0..k {
                    down += (h[k - r - 1] - h[k - r]) * self.down[r];
                }
                p1 * up + pm1 * down
            })
            .collect()
    }

    /// `Q(i, j) = h(i, j) + α E[H(next) | i, target j]` for every target `j`.
    fn action_values(&self, i: usize, w: &[f64]) -> Vec<f64> {
        let n = w.len();
        let alpha = self.alpha();
        let mut q = vec![0.0; n];
        q[i] = self.stage_cost(i, i) + alpha * w[i];
        let mut acc = w[i];
        for j in i + 1..n {
            acc += (w[j] - w[j - 1]) * self.travel[j - 1 - i];
            q[j] = self.stage_cost(i, j) + alpha * acc;
        }
        acc = w[i];
        for j in (0..i).rev() {
            acc += (w[j] - w[j + 1]) * self.travel[i - 1 - j];
            q[j] = self.stage_cost(i, j) + alpha * acc;
        }
        q
    }

    /// One Bellman sweep: minimized values and the greedy target index per state.
    /// Near-ties go to the target closest to the current state.
    pub fn bellman(&self, h: &ValueFunction) -> Result<(ValueFunction, Vec<usize>)> {
        if h.values().len() != self.grid.len() {
            return Err(invalid("value function and model grids differ"));
        }
        let w = self.post_event_values(h.values());
        let tol = self.tie_tol();
        let (values, policy): (Vec<f64>, Vec<usize>) = (0..self.grid.len())
            .into_par_iter()
            .map(|i| {
                let q = self.action_values(i, &w);
                let best = q.iter().copied().fold(f64::INFINITY, f64::min);
                let choice = (0..q.len())
                    .filter(|&j| q[j] <= best + tol)
                    .min_by_key(|&j| (j.abs_diff(i), j))
                    .expect("at least one action");
                (q[choice], choice)
            })
            .unzip();
        Ok((ValueFunction::new(values)?, policy))
    }

    /// Node weights of the state reached at the end of the recharge leg.
    fn travel_weights(&self, i: usize, target: f64) -> Vec<(usize, f64)> {
        let d = self.grid.step();
        let s = self.grid.point(i);
        let j = self.grid.nearest(target);
        if (self.grid.point(j) - target).abs() <= 1e-9 * d {
            let path: Vec<usize> = if j >= i {
                (i..=j).collect()
            } else {
                (j..=i).rev().collect()
            };
            let c = path_coefficients(&self.travel[..path.len() - 1]);
            return path.into_iter().zip(c).collect();
        }
        // off-grid target: whole cells, then the partial last segment
        let dist = (target - s).abs();
        let dir = if target > s { 1.0 } else { -1.0 };
        let whole = (dist / d).floor() as usize;
        let mut avgs = self.travel[..whole].to_vec();
        let b = &self.cost.battery;
        let scale = b.e_max() / b.p_max();
        let (ta, tb) = (whole as f64 * d * scale, dist * scale);
        if tb > ta {
            let iv = &self.cost.model.interval;
            avgs.push((iv.limited_mean(tb) - iv.limited_mean(ta)) / (tb - ta));
        }
        let c = path_coefficients(&avgs);
        let mut out = Vec::with_capacity(2 * c.len());
        for (m, cm) in c.into_iter().enumerate() {
            let x = if m == avgs.len() {
                target
            } else {
                s + dir * m as f64 * d
            };
            let (k, t) = self.grid.locate(x);
            out.push((k, cm * (1.0 - t)));
            out.push((k + 1, cm * t));
        }
        out
    }

    /// Transition row of the excursion leg from node `k`.
    fn event_row(&self, k: usize) -> Vec<f64> {
        let n = self.grid.len();
        let p1 = self.cost.model.signs.p1();
        let pm1 = 1.0 - p1;
        let mut row = vec![0.0; n];
        let c = path_coefficients(&self.up[..n - 1 - k]);
        for (m, cm) in c.into_iter().enumerate() {
            row[k + m] += p1 * cm;
        }
        let c = path_coefficients(&self.down[..k]);
        for (m, cm) in c.into_iter().enumerate() {
            row[k - m] += pm1 * cm;
        }
        row
    }

    fn event_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.grid.len()).into_par_iter().map(|k| self.event_row(k)).collect()
    }

    fn transition_with(&self, events: &[Vec<f64>], targets: &[f64]) -> Result<TransitionMatrix> {
        let n = self.grid.len();
        let rows = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut row = vec![0.0; n];
                for (k, wk) in self.travel_weights(i, targets[i]) {
                    if wk == 0.0 {
                        continue;
                    }
                    for (r, e) in row.iter_mut().zip(&events[k]) {
                        *r += wk * e;
                    }
                }
                row
            })
            .collect();
        TransitionMatrix::from_rows(rows)
    }

    /// Transition matrix of the chain under a band policy.
    pub fn transition_matrix(&self, policy: &ThresholdPolicy) -> Result<TransitionMatrix> {
        let events = self.event_matrix();
        let targets: Vec<f64> = self.grid.points().iter().map(|&s| policy.target(s)).collect();
        self.transition_with(&events, &targets)
    }

    /// Stage costs of a band policy at every grid node.
    pub fn policy_stage_costs(&self, policy: &ThresholdPolicy) -> Result<Vec<f64>> {
        let d = self.grid.step();
        (0..self.grid.len())
            .map(|i| {
                let s = self.grid.point(i);
                let target = policy.target(s);
                let j = self.grid.nearest(target);
                if (self.grid.point(j) - target).abs() <= 1e-9 * d {
                    Ok(self.stage_cost(i, j))
                } else {
                    self.cost.one_stage_cost(Soc::clamped(s), Soc::clamped(target))
                }
            })
            .collect()
    }

    /// Stage costs and transition matrix for a band given by grid indices.
    pub(crate) fn grid_policy_system(
        &self,
        events: &[Vec<f64>],
        low: usize,
        high: usize,
    ) -> Result<(Vec<f64>, TransitionMatrix)> {
        let n = self.grid.len();
        let idx: Vec<usize> = (0..n).map(|i| i.clamp(low, high)).collect();
        let h = (0..n).map(|i| self.stage_cost(i, idx[i])).collect();
        let targets: Vec<f64> = idx.iter().map(|&j| self.grid.point(j)).collect();
        Ok((h, self.transition_with(events, &targets)?))
    }

    pub(crate) fn events(&self) -> Vec<Vec<f64>> {
        self.event_matrix()
    }
}

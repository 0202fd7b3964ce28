//! Capacity planning: operating cost against capacity, and the capacity that
//! balances it with amortized capital cost.
//!
//! The operating cost of a capacity is its value function averaged over
//! initial SoC with uniform weights. Those weights do not move with the
//! capacity, so the column inherits the decreasing convex shape that the
//! value function has at every fixed SoC. The average under the stationary
//! law of the optimal band is reported alongside; that law concentrates
//! wherever the band sits for each capacity, and the weighted column need
//! not be monotone.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dp::{solve_thresholds_by_roots, value_iteration, DiscreteModel, ThresholdPolicy, TransitionMatrix};
use crate::error::{invalid, Error, Result};
use crate::stage_cost::CostModel;

pub const STATIONARY_TOL: f64 = 1e-10;
pub const STATIONARY_MAX_ITER: usize = 100_000;
/// Relative slack of the convexity and monotonicity checks.
pub const SHAPE_TOL: f64 = 1e-6;

/// Long-run state law of the chain, by power iteration from the uniform
/// vector. Both the plain iterate and its running (Cesàro) average are
/// tested, so periodic chains settle too.
pub fn stationary_distribution(p: &TransitionMatrix) -> Result<Vec<f64>> {
    let n = p.len();
    let mut v = vec![1.0 / n as f64; n];
    let mut avg = v.clone();
    let residual = |x: &[f64]| -> f64 {
        let y = p.left_apply(x);
        y.iter().zip(x).map(|(a, b)| (a - b).abs()).sum()
    };
    let mut last = f64::INFINITY;
    for k in 1..=STATIONARY_MAX_ITER {
        let r = residual(&v);
        if r <= STATIONARY_TOL {
            return Ok(normalized(v));
        }
        if k % 16 == 0 {
            let ra = residual(&avg);
            if ra <= STATIONARY_TOL {
                return Ok(normalized(avg));
            }
            last = r.min(ra);
        }
        v = p.left_apply(&v);
        let w = 1.0 / (k + 1) as f64;
        for (a, x) in avg.iter_mut().zip(&v) {
            *a += w * (x - *a);
        }
    }
    Err(Error::NonConvergence {
        iterations: STATIONARY_MAX_ITER,
        residual: last,
    })
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    for x in v.iter_mut() {
        *x = x.max(0.0);
    }
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum CapitalForm {
    /// `q0 + q1 · E` dollars for capacity `E` kWh.
    Affine { q0: f64, q1: f64 },
    /// Piecewise-linear through `(capacity_kwh, cost)` points, flat outside.
    Tabulated { points: Vec<(f64, f64)> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CapitalDoc", into = "CapitalDoc")]
pub struct CapitalCostModel {
    form: CapitalForm,
    lambda: f64,
}

#[derive(Serialize, Deserialize)]
struct CapitalDoc {
    #[serde(flatten)]
    form: CapitalForm,
    lambda: f64,
}

impl TryFrom<CapitalDoc> for CapitalCostModel {
    type Error = Error;
    fn try_from(d: CapitalDoc) -> Result<Self> {
        Self::new(d.form, d.lambda)
    }
}

impl From<CapitalCostModel> for CapitalDoc {
    fn from(c: CapitalCostModel) -> Self {
        CapitalDoc {
            form: c.form,
            lambda: c.lambda,
        }
    }
}

impl CapitalCostModel {
    pub fn new(form: CapitalForm, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(invalid(format!("lambda must be > 0, got {lambda}")));
        }
        match &form {
            CapitalForm::Affine { q0, q1 } => {
                if !(q0.is_finite() && q1.is_finite() && *q1 >= 0.0) {
                    return Err(invalid("affine capital cost needs finite q0 and q1 >= 0"));
                }
            }
            CapitalForm::Tabulated { points } => {
                if points.is_empty() {
                    return Err(invalid("tabulated capital cost needs at least one point"));
                }
                if points.windows(2).any(|w| w[1].0 <= w[0].0 || w[1].1 < w[0].1) {
                    return Err(invalid(
                        "tabulated capital cost needs increasing capacities and non-decreasing costs",
                    ));
                }
            }
        }
        Ok(Self { form, lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn form(&self) -> &CapitalForm {
        &self.form
    }

    pub fn cost(&self, e: f64) -> f64 {
        match &self.form {
            CapitalForm::Affine { q0, q1 } => q0 + q1 * e,
            CapitalForm::Tabulated { points } => {
                let k = points.partition_point(|p| p.0 <= e);
                if k == 0 {
                    points[0].1
                } else if k == points.len() {
                    points[k - 1].1
                } else {
                    let (a, b) = (points[k - 1], points[k]);
                    a.1 + (e - a.0) / (b.0 - a.0) * (b.1 - a.1)
                }
            }
        }
    }

    pub fn slope(&self, e: f64) -> f64 {
        match &self.form {
            CapitalForm::Affine { q1, .. } => *q1,
            CapitalForm::Tabulated { points } => {
                let k = points.partition_point(|p| p.0 <= e);
                if k == 0 || k == points.len() {
                    0.0
                } else {
                    (points[k].1 - points[k - 1].1) / (points[k].0 - points[k - 1].0)
                }
            }
        }
    }

    /// Weighted capital cost `λ Q(E)`.
    pub fn weighted(&self, e: f64) -> f64 {
        self.lambda * self.cost(e)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanningRow {
    pub capacity_kwh: f64,
    /// Value function averaged uniformly over initial SoC.
    pub op_cost: f64,
    /// Value function averaged under the stationary law of the optimal band.
    pub op_cost_stationary: f64,
    pub band: Option<ThresholdPolicy>,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn plan_row(base: &CostModel, e: f64, n: usize, tol: f64, max_iter: usize) -> Result<PlanningRow> {
    let m = base.with_capacity(e)?;
    let dm = DiscreteModel::new(&m, n)?;
    let vi = value_iteration(&dm, tol, max_iter)?;
    let band = solve_thresholds_by_roots(&m, &vi.value)?;
    let p = dm.transition_matrix(&band)?;
    let w = stationary_distribution(&p)?;
    let stationary = w.iter().zip(vi.value.values()).map(|(a, b)| a * b).sum();
    Ok(PlanningRow {
        capacity_kwh: e,
        op_cost: vi.value.mean(),
        op_cost_stationary: stationary,
        band: Some(band),
        iterations: vi.iterations,
        error: None,
    })
}

/// Solves the DP at every capacity. Failed capacities keep a row carrying
/// the error message and NaN costs.
///
/// `rel_tol` is relative to the cost scale of `base`, so every capacity is
/// solved to the same absolute accuracy.
pub fn expected_cost_vs_capacity(
    base: &CostModel,
    capacities: &[f64],
    n: usize,
    rel_tol: f64,
    max_iter: usize,
) -> Result<Vec<PlanningRow>> {
    if capacities.len() < 3 {
        return Err(invalid("capacity sweep needs at least three capacities"));
    }
    if capacities.windows(2).any(|w| w[1] <= w[0]) || capacities[0] <= 0.0 {
        return Err(invalid("capacities must be positive and strictly increasing"));
    }
    let tol = rel_tol * base.cost_scale();
    Ok(capacities
        .par_iter()
        .map(|&e| {
            plan_row(base, e, n, tol, max_iter).unwrap_or_else(|err| PlanningRow {
                capacity_kwh: e,
                op_cost: f64::NAN,
                op_cost_stationary: f64::NAN,
                band: None,
                iterations: 0,
                error: Some(err.to_string()),
            })
        })
        .collect())
}

/// Whether each interior point lies on or below the chord of its neighbours,
/// up to `SHAPE_TOL · max|y|`.
pub fn is_discretely_convex(x: &[f64], y: &[f64]) -> bool {
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (1..x.len().saturating_sub(1)).all(|k| {
        let t = (x[k] - x[k - 1]) / (x[k + 1] - x[k - 1]);
        let chord = (1.0 - t) * y[k - 1] + t * y[k + 1];
        y[k] <= chord + SHAPE_TOL * scale
    })
}

pub fn is_non_increasing(y: &[f64]) -> bool {
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    y.windows(2).all(|w| w[1] <= w[0] + SHAPE_TOL * scale)
}

/// Quadratic `a x² + b x + c` through three points.
fn quadratic(x: [f64; 3], y: [f64; 3]) -> (f64, f64, f64) {
    let d01 = (y[1] - y[0]) / (x[1] - x[0]);
    let d12 = (y[2] - y[1]) / (x[2] - x[1]);
    let a = (d12 - d01) / (x[2] - x[0]);
    let b = d01 - a * (x[0] + x[1]);
    let c = y[0] - a * x[0] * x[0] - b * x[0];
    (a, b, c)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityChoice {
    pub capacity_kwh: f64,
    pub grid_index: usize,
    pub total_cost: f64,
    /// `λ Q'(E*) + d op/dE (E*)`, zero at an interior balance point.
    pub marginal_residual: f64,
    pub refined: bool,
    /// The operating-cost column was not convex; the plain grid argmin is returned.
    pub nonconvex_warning: bool,
}

/// Minimizes `λQ(E) + op(E)` over the rows, refining once by a quadratic
/// through the best grid point and its neighbours.
pub fn optimal_capacity(rows: &[PlanningRow], capital: &CapitalCostModel) -> Result<CapacityChoice> {
    let rows: Vec<&PlanningRow> = rows.iter().filter(|r| r.op_cost.is_finite()).collect();
    if rows.len() < 3 {
        return Err(invalid("need at least three solved rows to choose a capacity"));
    }
    let x: Vec<f64> = rows.iter().map(|r| r.capacity_kwh).collect();
    let op: Vec<f64> = rows.iter().map(|r| r.op_cost).collect();
    let total: Vec<f64> = x.iter().zip(&op).map(|(&e, &o)| capital.weighted(e) + o).collect();
    // ties go to the larger capacity
    let k = (0..x.len())
        .rev()
        .min_by(|&a, &b| total[a].total_cmp(&total[b]))
        .expect("non-empty rows");
    let convex = is_discretely_convex(&x, &op);
    let local_op_slope = |j: usize, e: f64| {
        let j = j.clamp(1, x.len() - 2);
        let (a, b, _) = quadratic([x[j - 1], x[j], x[j + 1]], [op[j - 1], op[j], op[j + 1]]);
        2.0 * a * e + b
    };
    let mut choice = CapacityChoice {
        capacity_kwh: x[k],
        grid_index: k,
        total_cost: total[k],
        marginal_residual: capital.lambda * capital.slope(x[k]) + local_op_slope(k, x[k]),
        refined: false,
        nonconvex_warning: !convex,
    };
    if !convex || k == 0 || k + 1 == x.len() {
        return Ok(choice);
    }
    let xs = [x[k - 1], x[k], x[k + 1]];
    let (a, b, c) = quadratic(xs, [total[k - 1], total[k], total[k + 1]]);
    if a > 0.0 {
        let vertex = -b / (2.0 * a);
        if vertex > xs[0] && vertex < xs[2] {
            choice.capacity_kwh = vertex;
            choice.total_cost = a * vertex * vertex + b * vertex + c;
            choice.marginal_residual = capital.lambda * capital.slope(vertex) + local_op_slope(k, vertex);
            choice.refined = true;
        }
    }
    Ok(choice)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlanningResult {
    pub rows: Vec<PlanningRow>,
    pub capital: CapitalCostModel,
    pub op_non_increasing: bool,
    pub op_convex: bool,
    pub choice: CapacityChoice,
}

impl PlanningResult {
    pub fn new(rows: Vec<PlanningRow>, capital: CapitalCostModel) -> Result<Self> {
        let x: Vec<f64> = rows.iter().map(|r| r.capacity_kwh).collect();
        let op: Vec<f64> = rows.iter().map(|r| r.op_cost).collect();
        let choice = optimal_capacity(&rows, &capital)?;
        Ok(Self {
            op_non_increasing: is_non_increasing(&op),
            op_convex: is_discretely_convex(&x, &op),
            rows,
            capital,
            choice,
        })
    }

    /// CSV: `capacity_kwh, op_cost, capital_cost, total_cost, op_cost_stationary, pi_low, pi_high`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "capacity_kwh",
            "op_cost",
            "capital_cost",
            "total_cost",
            "op_cost_stationary",
            "pi_low",
            "pi_high",
        ])?;
        for r in &self.rows {
            let cap = self.capital.weighted(r.capacity_kwh);
            let (lo, hi) = r
                .band
                .map(|b| (b.pi_low().to_string(), b.pi_high().to_string()))
                .unwrap_or_default();
            out.write_record([
                r.capacity_kwh.to_string(),
                r.op_cost.to_string(),
                cap.to_string(),
                (cap + r.op_cost).to_string(),
                r.op_cost_stationary.to_string(),
                lo,
                hi,
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

use serde::{Deserialize, Serialize};

use super::grid::SocGrid;
use crate::error::{invalid, Result};

/// Discounted cost-to-go sampled on a uniform SoC grid, interpolated linearly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    values: Vec<f64>,
}

impl ValueFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        SocGrid::new(values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("value function contains non-finite entries"));
        }
        Ok(Self { values })
    }

    pub fn zeros(grid: SocGrid) -> Self {
        Self {
            values: vec![0.0; grid.len()],
        }
    }

    pub fn grid(&self) -> SocGrid {
        SocGrid::new(self.values.len()).expect("length checked on construction")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, s: f64) -> f64 {
        let (k, t) = self.grid().locate(s);
        (1.0 - t) * self.values[k] + t * self.values[k + 1]
    }

    /// Central-difference slope at each node, one-sided at the ends.
    pub fn node_slopes(&self) -> Vec<f64> {
        let n = self.values.len();
        let d = self.grid().step();
        let v = &self.values;
        (0..n)
            .map(|k| {
                if k == 0 {
                    (v[1] - v[0]) / d
                } else if k + 1 == n {
                    (v[n - 1] - v[n - 2]) / d
                } else {
                    (v[k + 1] - v[k - 1]) / (2.0 * d)
                }
            })
            .collect()
    }

    /// Second differences `H[k-1] - 2H[k] + H[k+1]` at interior nodes.
    pub fn second_differences(&self) -> Vec<f64> {
        self.values
            .windows(3)
            .map(|w| w[0] - 2.0 * w[1] + w[2])
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Linearly interpolated node slopes, i.e. the derivative estimate between nodes.
pub(crate) struct SlopeInterpolant {
    grid: SocGrid,
    slopes: Vec<f64>,
}

impl SlopeInterpolant {
    pub(crate) fn new(h: &ValueFunction) -> Self {
        Self {
            grid: h.grid(),
            slopes: h.node_slopes(),
        }
    }

    pub(crate) fn at(&self, s: f64) -> f64 {
        let (k, t) = self.grid.locate(s);
        (1.0 - t) * self.slopes[k] + t * self.slopes[k + 1]
    }
}

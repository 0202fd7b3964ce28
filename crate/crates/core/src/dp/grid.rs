use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// `n` uniformly spaced SoC points on `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SocGrid {
    n: usize,
}

impl SocGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(invalid(format!("SoC grid needs at least 3 points, got {n}")));
        }
        Ok(Self { n })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        1.0 / (self.n - 1) as f64
    }

    pub fn point(&self, k: usize) -> f64 {
        if k + 1 == self.n {
            1.0
        } else {
            k as f64 * self.step()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.point(k)).collect()
    }

    /// Cell `k` and fraction `t` such that `x = (1 - t)·point(k) + t·point(k + 1)`.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let x = x.clamp(0.0, 1.0);
        let pos = x * (self.n - 1) as f64;
        let k = (pos.floor() as usize).min(self.n - 2);
        (k, (pos - k as f64).clamp(0.0, 1.0))
    }

    /// Nearest grid index.
    pub fn nearest(&self, x: f64) -> usize {
        ((x.clamp(0.0, 1.0) * (self.n - 1) as f64).round() as usize).min(self.n - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn locate_and_points() {
        let g = SocGrid::new(11).unwrap();
        assert_eq!(g.point(10), 1.0);
        assert!((g.step() - 0.1).abs() < 1e-15);
        let (k, t) = g.locate(0.35);
        assert_eq!(k, 3);
        assert!((t - 0.5).abs() < 1e-12);
        assert_eq!(g.locate(1.0), (9, 1.0));
        assert_eq!(g.nearest(0.349), 3);
        assert!(SocGrid::new(2).is_err());
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// State-invariant idle band: charge up to `pi_low` from below, discharge down
/// to `pi_high` from above, stay put in between.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BandDoc", into = "BandDoc")]
pub struct ThresholdPolicy {
    pi_low: f64,
    pi_high: f64,
}

#[derive(Serialize, Deserialize)]
struct BandDoc {
    pi_low: f64,
    pi_high: f64,
}

impl TryFrom<BandDoc> for ThresholdPolicy {
    type Error = crate::Error;
    fn try_from(d: BandDoc) -> Result<Self> {
        Self::new(d.pi_low, d.pi_high)
    }
}

impl From<ThresholdPolicy> for BandDoc {
    fn from(p: ThresholdPolicy) -> Self {
        BandDoc {
            pi_low: p.pi_low,
            pi_high: p.pi_high,
        }
    }
}

impl ThresholdPolicy {
    pub fn new(pi_low: f64, pi_high: f64) -> Result<Self> {
        if !(0.0 <= pi_low && pi_low <= pi_high && pi_high <= 1.0) {
            return Err(invalid(format!(
                "band must satisfy 0 <= low <= high <= 1, got ({pi_low}, {pi_high})"
            )));
        }
        Ok(Self { pi_low, pi_high })
    }

    pub fn pi_low(&self) -> f64 {
        self.pi_low
    }

    pub fn pi_high(&self) -> f64 {
        self.pi_high
    }

    pub fn width(&self) -> f64 {
        self.pi_high - self.pi_low
    }

    /// Target SoC from state `s`.
    pub fn target(&self, s: f64) -> f64 {
        s.clamp(self.pi_low, self.pi_high)
    }
}

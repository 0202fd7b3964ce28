//! Battery physics and single-event costs.
//!
//! Units: energy in kWh, power in kW, time in hours.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BatteryDoc", into = "BatteryDoc")]
pub struct BatteryParams {
    e_max: f64,
    p_max: f64,
    eta: f64,
}

#[derive(Serialize, Deserialize)]
struct BatteryDoc {
    e_max_kwh: f64,
    p_max_kw: f64,
    eta: f64,
}

impl TryFrom<BatteryDoc> for BatteryParams {
    type Error = crate::Error;
    fn try_from(d: BatteryDoc) -> Result<Self> {
        Self::new(d.e_max_kwh, d.p_max_kw, d.eta)
    }
}

impl From<BatteryParams> for BatteryDoc {
    fn from(b: BatteryParams) -> Self {
        BatteryDoc {
            e_max_kwh: b.e_max,
            p_max_kw: b.p_max,
            eta: b.eta,
        }
    }
}

impl BatteryParams {
    pub fn new(e_max: f64, p_max: f64, eta: f64) -> Result<Self> {
        if !(e_max.is_finite() && e_max > 0.0) {
            return Err(invalid(format!("e_max must be > 0, got {e_max}")));
        }
        if !(p_max.is_finite() && p_max > 0.0) {
            return Err(invalid(format!("p_max must be > 0, got {p_max}")));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(invalid(format!("eta must lie in (0, 1], got {eta}")));
        }
        Ok(Self { e_max, p_max, eta })
    }

    pub fn e_max(&self) -> f64 {
        self.e_max
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn with_capacity(&self, e_max: f64) -> Result<Self> {
        Self::new(e_max, self.p_max, self.eta)
    }

    /// Energy that can still be absorbed from the bus at SoC `s`.
    pub fn headroom(&self, s: f64) -> f64 {
        self.e_max * (1.0 - s) / self.eta
    }

    /// Energy that can still be delivered to the bus at SoC `s`.
    pub fn deliverable(&self, s: f64) -> f64 {
        self.eta * self.e_max * s
    }
}

/// State of charge in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Soc(f64);

impl Soc {
    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(invalid(format!("state of charge must lie in [0, 1], got {value}")));
        }
        Ok(Self(value))
    }

    pub fn clamped(value: f64) -> Self {
        Self(if value.is_nan() { 0.0 } else { value.clamp(0.0, 1.0) })
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Soc {
    type Error = crate::Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Soc> for f64 {
    fn from(s: Soc) -> f64 {
        s.0
    }
}

/// Sign of a frequency excursion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExcursionSign {
    /// Frequency above the band (`q = +1`): the battery absorbs energy.
    Over,
    /// Frequency below the band (`q = -1`): the battery delivers energy.
    Under,
}

impl ExcursionSign {
    pub fn as_i8(self) -> i8 {
        match self {
            Self::Over => 1,
            Self::Under => -1,
        }
    }

    pub fn from_i8(q: i8) -> Option<Self> {
        match q {
            1 => Some(Self::Over),
            -1 => Some(Self::Under),
            _ => None,
        }
    }
}

/// Power seen on the AC bus for battery-side power `p` (positive = charging).
pub fn ac_power(p: f64, eta: f64) -> f64 {
    if p > 0.0 {
        p / eta
    } else if p < 0.0 {
        p * eta
    } else {
        0.0
    }
}

/// Requested energy that the battery cannot serve from SoC `s_end`.
pub fn shortage(s_end: Soc, q: ExcursionSign, e_pfc: f64, b: &BatteryParams) -> f64 {
    let available = match q {
        ExcursionSign::Over => b.headroom(s_end.value()),
        ExcursionSign::Under => b.deliverable(s_end.value()),
    };
    (e_pfc - available).max(0.0)
}

pub fn penalty_cost(s_end: Soc, q: ExcursionSign, e_pfc: f64, b: &BatteryParams, c_p: f64) -> f64 {
    c_p * shortage(s_end, q, e_pfc, b)
}

/// SoC after recharging at full rate toward `pi` for `i_len` hours.
pub fn end_of_interval_soc(s: Soc, pi: Soc, i_len: f64, b: &BatteryParams) -> Soc {
    let (s, pi) = (s.value(), pi.value());
    let reach = b.p_max * i_len.max(0.0) / b.e_max;
    let step = reach.min((pi - s).abs());
    Soc::clamped(if pi > s { s + step } else { s - step })
}

/// Bus-side energy cost of moving from `s` toward `pi` over `i_len` hours.
/// Positive is a purchase, negative a sale.
pub fn charging_cost(s: Soc, pi: Soc, i_len: f64, b: &BatteryParams, c_e: f64) -> f64 {
    let (s, pi) = (s.value(), pi.value());
    let moved = (b.p_max * i_len.max(0.0)).min((pi - s).abs() * b.e_max);
    if pi > s {
        c_e / b.eta * moved
    } else if pi < s {
        -c_e * b.eta * moved
    } else {
        0.0
    }
}

/// SoC at the start of the next stage after serving an excursion of `e_pfc` kWh.
pub fn post_event_soc(s_end: Soc, q: ExcursionSign, e_pfc: f64, b: &BatteryParams) -> Soc {
    let delta = match q {
        ExcursionSign::Over => b.eta * e_pfc / b.e_max,
        ExcursionSign::Under => -e_pfc / (b.eta * b.e_max),
    };
    Soc::clamped(s_end.value() + delta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b() -> BatteryParams {
        BatteryParams::new(100.0, 1000.0, 0.8).unwrap()
    }

    fn soc(v: f64) -> Soc {
        Soc::new(v).unwrap()
    }

    #[test]
    fn ac_power_cases() {
        assert!((ac_power(8.0, 0.8) - 10.0).abs() < 1e-12);
        assert!((ac_power(-10.0, 0.8) + 8.0).abs() < 1e-12);
        assert_eq!(ac_power(5.0, 1.0), 5.0);
        assert_eq!(ac_power(0.0, 0.8), 0.0);
    }

    #[test]
    fn penalty_cases() {
        assert_eq!(penalty_cost(soc(0.5), ExcursionSign::Under, 10.0, &b(), 10.0), 0.0);
        let p = penalty_cost(soc(0.004), ExcursionSign::Under, 0.5, &b(), 10.0);
        assert!((p - 1.8).abs() < 1e-12);
        let p = penalty_cost(soc(0.99), ExcursionSign::Over, 2.0, &b(), 10.0);
        assert!((p - 7.5).abs() < 1e-10);
    }

    #[test]
    fn end_of_interval_cases() {
        // P_max·I/E_max = 0.1 → I = 0.01 h
        let r = end_of_interval_soc(soc(0.2), soc(0.5), 0.01, &b());
        assert!((r.value() - 0.3).abs() < 1e-12);
        let r = end_of_interval_soc(soc(0.2), soc(0.5), 0.09, &b());
        assert_eq!(r.value(), 0.5);
        assert_eq!(end_of_interval_soc(soc(0.7), soc(0.7), 3.0, &b()).value(), 0.7);
    }

    #[test]
    fn charging_cost_cases() {
        assert!((charging_cost(soc(0.2), soc(0.5), 1.0, &b(), 0.1) - 3.75).abs() < 1e-12);
        assert!((charging_cost(soc(0.9), soc(0.5), 1.0, &b(), 0.1) + 3.2).abs() < 1e-12);
        assert_eq!(charging_cost(soc(0.4), soc(0.4), 1.0, &b(), 0.1), 0.0);
    }

    #[test]
    fn post_event_cases() {
        let r = post_event_soc(soc(0.5), ExcursionSign::Over, 25.0, &b());
        assert!((r.value() - 0.7).abs() < 1e-12);
        let r = post_event_soc(soc(0.5), ExcursionSign::Under, 25.0, &b());
        assert!((r.value() - 0.1875).abs() < 1e-12);
        assert_eq!(post_event_soc(soc(0.1), ExcursionSign::Under, 200.0, &b()).value(), 0.0);
    }

    #[test]
    fn parameter_validation() {
        assert!(BatteryParams::new(0.0, 1.0, 0.5).is_err());
        assert!(BatteryParams::new(1.0, -1.0, 0.5).is_err());
        assert!(BatteryParams::new(1.0, 1.0, 1.5).is_err());
        assert!(BatteryParams::new(1.0, 1.0, 0.0).is_err());
        assert!(Soc::new(1.1).is_err());
    }
}

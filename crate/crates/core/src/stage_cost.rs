//! Expected one-stage cost `h(s, π)` and its one-sided marginals.

use serde::{Deserialize, Serialize};

use crate::battery::{BatteryParams, Soc};
use crate::error::{invalid, Result};
use crate::model::StochasticModel;
use crate::quadrature::TOLERANCE_FLOOR;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MarketDoc", into = "MarketDoc")]
pub struct MarketParams {
    c_e: f64,
    c_p: f64,
    alpha: f64,
    reserve_kw: f64,
}

#[derive(Serialize, Deserialize)]
struct MarketDoc {
    c_e: f64,
    c_p: f64,
    alpha: f64,
    reserve_kw: f64,
}

impl TryFrom<MarketDoc> for MarketParams {
    type Error = crate::Error;
    fn try_from(d: MarketDoc) -> Result<Self> {
        Self::new(d.c_e, d.c_p, d.alpha, d.reserve_kw)
    }
}

impl From<MarketParams> for MarketDoc {
    fn from(m: MarketParams) -> Self {
        MarketDoc {
            c_e: m.c_e,
            c_p: m.c_p,
            alpha: m.alpha,
            reserve_kw: m.reserve_kw,
        }
    }
}

impl MarketParams {
    /// `c_e` and `c_p` in $/kWh, discount `alpha` per stage, reserve in kW.
    pub fn new(c_e: f64, c_p: f64, alpha: f64, reserve_kw: f64) -> Result<Self> {
        if !(c_e.is_finite() && c_e >= 0.0) {
            return Err(invalid(format!("c_e must be >= 0, got {c_e}")));
        }
        if !(c_p.is_finite() && c_p >= 0.0) {
            return Err(invalid(format!("c_p must be >= 0, got {c_p}")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if !(reserve_kw.is_finite() && reserve_kw >= 0.0) {
            return Err(invalid(format!("reserve must be >= 0, got {reserve_kw}")));
        }
        Ok(Self {
            c_e,
            c_p,
            alpha,
            reserve_kw,
        })
    }

    pub fn c_e(&self) -> f64 {
        self.c_e
    }

    pub fn c_p(&self) -> f64 {
        self.c_p
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn reserve_kw(&self) -> f64 {
        self.reserve_kw
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub battery: BatteryParams,
    pub market: MarketParams,
    pub model: StochasticModel,
}

impl CostModel {
    pub fn new(battery: BatteryParams, market: MarketParams, model: StochasticModel) -> Self {
        Self {
            battery,
            market,
            model,
        }
    }

    pub fn with_capacity(&self, e_max: f64) -> Result<Self> {
        Ok(Self {
            battery: self.battery.with_capacity(e_max)?,
            ..self.clone()
        })
    }

    /// Dollar scale `(c_e + c_p) · E_max` used for tolerances; 1 when both prices are zero.
    pub fn cost_scale(&self) -> f64 {
        let s = (self.market.c_e + self.market.c_p) * self.battery.e_max();
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }

    /// Absolute tolerance for a single cost integral.
    pub fn quad_tol(&self) -> f64 {
        (1e-8 * self.cost_scale()).max(TOLERANCE_FLOOR)
    }

    /// Expected bus-side cost of recharging from `s` toward `pi` during one I interval.
    pub fn expected_charging_cost(&self, s: Soc, pi: Soc) -> f64 {
        let (s, pi) = (s.value(), pi.value());
        if s == pi {
            return 0.0;
        }
        let b = &self.battery;
        let price = if pi > s {
            self.market.c_e / b.eta()
        } else {
            -self.market.c_e * b.eta()
        };
        // ∫₀^{Q₁} P x f(x) dx + |π−s| E F̃(Q₁) = P · E[min(I, Q₁)]
        price * b.p_max() * self.model.interval.limited_mean(q1(Soc::clamped(s), Soc::clamped(pi), b))
    }

    /// Expected penalty of the coming excursion when it starts at SoC `s_end`.
    pub fn expected_penalty_at(&self, s_end: f64) -> f64 {
        let b = &self.battery;
        let e = &self.model.energy;
        let signs = &self.model.signs;
        let s = s_end.clamp(0.0, 1.0);
        let mut total = 0.0;
        if signs.p1() > 0.0 {
            total += signs.p1() * e.excess_mean(b.headroom(s));
        }
        if signs.p_minus1() > 0.0 {
            total += signs.p_minus1() * e.excess_mean(b.deliverable(s));
        }
        self.market.c_p * total
    }

    /// Derivative of [`Self::expected_penalty_at`] with respect to SoC.
    pub fn expected_penalty_slope(&self, s_end: f64) -> f64 {
        let b = &self.battery;
        let e = &self.model.energy;
        let signs = &self.model.signs;
        let s = s_end.clamp(0.0, 1.0);
        self.market.c_p
            * b.e_max()
            * (signs.p1() / b.eta() * e.ccdf(b.headroom(s))
                - signs.p_minus1() * b.eta() * e.ccdf(b.deliverable(s)))
    }

    /// Penalty expectation over both the I interval and the following excursion.
    pub fn expected_penalty(&self, s: Soc, pi: Soc) -> Result<f64> {
        let (s0, target) = (s.value(), pi.value());
        if s0 == target {
            return Ok(self.expected_penalty_at(s0));
        }
        let b = &self.battery;
        let rate = b.p_max() / b.e_max();
        let dir = if target > s0 { 1.0 } else { -1.0 };
        let cap = q1(s, pi, b);
        self.model.interval.expect_capped(
            |x| self.expected_penalty_at(s0 + dir * rate * x),
            cap,
            self.quad_tol(),
        )
    }

    pub fn one_stage_cost(&self, s: Soc, pi: Soc) -> Result<f64> {
        Ok(self.expected_charging_cost(s, pi) + self.expected_penalty(s, pi)?)
    }

    /// One-sided marginal costs `(r₁, r₂)` per kWh at target `pi`: `r₁` when
    /// the target is approached by charging, `r₂` when by discharging.
    pub fn r_marginals(&self, pi: f64) -> (f64, f64) {
        let b = &self.battery;
        let penalty = self.expected_penalty_slope(pi) / b.e_max();
        let c_e = self.market.c_e;
        (c_e / b.eta() + penalty, c_e * b.eta() + penalty)
    }
}

/// Minimum time, in hours, to move from `s` to `pi` at full power.
pub fn q1(s: Soc, pi: Soc, b: &BatteryParams) -> f64 {
    (pi.value() - s.value()).abs() * b.e_max() / b.p_max()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::ScalarDistribution;
    use crate::model::{EnergyBuildOptions, ExcursionSignModel, PfcEnergyDistribution};

    fn soc(v: f64) -> Soc {
        Soc::new(v).unwrap()
    }

    fn model_with(interval: ScalarDistribution, energy: ScalarDistribution, p1: f64) -> StochasticModel {
        let pt = ScalarDistribution::point(1.0).unwrap();
        StochasticModel::new(
            interval,
            pt.clone(),
            pt,
            ExcursionSignModel::new(p1).unwrap(),
            &EnergyBuildOptions::default(),
        )
        .unwrap()
        .with_energy(PfcEnergyDistribution::from_distribution(energy))
    }

    fn cost(c_e: f64, c_p: f64, eta: f64, e_max: f64, model: StochasticModel) -> CostModel {
        CostModel::new(
            BatteryParams::new(e_max, 1000.0, eta).unwrap(),
            MarketParams::new(c_e, c_p, 0.9, 1000.0).unwrap(),
            model,
        )
    }

    #[test]
    fn q1_cases() {
        let b = BatteryParams::new(100.0, 1000.0, 0.8).unwrap();
        assert_eq!(q1(soc(0.3), soc(0.3), &b), 0.0);
        assert!((q1(soc(0.2), soc(0.7), &b) - 0.05).abs() < 1e-15);
        let b = BatteryParams::new(1000.0, 1000.0, 0.8).unwrap();
        assert_eq!(q1(soc(0.0), soc(1.0), &b), 1.0);
    }

    #[test]
    fn charging_cost_exponential_closed_form() {
        let lambda = 20.0;
        let m = cost(
            0.1,
            10.0,
            0.8,
            100.0,
            model_with(
                ScalarDistribution::exponential(lambda).unwrap(),
                ScalarDistribution::point(5.0).unwrap(),
                0.5,
            ),
        );
        let (s, pi) = (soc(0.2), soc(0.6));
        let q = 0.4 * 100.0 / 1000.0;
        let expected = 0.1 / 0.8 * 1000.0 / lambda * (1.0 - (-lambda * q).exp());
        assert!((m.expected_charging_cost(s, pi) - expected).abs() < 1e-12);
        assert_eq!(m.expected_charging_cost(pi, pi), 0.0);
        assert!(m.expected_charging_cost(pi, s) < 0.0);
    }

    #[test]
    fn charging_cost_point_interval() {
        let m = cost(
            0.1,
            10.0,
            0.8,
            100.0,
            model_with(
                ScalarDistribution::point(1.0).unwrap(),
                ScalarDistribution::point(5.0).unwrap(),
                0.5,
            ),
        );
        let v = m.expected_charging_cost(soc(0.2), soc(0.5));
        assert!((v - 0.1 / 0.8 * 30.0).abs() < 1e-12);
    }

    #[test]
    fn penalty_at_vanishes_inside_reach() {
        let m = cost(
            0.1,
            10.0,
            0.8,
            100.0,
            model_with(
                ScalarDistribution::point(1.0).unwrap(),
                ScalarDistribution::point(5.0).unwrap(),
                0.5,
            ),
        );
        assert_eq!(m.expected_penalty_at(0.5), 0.0);
    }

    #[test]
    fn penalty_at_point_mass_reduces_to_event_penalty() {
        let m = cost(
            0.1,
            10.0,
            0.8,
            100.0,
            model_with(
                ScalarDistribution::point(1.0).unwrap(),
                ScalarDistribution::point(0.5).unwrap(),
                0.0,
            ),
        );
        assert!((m.expected_penalty_at(0.004) - 1.8).abs() < 1e-12);
    }

    #[test]
    fn penalty_at_uniform_tail() {
        let u = 40.0;
        let m = cost(
            0.0,
            10.0,
            1.0,
            u,
            model_with(
                ScalarDistribution::point(1.0).unwrap(),
                ScalarDistribution::uniform(0.0, u).unwrap(),
                0.5,
            ),
        );
        // brute-force E[(X - U/2)⁺] by a midpoint sum
        let n = 200_000;
        let tail: f64 = (0..n)
            .map(|k| ((k as f64 + 0.5) / n as f64 * u - u / 2.0).max(0.0))
            .sum::<f64>()
            / n as f64;
        let oracle = 10.0 * (0.5 * tail + 0.5 * tail);
        assert!((m.expected_penalty_at(0.5) - oracle).abs() < 1e-6);
        assert!((m.expected_penalty_at(0.5) - 10.0 * u / 8.0).abs() < 1e-9);
    }

    #[test]
    fn expected_penalty_limits() {
        let m = cost(
            0.1,
            10.0,
            0.8,
            100.0,
            model_with(
                ScalarDistribution::point(1.0).unwrap(),
                ScalarDistribution::uniform(0.0, 60.0).unwrap(),
                0.5,
            ),
        );
        let at = m.expected_penalty_at(0.3);
        assert_eq!(m.expected_penalty(soc(0.3), soc(0.3)).unwrap(), at);
        // a 1 h interval always reaches the target
        let v = m.expected_penalty(soc(0.9), soc(0.3)).unwrap();
        assert!((v - at).abs() < 1e-9);
    }

    #[test]
    fn zero_prices_zero_cost() {
        let m = cost(
            0.0,
            0.0,
            0.8,
            100.0,
            model_with(
                ScalarDistribution::exponential(20.0).unwrap(),
                ScalarDistribution::uniform(0.0, 60.0).unwrap(),
                0.5,
            ),
        );
        for &(s, p) in &[(0.0, 1.0), (0.4, 0.1), (0.5, 0.5)] {
            assert_eq!(m.one_stage_cost(soc(s), soc(p)).unwrap(), 0.0);
        }
    }

    #[test]
    fn marginals() {
        let e = ScalarDistribution::uniform(0.0, 60.0).unwrap();
        let iv = ScalarDistribution::exponential(20.0).unwrap();
        let m = cost(0.1, 10.0, 1.0, 100.0, model_with(iv.clone(), e.clone(), 0.3));
        for &pi in &[0.0, 0.2, 0.7, 1.0] {
            let (r1, r2) = m.r_marginals(pi);
            assert!((r1 - r2).abs() < 1e-15);
        }
        let m = cost(0.0, 10.0, 1.0, 100.0, model_with(iv.clone(), e.clone(), 0.5));
        let (r1, r2) = m.r_marginals(0.5);
        assert!(r1.abs() < 1e-12 && r2.abs() < 1e-12);
        let m = cost(0.1, 10.0, 0.8, 100.0, model_with(iv, e, 0.5));
        for &pi in &[0.0, 0.3, 0.9] {
            let (r1, r2) = m.r_marginals(pi);
            assert!((r1 - r2 - (1.0 / 0.8 - 0.8) * 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn penalty_slope_matches_finite_difference() {
        let m = cost(
            0.1,
            10.0,
            0.8,
            100.0,
            model_with(
                ScalarDistribution::point(1.0).unwrap(),
                ScalarDistribution::exponential(0.1).unwrap(),
                0.4,
            ),
        );
        for &s in &[0.1, 0.45, 0.8] {
            let h = 1e-6;
            let fd = (m.expected_penalty_at(s + h) - m.expected_penalty_at(s - h)) / (2.0 * h);
            assert!((fd - m.expected_penalty_slope(s)).abs() < 1e-5 * fd.abs().max(1.0));
        }
    }
}

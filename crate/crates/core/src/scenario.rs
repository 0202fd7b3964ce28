//! Reference market and battery setting used by examples and tests.
//!
//! 100 kWh / 1 MW battery with 80 % efficiency, energy at $0.1/kWh, shortage
//! penalty $10/kWh, per-stage discount 0.9, 1 MW reserve. PFC power is uniform
//! on [500, 1000] kW, excursions last 1 minute and quiet intervals 3 minutes
//! on average (both exponential), and over/under excursions are equally likely.

use crate::battery::BatteryParams;
use crate::distribution::ScalarDistribution;
use crate::error::Result;
use crate::model::{EnergyBuildOptions, ExcursionSignModel, StochasticModel};
use crate::stage_cost::{CostModel, MarketParams};

pub const E_MAX_KWH: f64 = 100.0;
pub const P_MAX_KW: f64 = 1000.0;
pub const ETA: f64 = 0.8;
pub const C_E: f64 = 0.1;
pub const C_P: f64 = 10.0;
pub const ALPHA: f64 = 0.9;
pub const RESERVE_KW: f64 = 1000.0;
pub const MEAN_I_H: f64 = 0.05;
pub const MEAN_J_H: f64 = 1.0 / 60.0;
pub const P1: f64 = 0.5;
pub const HEURISTIC_BAND: (f64, f64) = (0.73, 0.92);

pub fn battery() -> BatteryParams {
    BatteryParams::new(E_MAX_KWH, P_MAX_KW, ETA).expect("reference battery is valid")
}

pub fn market() -> MarketParams {
    MarketParams::new(C_E, C_P, ALPHA, RESERVE_KW).expect("reference market is valid")
}

pub fn stochastic_model(opts: &EnergyBuildOptions) -> Result<StochasticModel> {
    StochasticModel::new(
        ScalarDistribution::exponential_mean(MEAN_I_H)?.with_units("h"),
        ScalarDistribution::exponential_mean(MEAN_J_H)?.with_units("h"),
        ScalarDistribution::uniform(0.5 * RESERVE_KW, RESERVE_KW)?.with_units("kW"),
        ExcursionSignModel::new(P1)?,
        opts,
    )
}

pub fn cost_model(opts: &EnergyBuildOptions) -> Result<CostModel> {
    Ok(CostModel::new(battery(), market(), stochastic_model(opts)?))
}

#![allow(dead_code)]

use bess_pfc::model::EnergyBuildOptions;
use bess_pfc::scenario;
use bess_pfc::{BatteryParams, CostModel, MarketParams};

pub fn base() -> CostModel {
    scenario::cost_model(&EnergyBuildOptions::default()).unwrap()
}

pub fn with_prices(m: &CostModel, c_e: f64, c_p: f64) -> CostModel {
    let k = &m.market;
    CostModel::new(
        m.battery,
        MarketParams::new(c_e, c_p, k.alpha(), k.reserve_kw()).unwrap(),
        m.model.clone(),
    )
}

pub fn with_eta(m: &CostModel, eta: f64) -> CostModel {
    let b = &m.battery;
    CostModel::new(
        BatteryParams::new(b.e_max(), b.p_max(), eta).unwrap(),
        m.market,
        m.model.clone(),
    )
}

pub fn with_alpha(m: &CostModel, alpha: f64) -> CostModel {
    let k = &m.market;
    CostModel::new(
        m.battery,
        MarketParams::new(k.c_e(), k.c_p(), alpha, k.reserve_kw()).unwrap(),
        m.model.clone(),
    )
}

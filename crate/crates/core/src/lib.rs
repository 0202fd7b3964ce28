//! Threshold control and capacity planning for a battery selling primary
//! frequency control.
//!
//! The battery alternates between quiet intervals, where it may recharge
//! toward a target state of charge, and frequency excursions, where it must
//! absorb or deliver the requested energy or pay a shortage penalty. The
//! discounted cost-to-go is solved by dynamic programming on a SoC grid,
//! and the optimal control collapses to a state-invariant idle band.

pub mod battery;
pub mod cli;
pub mod distribution;
pub mod dp;
pub mod error;
pub mod model;
pub mod planner;
pub mod quadrature;
pub mod scenario;
pub mod simulate;
pub mod stage_cost;
pub mod trace;

pub use battery::{BatteryParams, ExcursionSign, Soc};
pub use distribution::{CdfPoint, ScalarDistribution};
pub use error::{Error, Result};
pub use model::{
    build_energy_distribution, EnergyBuildOptions, ExcursionSignModel, PfcEnergyDistribution,
    StochasticModel,
};
pub use stage_cost::{CostModel, MarketParams};

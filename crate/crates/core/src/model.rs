//! The exogenous event process: interval lengths, excursion signs and the
//! compound PFC energy `E = P_PFC · J`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::{CdfPoint, ScalarDistribution, DEFAULT_TRUNCATION};
use crate::error::{invalid, Result};

/// Probability split between over-excursions (`q = +1`, the battery absorbs)
/// and under-excursions (`q = -1`, the battery delivers).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SignDoc", into = "SignDoc")]
pub struct ExcursionSignModel {
    p1: f64,
}

#[derive(Serialize, Deserialize)]
struct SignDoc {
    p1: f64,
}

impl TryFrom<SignDoc> for ExcursionSignModel {
    type Error = crate::Error;
    fn try_from(d: SignDoc) -> Result<Self> {
        Self::new(d.p1)
    }
}

impl From<ExcursionSignModel> for SignDoc {
    fn from(m: ExcursionSignModel) -> Self {
        SignDoc { p1: m.p1 }
    }
}

impl ExcursionSignModel {
    pub fn new(p1: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p1) {
            return Err(invalid(format!("p1 must lie in [0, 1], got {p1}")));
        }
        Ok(Self { p1 })
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }

    pub fn p_minus1(&self) -> f64 {
        1.0 - self.p1
    }
}

/// Distribution of the energy requested in one excursion, in kWh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PfcEnergyDistribution(ScalarDistribution);

impl PfcEnergyDistribution {
    /// Wraps an energy law given directly (tests, fitted models).
    pub fn from_distribution(d: ScalarDistribution) -> Self {
        Self(d.with_units("kWh"))
    }

    pub fn dist(&self) -> &ScalarDistribution {
        &self.0
    }
}

impl std::ops::Deref for PfcEnergyDistribution {
    type Target = ScalarDistribution;
    fn deref(&self) -> &ScalarDistribution {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyBuildOptions {
    pub grid_size: usize,
    /// Quantile at which unbounded factors are cut; `None` rejects them.
    pub truncation: Option<f64>,
}

impl Default for EnergyBuildOptions {
    fn default() -> Self {
        Self {
            grid_size: 512,
            truncation: Some(DEFAULT_TRUNCATION),
        }
    }
}

/// Absolute tolerance on each tabulated CDF value.
const CDF_TOL: f64 = 1e-12;

/// Law of `P_PFC · J` for independent factors, `P_PFC` in kW and `J` in hours.
///
/// Products involving a point mass and a bounded factor are built exactly.
/// Otherwise the CDF is tabulated on `grid_size` uniform points by
/// conditioning on one factor, `F(e) = E[F_other(e / X)]`, preferring a
/// factor with bounded support as the one integrated out.
pub fn build_energy_distribution(
    p_pfc: &ScalarDistribution,
    j: &ScalarDistribution,
    opts: &EnergyBuildOptions,
) -> Result<PfcEnergyDistribution> {
    if opts.grid_size < 2 {
        return Err(invalid("energy grid needs at least two points"));
    }
    let p_hi = p_pfc.bounded_upper(opts.truncation)?;
    let j_hi = j.bounded_upper(opts.truncation)?;

    match (p_pfc.is_point(), j.is_point()) {
        (Some(p), Some(t)) => {
            return Ok(PfcEnergyDistribution::from_distribution(ScalarDistribution::point(p * t)?))
        }
        (Some(p), None) if p > 0.0 && j.upper().is_finite() => {
            return Ok(PfcEnergyDistribution::from_distribution(j.scaled(p)?))
        }
        (None, Some(t)) if t > 0.0 && p_pfc.upper().is_finite() => {
            return Ok(PfcEnergyDistribution::from_distribution(p_pfc.scaled(t)?))
        }
        _ => {}
    }

    let upper = p_hi * j_hi;
    let lower = (p_pfc.lower() * j.lower()).min(upper);
    if !(upper > lower) {
        return Ok(PfcEnergyDistribution::from_distribution(ScalarDistribution::point(upper)?));
    }
    let (outer, inner) = if p_pfc.upper().is_finite() || !j.upper().is_finite() {
        (p_pfc, j)
    } else {
        (j, p_pfc)
    };
    let last = opts.grid_size - 1;
    let width = (upper - lower) / last as f64;
    let interior = (1..last)
        .into_par_iter()
        .map(|k| {
            let e = lower + k as f64 * width;
            outer.expect_below(|x| if x > 0.0 { inner.cdf(e / x) } else { 1.0 }, f64::INFINITY, CDF_TOL)
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut table = Vec::with_capacity(opts.grid_size);
    table.push(CdfPoint { x: lower, cdf: 0.0 });
    let mut running = 0.0_f64;
    for (k, c) in interior.into_iter().enumerate() {
        // quadrature noise must not break monotonicity
        running = running.max(c.clamp(0.0, 1.0));
        table.push(CdfPoint {
            x: lower + (k + 1) as f64 * width,
            cdf: running,
        });
    }
    table.push(CdfPoint { x: upper, cdf: 1.0 });
    Ok(PfcEnergyDistribution::from_distribution(ScalarDistribution::tabulated(&table)?))
}

/// Every distribution the cost model needs. Time in hours, power in kW.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StochasticModel {
    pub interval: ScalarDistribution,
    pub excursion: ScalarDistribution,
    pub pfc_power: ScalarDistribution,
    pub energy: PfcEnergyDistribution,
    pub signs: ExcursionSignModel,
}

impl StochasticModel {
    /// Builds the model, deriving the energy law from `pfc_power` and `excursion`.
    pub fn new(
        interval: ScalarDistribution,
        excursion: ScalarDistribution,
        pfc_power: ScalarDistribution,
        signs: ExcursionSignModel,
        opts: &EnergyBuildOptions,
    ) -> Result<Self> {
        let energy = build_energy_distribution(&pfc_power, &excursion, opts)?;
        Ok(Self {
            interval,
            excursion,
            pfc_power,
            energy,
            signs,
        })
    }

    /// Replaces the energy law, e.g. with a symmetric or point-mass test law.
    pub fn with_energy(mut self, energy: PfcEnergyDistribution) -> Self {
        self.energy = energy;
        self
    }
}

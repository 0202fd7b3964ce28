//! Scalar distributions of the exogenous frequency-control process.
//!
//! Every distribution lives on the non-negative half line (interval
//! lengths, powers and energies). Besides the usual pdf/ccdf/quantile the
//! type exposes the two functionals the cost model is built from:
//!
//! * `limited_mean(x) = E[min(X, x)] = ∫₀ˣ ccdf(t) dt`, closed form for all kinds;
//! * `expect_capped(φ, cap) = E[φ(min(X, cap))]` and
//!   `expect_below(g, cap) = E[g(X); X < cap]`, by adaptive quadrature
//!   against the density (exact for point masses).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::quadrature::adaptive_simpson;

/// Quantile at which unbounded supports are truncated by default.
pub const DEFAULT_TRUNCATION: f64 = 1.0 - 1e-6;

/// A point of a tabulated cumulative distribution function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub x: f64,
    pub cdf: f64,
}

/// Piecewise-linear CDF through strictly increasing knots, `cdf` running from
/// 0 at the first knot to 1 at the last.
#[derive(Clone, Debug, PartialEq)]
struct PiecewiseCdf {
    xs: Vec<f64>,
    cdf: Vec<f64>,
    /// `∫_{xs[0]}^{xs[k]} ccdf(t) dt`.
    ccdf_integral: Vec<f64>,
}

impl PiecewiseCdf {
    fn new(xs: Vec<f64>, mut cdf: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != cdf.len() {
            return Err(invalid("tabulated cdf needs at least two (x, cdf) points"));
        }
        if xs.iter().chain(cdf.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("tabulated cdf contains non-finite values"));
        }
        if xs[0] < 0.0 {
            return Err(invalid("tabulated support must be non-negative"));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("tabulated x values must be strictly increasing"));
        }
        if cdf.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("tabulated cdf must be non-decreasing"));
        }
        let last = cdf.len() - 1;
        if cdf[0].abs() > 1e-9 || (cdf[last] - 1.0).abs() > 1e-9 {
            return Err(invalid("tabulated cdf must start at 0 and end at 1"));
        }
        cdf[0] = 0.0;
        cdf[last] = 1.0;
        let mut ccdf_integral = Vec::with_capacity(xs.len());
        ccdf_integral.push(0.0);
        for k in 1..xs.len() {
            let width = xs[k] - xs[k - 1];
            let avg_ccdf = 1.0 - 0.5 * (cdf[k] + cdf[k - 1]);
            ccdf_integral.push(ccdf_integral[k - 1] + width * avg_ccdf);
        }
        Ok(Self {
            xs,
            cdf,
            ccdf_integral,
        })
    }

    fn lower(&self) -> f64 {
        self.xs[0]
    }

    fn upper(&self) -> f64 {
        self.xs[self.xs.len() - 1]
    }

    /// Index `k` with `xs[k] <= x < xs[k + 1]`, for x inside the support.
    fn cell(&self, x: f64) -> usize {
        let k = self.xs.partition_point(|&v| v <= x);
        k.saturating_sub(1).min(self.xs.len() - 2)
    }

    fn cdf(&self, x: f64) -> f64 {
        if x <= self.lower() {
            return 0.0;
        }
        if x >= self.upper() {
            return 1.0;
        }
        let k = self.cell(x);
        let t = (x - self.xs[k]) / (self.xs[k + 1] - self.xs[k]);
        self.cdf[k] + t * (self.cdf[k + 1] - self.cdf[k])
    }

    fn density(&self, k: usize) -> f64 {
        ((self.cdf[k + 1] - self.cdf[k]) / (self.xs[k + 1] - self.xs[k])).max(0.0)
    }

    fn pdf(&self, x: f64) -> f64 {
        if x < self.lower() || x > self.upper() {
            return 0.0;
        }
        self.density(self.cell(x))
    }

    fn limited_mean(&self, x: f64) -> f64 {
        if x <= self.lower() {
            return x.max(0.0);
        }
        let base = self.lower();
        if x >= self.upper() {
            return base + self.ccdf_integral[self.xs.len() - 1];
        }
        let k = self.cell(x);
        let fx = self.cdf(x);
        base + self.ccdf_integral[k] + (x - self.xs[k]) * (1.0 - 0.5 * (self.cdf[k] + fx))
    }

    fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        // first knot whose cdf reaches p
        let k = self.cdf.partition_point(|&c| c < p);
        if k == 0 {
            return self.xs[0];
        }
        if k >= self.xs.len() {
            return self.upper();
        }
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        if c1 <= c0 {
            return self.xs[k];
        }
        self.xs[k - 1] + (p - c0) / (c1 - c0) * (self.xs[k] - self.xs[k - 1])
    }

    /// `∫_{lo}^{hi} g(x) pdf(x) dx`, cell by cell.
    fn integrate_against_pdf<G: Fn(f64) -> f64>(&self, g: &G, lo: f64, hi: f64, tol: f64) -> Result<f64> {
        let lo = lo.max(self.lower());
        let hi = hi.min(self.upper());
        if hi <= lo {
            return Ok(0.0);
        }
        let first = self.cell(lo);
        let mut total = 0.0;
        for k in first..self.xs.len() - 1 {
            let a = self.xs[k].max(lo);
            let b = self.xs[k + 1].min(hi);
            if a >= hi {
                break;
            }
            let density = self.density(k);
            if b <= a || density == 0.0 {
                continue;
            }
            // error on this cell is bounded by density * cell tolerance
            let cell_tol = tol * (b - a) / (hi - lo) / density;
            total += density * adaptive_simpson(g, a, b, cell_tol, 1)?;
        }
        Ok(total)
    }

    fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.xs.iter().map(|x| x * c).collect(), self.cdf.clone())
    }

    fn points(&self) -> Vec<CdfPoint> {
        self.xs
            .iter()
            .zip(&self.cdf)
            .map(|(&x, &cdf)| CdfPoint { x, cdf })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Kind {
    Point { value: f64 },
    Exponential { rate: f64 },
    Uniform { lower: f64, upper: f64 },
    Empirical { samples: Vec<f64>, table: PiecewiseCdf },
    Tabulated { table: PiecewiseCdf },
}

/// A distribution over a non-negative scalar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionDoc", into = "DistributionDoc")]
pub struct ScalarDistribution {
    kind: Kind,
    units: Option<String>,
}

/// Serialized form of a [`ScalarDistribution`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSpec {
    Point { value: f64 },
    Exponential { rate: f64 },
    Uniform { lower: f64, upper: f64 },
    Empirical { samples: Vec<f64> },
    Tabulated { table: Vec<CdfPoint> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DistributionDoc {
    #[serde(flatten)]
    pub spec: DistributionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
}

impl TryFrom<DistributionDoc> for ScalarDistribution {
    type Error = crate::Error;

    fn try_from(doc: DistributionDoc) -> Result<Self> {
        let dist = match doc.spec {
            DistributionSpec::Point { value } => Self::point(value)?,
            DistributionSpec::Exponential { rate } => Self::exponential(rate)?,
            DistributionSpec::Uniform { lower, upper } => Self::uniform(lower, upper)?,
            DistributionSpec::Empirical { samples } => Self::empirical(samples)?,
            DistributionSpec::Tabulated { table } => Self::tabulated(&table)?,
        };
        Ok(dist.with_units_opt(doc.units))
    }
}

impl From<ScalarDistribution> for DistributionDoc {
    fn from(d: ScalarDistribution) -> Self {
        let spec = match d.kind {
            Kind::Point { value } => DistributionSpec::Point { value },
            Kind::Exponential { rate } => DistributionSpec::Exponential { rate },
            Kind::Uniform { lower, upper } => DistributionSpec::Uniform { lower, upper },
            Kind::Empirical { samples, .. } => DistributionSpec::Empirical { samples },
            Kind::Tabulated { table } => DistributionSpec::Tabulated {
                table: table.points(),
            },
        };
        DistributionDoc {
            spec,
            units: d.units,
        }
    }
}

impl ScalarDistribution {
    fn from_kind(kind: Kind) -> Self {
        Self { kind, units: None }
    }

    /// Degenerate distribution at `value`.
    pub fn point(value: f64) -> Result<Self> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(invalid(format!("point mass must be finite and >= 0, got {value}")));
        }
        Ok(Self::from_kind(Kind::Point { value }))
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(invalid(format!("exponential rate must be > 0, got {rate}")));
        }
        Ok(Self::from_kind(Kind::Exponential { rate }))
    }

    pub fn exponential_mean(mean: f64) -> Result<Self> {
        Self::exponential(1.0 / mean)
    }

    pub fn uniform(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower >= 0.0 && upper > lower) {
            return Err(invalid(format!(
                "uniform needs 0 <= lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(Self::from_kind(Kind::Uniform { lower, upper }))
    }

    /// Empirical distribution of `samples`: the ECDF interpolated linearly
    /// between the distinct sample values, anchored at `(0, 0)`.
    pub fn empirical(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("empirical distribution needs at least one sample"));
        }
        if samples.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid("empirical samples must be finite and >= 0"));
        }
        samples.sort_by(f64::total_cmp);
        let n = samples.len() as f64;
        let mut xs = vec![0.0];
        let mut cdf = vec![0.0];
        let mut i = 0;
        while i < samples.len() {
            let v = samples[i];
            while i < samples.len() && samples[i] == v {
                i += 1;
            }
            if v > 0.0 {
                xs.push(v);
                cdf.push(i as f64 / n);
            }
        }
        if xs.len() < 2 {
            return Err(invalid("empirical samples are all zero"));
        }
        let table = PiecewiseCdf::new(xs, cdf)?;
        Ok(Self::from_kind(Kind::Empirical { samples, table }))
    }

    pub fn tabulated(points: &[CdfPoint]) -> Result<Self> {
        let table = PiecewiseCdf::new(
            points.iter().map(|p| p.x).collect(),
            points.iter().map(|p| p.cdf).collect(),
        )?;
        Ok(Self::from_kind(Kind::Tabulated { table }))
    }

    pub fn with_units(mut self, units: impl Into<String>) -> Self {
        self.units = Some(units.into());
        self
    }

    fn with_units_opt(mut self, units: Option<String>) -> Self {
        self.units = units;
        self
    }

    pub fn units(&self) -> Option<&str> {
        self.units.as_deref()
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            Kind::Point { .. } => "point",
            Kind::Exponential { .. } => "exponential",
            Kind::Uniform { .. } => "uniform",
            Kind::Empirical { .. } => "empirical",
            Kind::Tabulated { .. } => "tabulated",
        }
    }

    pub fn is_point(&self) -> Option<f64> {
        match self.kind {
            Kind::Point { value } => Some(value),
            _ => None,
        }
    }

    /// Knots of the piecewise-linear CDF for tabulated and empirical kinds.
    pub fn table(&self) -> Option<Vec<CdfPoint>> {
        match &self.kind {
            Kind::Empirical { table, .. } | Kind::Tabulated { table } => Some(table.points()),
            _ => None,
        }
    }

    pub fn lower(&self) -> f64 {
        match &self.kind {
            Kind::Point { value } => *value,
            Kind::Exponential { .. } => 0.0,
            Kind::Uniform { lower, .. } => *lower,
            Kind::Empirical { table, .. } | Kind::Tabulated { table } => table.lower(),
        }
    }

    /// Upper edge of the support; infinite for the exponential kind.
    pub fn upper(&self) -> f64 {
        match &self.kind {
            Kind::Point { value } => *value,
            Kind::Exponential { .. } => f64::INFINITY,
            Kind::Uniform { upper, .. } => *upper,
            Kind::Empirical { table, .. } | Kind::Tabulated { table } => table.upper(),
        }
    }

    /// Finite upper edge, truncating unbounded supports at `truncation`.
    pub fn bounded_upper(&self, truncation: Option<f64>) -> Result<f64> {
        let upper = self.upper();
        if upper.is_finite() {
            return Ok(upper);
        }
        match truncation {
            Some(q) if q > 0.0 && q < 1.0 => Ok(self.quantile(q)),
            Some(q) => Err(invalid(format!("truncation quantile must lie in (0, 1), got {q}"))),
            None => Err(invalid(format!(
                "{} distribution has unbounded support and no truncation quantile was given",
                self.kind_name()
            ))),
        }
    }

    /// Density. Zero everywhere for a point mass.
    pub fn pdf(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Point { .. } => 0.0,
            Kind::Exponential { rate } => {
                if x < 0.0 {
                    0.0
                } else {
                    rate * (-rate * x).exp()
                }
            }
            Kind::Uniform { lower, upper } => {
                if x < *lower || x > *upper {
                    0.0
                } else {
                    1.0 / (upper - lower)
                }
            }
            Kind::Empirical { table, .. } | Kind::Tabulated { table } => table.pdf(x),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        1.0 - self.ccdf(x)
    }

    /// `Pr{X > x}`.
    pub fn ccdf(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Point { value } => {
                if x < *value {
                    1.0
                } else {
                    0.0
                }
            }
            Kind::Exponential { rate } => {
                if x <= 0.0 {
                    1.0
                } else {
                    (-rate * x).exp()
                }
            }
            Kind::Uniform { lower, upper } => ((upper - x) / (upper - lower)).clamp(0.0, 1.0),
            Kind::Empirical { table, .. } | Kind::Tabulated { table } => 1.0 - table.cdf(x),
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match &self.kind {
            Kind::Point { value } => *value,
            Kind::Exponential { rate } => -(-p).ln_1p() / rate,
            Kind::Uniform { lower, upper } => lower + p * (upper - lower),
            Kind::Empirical { table, .. } | Kind::Tabulated { table } => table.quantile(p),
        }
    }

    pub fn mean(&self) -> f64 {
        match &self.kind {
            Kind::Point { value } => *value,
            Kind::Exponential { rate } => 1.0 / rate,
            Kind::Uniform { lower, upper } => 0.5 * (lower + upper),
            Kind::Empirical { table, .. } | Kind::Tabulated { table } => table.limited_mean(f64::INFINITY),
        }
    }

    /// `E[min(X, x)]`, equivalently `∫₀ˣ ccdf(t) dt`.
    pub fn limited_mean(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match &self.kind {
            Kind::Point { value } => x.min(*value),
            Kind::Exponential { rate } => -(-rate * x).exp_m1() / rate,
            Kind::Uniform { lower, upper } => {
                if x <= *lower {
                    x
                } else if x >= *upper {
                    0.5 * (lower + upper)
                } else {
                    let w = upper - lower;
                    lower + (w * w - (upper - x) * (upper - x)) / (2.0 * w)
                }
            }
            Kind::Empirical { table, .. } | Kind::Tabulated { table } => table.limited_mean(x),
        }
    }

    /// `E[(X - a)⁺]`.
    pub fn excess_mean(&self, a: f64) -> f64 {
        (self.mean() - self.limited_mean(a)).max(0.0)
    }

    /// `E[φ(min(X, cap))]` for finite `cap`.
    pub fn expect_capped<F: Fn(f64) -> f64>(&self, phi: F, cap: f64, tol: f64) -> Result<f64> {
        if !cap.is_finite() {
            return Err(invalid("expect_capped needs a finite cap"));
        }
        if let Kind::Point { value } = self.kind {
            return Ok(phi(value.min(cap)));
        }
        let tail = self.ccdf(cap);
        let body = self.integrate_against_pdf(&phi, self.lower(), cap, tol)?;
        Ok(body + if tail > 0.0 { phi(cap) * tail } else { 0.0 })
    }

    /// `E[g(X) · 1{X < cap}]`.
    pub fn expect_below<G: Fn(f64) -> f64>(&self, g: G, cap: f64, tol: f64) -> Result<f64> {
        if let Kind::Point { value } = self.kind {
            return Ok(if value < cap { g(value) } else { 0.0 });
        }
        let hi = if cap.is_finite() {
            cap
        } else {
            self.bounded_upper(Some(1.0 - 1e-15))?
        };
        self.integrate_against_pdf(&g, self.lower(), hi, tol)
    }

    fn integrate_against_pdf<G: Fn(f64) -> f64>(&self, g: &G, lo: f64, hi: f64, tol: f64) -> Result<f64> {
        match &self.kind {
            Kind::Point { .. } => unreachable!("point masses are handled by the callers"),
            Kind::Exponential { rate } => {
                let rate = *rate;
                let hi = hi.min(self.quantile(1.0 - 1e-16));
                if hi <= lo {
                    return Ok(0.0);
                }
                adaptive_simpson(|x| g(x) * rate * (-rate * x).exp(), lo, hi, tol, 4)
            }
            Kind::Uniform { lower, upper } => {
                let (a, b) = (lo.max(*lower), hi.min(*upper));
                if b <= a {
                    return Ok(0.0);
                }
                let density = 1.0 / (upper - lower);
                Ok(density * adaptive_simpson(g, a, b, tol / density, 4)?)
            }
            Kind::Empirical { table, .. } | Kind::Tabulated { table } => {
                table.integrate_against_pdf(g, lo, hi, tol)
            }
        }
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            Kind::Point { value } => value,
            _ => self.quantile(rng.gen::<f64>()),
        }
    }

    /// Distribution of `c · X` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(invalid(format!("scale factor must be > 0, got {c}")));
        }
        let kind = match &self.kind {
            Kind::Point { value } => Kind::Point { value: value * c },
            Kind::Exponential { rate } => Kind::Exponential { rate: rate / c },
            Kind::Uniform { lower, upper } => Kind::Uniform {
                lower: lower * c,
                upper: upper * c,
            },
            Kind::Empirical { samples, table } => Kind::Empirical {
                samples: samples.iter().map(|v| v * c).collect(),
                table: table.scaled(c)?,
            },
            Kind::Tabulated { table } => Kind::Tabulated {
                table: table.scaled(c)?,
            },
        };
        Ok(Self {
            kind,
            units: self.units.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exponential_ccdf() {
        let d = ScalarDistribution::exponential(2.0).unwrap();
        assert_eq!(d.ccdf(0.0), 1.0);
        assert!((d.ccdf(1.0) - (-2.0f64).exp()).abs() < 1e-15);
        assert!((d.ccdf(1.0) - 0.13534).abs() < 1e-5);
    }

    #[test]
    fn uniform_midpoint() {
        let d = ScalarDistribution::uniform(0.5, 1.0).unwrap();
        assert_eq!(d.ccdf(0.75), 0.5);
        assert_eq!(d.ccdf(0.1), 1.0);
        assert_eq!(d.ccdf(2.0), 0.0);
    }

    #[test]
    fn empirical_counts() {
        let d = ScalarDistribution::empirical(vec![1.0, 2.0, 3.0]).unwrap();
        assert!((d.ccdf(2.0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(d.ccdf(0.0), 1.0);
        assert_eq!(d.ccdf(3.0), 0.0);
    }

    #[test]
    fn empirical_rejects_bad_samples() {
        assert!(ScalarDistribution::empirical(vec![]).is_err());
        assert!(ScalarDistribution::empirical(vec![1.0, -1.0]).is_err());
        assert!(ScalarDistribution::empirical(vec![f64::NAN]).is_err());
    }

    #[test]
    fn tabulated_validation() {
        let bad = [CdfPoint { x: 0.0, cdf: 0.0 }, CdfPoint { x: 1.0, cdf: 0.5 }];
        assert!(ScalarDistribution::tabulated(&bad).is_err());
        let decreasing = [
            CdfPoint { x: 0.0, cdf: 0.0 },
            CdfPoint { x: 1.0, cdf: 0.7 },
            CdfPoint { x: 2.0, cdf: 0.6 },
            CdfPoint { x: 3.0, cdf: 1.0 },
        ];
        assert!(ScalarDistribution::tabulated(&decreasing).is_err());
    }

    #[test]
    fn limited_mean_matches_quadrature_of_ccdf() {
        let dists = [
            ScalarDistribution::exponential(3.0).unwrap(),
            ScalarDistribution::uniform(0.2, 1.4).unwrap(),
            ScalarDistribution::empirical(vec![0.3, 0.5, 0.5, 1.1, 2.0]).unwrap(),
            ScalarDistribution::point(0.7).unwrap(),
        ];
        for d in &dists {
            for &x in &[0.1, 0.4, 0.6, 1.0, 1.7, 5.0] {
                let q = adaptive_simpson(|t| d.ccdf(t), 0.0, x, 1e-11, 64).unwrap();
                assert!((d.limited_mean(x) - q).abs() < 1e-8, "{} at {x}", d.kind_name());
            }
        }
    }

    #[test]
    fn expect_capped_point_and_continuous() {
        let p = ScalarDistribution::point(2.0).unwrap();
        assert_eq!(p.expect_capped(|x| x * x, 1.0, 1e-12).unwrap(), 1.0);
        assert_eq!(p.expect_capped(|x| x * x, 3.0, 1e-12).unwrap(), 4.0);
        // E[min(X, c)] must agree with the limited mean
        let e = ScalarDistribution::exponential(1.5).unwrap();
        let v = e.expect_capped(|x| x, 0.8, 1e-12).unwrap();
        assert!((v - e.limited_mean(0.8)).abs() < 1e-10);
        let t = ScalarDistribution::empirical(vec![0.3, 0.9, 1.4, 2.2]).unwrap();
        let v = t.expect_capped(|x| x, 1.0, 1e-12).unwrap();
        assert!((v - t.limited_mean(1.0)).abs() < 1e-10);
    }

    #[test]
    fn expect_below_counts_strictly_below() {
        let p = ScalarDistribution::point(2.0).unwrap();
        assert_eq!(p.expect_below(|_| 1.0, 2.0, 1e-12).unwrap(), 0.0);
        let u = ScalarDistribution::uniform(0.0, 4.0).unwrap();
        assert!((u.expect_below(|_| 1.0, 1.0, 1e-12).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn quantile_inverts_cdf() {
        let t = ScalarDistribution::empirical(vec![0.3, 0.9, 1.4, 2.2]).unwrap();
        for &p in &[0.1, 0.25, 0.5, 0.8, 0.99] {
            assert!((t.cdf(t.quantile(p)) - p).abs() < 1e-12);
        }
        let e = ScalarDistribution::exponential(0.5).unwrap();
        assert!((e.cdf(e.quantile(0.3)) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn sampling_law_of_large_numbers() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = ScalarDistribution::uniform(0.0, 1.0).unwrap();
        let n = 100_000;
        let mean = (0..n).map(|_| u.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01);

        let e = ScalarDistribution::exponential_mean(10.0).unwrap();
        let above = (0..n).filter(|_| e.sample(&mut rng) > 10.0).count() as f64 / n as f64;
        assert!((above - (-1.0f64).exp()).abs() < 0.01);

        let p = ScalarDistribution::point(3.0).unwrap();
        assert_eq!(p.sample(&mut rng), 3.0);
    }

    #[test]
    fn unbounded_support_needs_truncation() {
        let e = ScalarDistribution::exponential(1.0).unwrap();
        assert!(e.bounded_upper(None).is_err());
        let u = e.bounded_upper(Some(DEFAULT_TRUNCATION)).unwrap();
        assert!((u - 1e6f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn json_round_trip_keeps_units() {
        let d = ScalarDistribution::uniform(500.0, 1000.0).unwrap().with_units("kW");
        let text = serde_json::to_string(&d).unwrap();
        assert!(text.contains("\"kind\":\"uniform\""));
        let back: ScalarDistribution = serde_json::from_str(&text).unwrap();
        assert_eq!(back, d);
        let bad = r#"{"kind":"exponential","rate":-1.0}"#;
        assert!(serde_json::from_str::<ScalarDistribution>(bad).is_err());
    }
}

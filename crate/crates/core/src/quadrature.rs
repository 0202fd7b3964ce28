//! Adaptive composite Simpson quadrature.
//!
//! The integrands met in the cost model are piecewise smooth: kinks appear
//! wherever a tabulated distribution has a knot. Adaptive bisection with a
//! Richardson correction copes with those without knowing where they are.

use crate::error::{Error, Result};

/// Depth limit for interval bisection. 2^-48 of the initial panel is well
/// below double precision for every interval we integrate over.
const MAX_DEPTH: u32 = 48;

/// Smallest tolerance handed to the integrator. Guards zero-scale models
/// (all prices zero) from asking for an exact result.
pub const TOLERANCE_FLOOR: f64 = 1e-14;

struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
///
/// The interval is first cut into `min_panels` equal panels, each refined
/// independently. Returns an error carrying the achieved error estimate if
/// some panel cannot meet its share of the tolerance within the depth limit.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64, min_panels: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "integration bounds must be finite, got [{a}, {b}]"
        )));
    }
    if b <= a {
        return Ok(0.0);
    }
    let tol = tol.max(TOLERANCE_FLOOR);
    let panels = min_panels.max(1);
    let width = (b - a) / panels as f64;

    let mut stack = Vec::with_capacity(64);
    for k in 0..panels {
        let pa = a + width * k as f64;
        let pb = if k + 1 == panels { b } else { pa + width };
        let pm = 0.5 * (pa + pb);
        let (fa, fm, fb) = (f(pa), f(pm), f(pb));
        stack.push(Panel {
            a: pa,
            b: pb,
            fa,
            fm,
            fb,
            whole: simpson(pa, pb, fa, fm, fb),
            tol: tol / panels as f64,
            depth: 0,
        });
    }

    let mut total = 0.0;
    let mut excess = 0.0;
    let mut failed = false;
    while let Some(p) = stack.pop() {
        let m = 0.5 * (p.a + p.b);
        let lm = 0.5 * (p.a + m);
        let rm = 0.5 * (m + p.b);
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(p.a, m, p.fa, flm, p.fm);
        let right = simpson(m, p.b, p.fm, frm, p.fb);
        let delta = left + right - p.whole;
        if delta.abs() <= 15.0 * p.tol || !delta.is_finite() {
            total += left + right + delta / 15.0;
            continue;
        }
        if p.depth >= MAX_DEPTH || (m - p.a) <= f64::EPSILON * m.abs().max(1.0) {
            failed = true;
            excess += delta.abs() / 15.0;
            total += left + right + delta / 15.0;
            continue;
        }
        let half = 0.5 * p.tol;
        stack.push(Panel {
            a: p.a,
            b: m,
            fa: p.fa,
            fm: flm,
            fb: p.fm,
            whole: left,
            tol: half,
            depth: p.depth + 1,
        });
        stack.push(Panel {
            a: m,
            b: p.b,
            fa: p.fm,
            fm: frm,
            fb: p.fb,
            whole: right,
            tol: half,
            depth: p.depth + 1,
        });
    }
    if !total.is_finite() {
        return Err(Error::Quadrature {
            lower: a,
            upper: b,
            requested: tol,
            achieved: f64::INFINITY,
        });
    }
    if failed && excess > tol {
        return Err(Error::Quadrature {
            lower: a,
            upper: b,
            requested: tol,
            achieved: excess,
        });
    }
    Ok(total)
}

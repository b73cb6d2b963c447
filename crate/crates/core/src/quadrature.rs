//! Adaptive Simpson quadrature and the exponentially weighted tail integral
//! `e^{-sigma t} int_{-inf}^t e^{sigma s} f(s) ds`.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 48;

fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth >= MAX_DEPTH || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1)
}

/// Adaptive Simpson rule on `[a, b]` to absolute tolerance `tol`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    // split into a few panels so that narrow features are not stepped over
    let panels = 16;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let lo = a + h * i as f64;
            let hi = if i + 1 == panels { b } else { lo + h };
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            simpson_step(f, lo, hi, fa, fm, fb, whole, tol / panels as f64, 0)
        })
        .sum()
}

/// `e^{-sigma t} int_{-inf}^t e^{sigma s} f(s) ds` for a non-negative `f`.
///
/// Integrates backwards over windows of width `max(1, 1/sigma)` and truncates
/// once the weighted integrand stays below `1e-12` of its peak. An integrand
/// that keeps growing into the past is reported as non-integrable.
pub fn weighted_tail_integral(f: &dyn Fn(f64) -> f64, sigma: f64, t: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Integrability(format!("weight sigma = {sigma} must be positive")));
    }
    let width = (1.0 / sigma).max(1.0);
    let weighted = |s: f64| (sigma * (s - t)).exp() * f(s);
    let mut total = 0.0;
    let mut peak = 0.0f64;
    let mut quiet = 0;
    for j in 0..4096 {
        let hi = t - width * j as f64;
        let lo = hi - width;
        let samples = (0..=8).map(|i| weighted(lo + width * i as f64 / 8.0));
        let local_peak = samples.fold(0.0f64, |m, v| m.max(v.abs()));
        if !local_peak.is_finite() {
            return Err(Error::Integrability(format!("integrand overflows near s = {lo}")));
        }
        let tol = 1e-14 * peak.max(local_peak).max(1e-300) * width;
        let piece = integrate(&weighted, lo, hi, tol);
        total += piece;
        peak = peak.max(local_peak);
        if local_peak <= 1e-12 * peak || peak == 0.0 {
            quiet += 1;
            if quiet >= 2 {
                return Ok(total);
            }
        } else {
            quiet = 0;
        }
    }
    Err(Error::Integrability(format!(
        "weighted integrand has not decayed after {} time units into the past of t = {t}",
        4096.0 * width
    )))
}

//! Bowen's formula `dim_H J = inf{β ≥ 0 : P(βφ) < 0}` by bisection.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::thermo::{system_pressure, PressureMethod, PressureOptions};

use super::Model;

/// Largest `β` searched for a sign change.
pub const BETA_MAX: f64 = 64.0;
/// `|P(0)|` below this counts as zero pressure at `β = 0`.
pub const ZERO_PRESSURE: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct DimensionReport {
    pub dimension: f64,
    /// Final bracket `[lo, hi]` with `P(lo·φ) ≥ 0 > P(hi·φ)`.
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub pressure_lo: f64,
    pub pressure_hi: f64,
    pub method: PressureMethod,
    pub q: usize,
    pub truncation: usize,
    pub evaluations: usize,
}

/// Root of `β ↦ P(βφ)` on the truncation `p`, to bracket width `tol`.
pub fn bowen_dimension(model: &dyn Model, p: usize, tol: f64, opts: &PressureOptions) -> Result<DimensionReport> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let sys = model.system(p)?;
    let mut evaluations = 0;
    let mut method = PressureMethod::Block;
    let mut pressure = |beta: f64| -> Result<f64> {
        evaluations += 1;
        let v = system_pressure(&sys, beta, None, opts)?;
        method = v.method;
        Ok(v.estimate)
    };
    let p0 = pressure(0.0)?;
    let (mut lo, mut hi, mut p_lo, mut p_hi);
    if p0 < -ZERO_PRESSURE {
        return Err(Error::NoSignChange { lo: 0.0, hi: 0.0 });
    }
    if p0 <= ZERO_PRESSURE {
        let p_tol = pressure(tol)?;
        if p_tol < 0.0 {
            return Ok(DimensionReport {
                dimension: 0.0,
                beta_lo: 0.0,
                beta_hi: tol,
                pressure_lo: p0,
                pressure_hi: p_tol,
                method,
                q: opts.q,
                truncation: sys.truncation,
                evaluations,
            });
        }
        lo = tol;
        p_lo = p_tol;
    } else {
        lo = 0.0;
        p_lo = p0;
    }
    hi = (2.0 * lo).max(1.0);
    p_hi = pressure(hi)?;
    while p_hi >= 0.0 {
        if hi >= BETA_MAX {
            return Err(Error::NoSignChange { lo: 0.0, hi: BETA_MAX });
        }
        lo = hi;
        p_lo = p_hi;
        hi = (2.0 * hi).min(BETA_MAX);
        p_hi = pressure(hi)?;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let pm = pressure(mid)?;
        if pm >= 0.0 {
            lo = mid;
            p_lo = pm;
        } else {
            hi = mid;
            p_hi = pm;
        }
    }
    Ok(DimensionReport {
        dimension: 0.5 * (lo + hi),
        beta_lo: lo,
        beta_hi: hi,
        pressure_lo: p_lo,
        pressure_hi: p_hi,
        method,
        q: opts.q,
        truncation: sys.truncation,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::GaussModel;

    #[test]
    fn single_digit_has_dimension_zero() {
        let m = GaussModel::new(1, Some(vec![1])).unwrap();
        let r = bowen_dimension(&m, 1, 1e-8, &PressureOptions::default()).unwrap();
        assert_eq!(r.dimension, 0.0);
        assert!(r.pressure_hi < 0.0);
    }

    #[test]
    fn two_digits_bracket_sign_change() {
        let m = GaussModel::new(2, Some(vec![1, 2])).unwrap();
        let r = bowen_dimension(&m, 2, 1e-9, &PressureOptions::default()).unwrap();
        assert!(r.pressure_lo >= 0.0 && r.pressure_hi < 0.0);
        assert!((r.dimension - 0.531280506).abs() < 1e-6);
    }
}

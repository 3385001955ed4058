//! Scalar kernels underlying every safety filter.
//!
//! `lambda_qp` is the exact multiplier of the closed-form CBF-QP;
//! `lambda_hs` is its smooth squareplus overapproximation (half-Sontag).
//! Both are defined on the set P = {(a, b) : a > 0 or b > 0}.

use crate::error::{Error, Result};

/// Extended class-K-infinity function: strictly increasing, zero at zero,
/// unbounded in both directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaSpec {
    Linear { gain: f64 },
    Cubic { gain: f64 },
}

impl AlphaSpec {
    pub fn gain(&self) -> f64 {
        match *self {
            AlphaSpec::Linear { gain } | AlphaSpec::Cubic { gain } => gain,
        }
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        if !r.is_finite() {
            return Err(Error::NonFinite { context: "alpha_eval argument" });
        }
        Ok(match *self {
            AlphaSpec::Linear { gain } => gain * r,
            AlphaSpec::Cubic { gain } => gain * r * r * r,
        })
    }
}

/// True iff (a, b) lies in the domain P where the multipliers are defined.
pub fn in_domain(a: f64, b: f64) -> bool {
    a > 0.0 || b > 0.0
}

/// Optimal CBF-QP multiplier: 0 when b = 0, else max{0, -a/b}.
pub fn lambda_qp(a: f64, b: f64) -> Result<f64> {
    if b <= 0.0 {
        if a <= 0.0 {
            return Err(Error::CbfConditionViolated { a });
        }
        return Ok(0.0);
    }
    Ok((-a / b).max(0.0))
}

/// Half-Sontag multiplier: 0 when b = 0, else (-a + sqrt(a^2 + b^2)) / (2b).
///
/// For a > 0 the equivalent form b / (2(a + sqrt(a^2 + b^2))) is used; the
/// textbook form cancels catastrophically when a >> b.
pub fn lambda_hs(a: f64, b: f64) -> Result<f64> {
    if b <= 0.0 {
        if a <= 0.0 {
            return Err(Error::CbfConditionViolated { a });
        }
        return Ok(0.0);
    }
    let s = a.hypot(b);
    if a > 0.0 {
        Ok(b / (2.0 * (a + s)))
    } else {
        Ok((-a + s) / (2.0 * b))
    }
}

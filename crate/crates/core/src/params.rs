//! Order parameters of the nonlocal problem.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Dimension and fractional orders `(n, s, p)` with `s*p` strictly inside
/// `(0, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub n: usize,
    pub s: f64,
    pub p: f64,
}

impl ScalingParams {
    pub fn new(n: usize, s: f64, p: f64) -> Result<Self, ParamError> {
        if n == 0 {
            return Err(ParamError::InvalidParameter("dimension n must be >= 1".into()));
        }
        if s.is_nan() || s <= 0.0 || s >= 1.0 {
            return Err(ParamError::InvalidParameter("s must lie in (0,1)".into()));
        }
        if !(p > 1.0 && p.is_finite()) {
            return Err(ParamError::InvalidParameter("p must lie in (1,inf)".into()));
        }
        let sp = s * p;
        if !(sp > 0.0 && sp < n as f64) {
            return Err(ParamError::InvalidParameter(format!(
                "sp = {sp} must lie strictly inside (0, {n})"
            )));
        }
        Ok(ScalingParams { n, s, p })
    }

    pub fn sp(&self) -> f64 {
        self.s * self.p
    }

    /// Capacity-scaling exponent `n - sp`.
    pub fn cap_exponent(&self) -> f64 {
        self.n as f64 - self.sp()
    }

    /// Critical obstacle scale `eps^{n/(n-sp)}`.
    pub fn lambda_eps(&self, eps: f64) -> Result<f64, ParamError> {
        if !eps.is_finite() || eps <= 0.0 {
            return Err(ParamError::InvalidParameter("eps must be > 0".into()));
        }
        Ok(eps.powf(self.n as f64 / self.cap_exponent()))
    }
}

//! The fractional order and its derived weight exponent.

use serde::Serialize;

use crate::error::{Error, Result};

/// The fractional exponent `s` and the weight exponent `a = 1 - 2s`.
///
/// Only `s` is stored; `a` is recomputed on every access.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FracParam {
    s: f64,
}

impl FracParam {
    pub fn new(s: f64) -> Result<Self> {
        if !(s.is_finite() && s > 0.0 && s < 1.0) {
            return Err(Error::Domain(format!("s = {s} must lie in (0, 1)")));
        }
        Ok(Self { s })
    }

    #[inline]
    pub fn s(&self) -> f64 {
        self.s
    }

    #[inline]
    pub fn a(&self) -> f64 {
        1.0 - 2.0 * self.s
    }

    /// First eigenvalue `s(1-s)` of the mixed angular problem.
    pub fn lambda1(&self) -> f64 {
        self.s * (1.0 - self.s)
    }
}

/// Convenience constructor mirroring the operation name.
pub fn make_params(s: f64) -> Result<FracParam> {
    FracParam::new(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_exponent() {
        assert_eq!(make_params(0.5).unwrap().a(), 0.0);
        assert_eq!(make_params(0.75).unwrap().a(), -0.5);
        assert_eq!(make_params(0.25).unwrap().a(), 0.5);
    }

    #[test]
    fn rejects_out_of_range() {
        for s in [0.0, 1.0, -0.1, 1.2, f64::NAN] {
            assert!(matches!(make_params(s), Err(Error::Domain(_))));
        }
    }
}

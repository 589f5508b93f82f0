//! Differentiable surrogate for `|x|`:
//! `s(x) = x + (2/c) log((1 + e^{-cx}) / 2)` with derivatives
//! `rho1 = tanh(cx/2)` and `rho2 = 2c / (e^{-cx} + e^{cx} + 2)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Past this value of `|c x|` the exponentials are replaced by asymptotes.
const ASYMPTOTE: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothAbsConfig {
    pub c: f64,
}

impl SmoothAbsConfig {
    pub const DEFAULT_C: f64 = 10.0;

    pub fn new(c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return invalid(format!("smoothing sharpness must be positive, got {c}"));
        }
        Ok(Self { c })
    }

    #[inline]
    pub fn s(&self, x: f64) -> f64 {
        s(x, self.c)
    }

    #[inline]
    pub fn rho1(&self, x: f64) -> f64 {
        rho1(x, self.c)
    }

    #[inline]
    pub fn rho2(&self, x: f64) -> f64 {
        rho2(x, self.c)
    }
}

impl Default for SmoothAbsConfig {
    fn default() -> Self {
        Self { c: Self::DEFAULT_C }
    }
}

/// `s` is even, so it is evaluated on `|x|` where `e^{-c|x|}` cannot overflow.
#[inline]
pub fn s(x: f64, c: f64) -> f64 {
    let ax = x.abs();
    let cx = c * ax;
    if cx > ASYMPTOTE {
        ax - 2.0 * std::f64::consts::LN_2 / c
    } else {
        ax + (2.0 / c) * ((-cx).exp().ln_1p() - std::f64::consts::LN_2)
    }
}

#[inline]
pub fn rho1(x: f64, c: f64) -> f64 {
    let cx = c * x;
    if cx > ASYMPTOTE {
        1.0
    } else if cx < -ASYMPTOTE {
        -1.0
    } else {
        (0.5 * cx).tanh()
    }
}

#[inline]
pub fn rho2(x: f64, c: f64) -> f64 {
    let cx = (c * x).abs();
    if cx > ASYMPTOTE {
        0.0
    } else {
        let e = (-cx).exp();
        2.0 * c * e / ((1.0 + e) * (1.0 + e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const C: f64 = 10.0;

    #[test]
    fn values_at_zero() {
        assert_eq!(s(0.0, C), 0.0);
        assert_eq!(rho1(0.0, C), 0.0);
        assert_eq!(rho2(0.0, C), 5.0);
    }

    #[test]
    fn s_at_two() {
        // 2 + 0.2 ln((1 + e^-20) / 2), expanded to keep the e^-20 term exact
        let expected = 2.0 - 0.2 * std::f64::consts::LN_2 + 0.2 * (-20f64).exp();
        assert!((s(2.0, C) - expected).abs() < 1e-15);
        assert!((s(2.0, C) - (2.0 - 0.138_629_436_111_989)).abs() < 1e-8);
    }

    #[test]
    fn symmetries() {
        for i in 0..200 {
            let x = -3.0 + 0.0301 * i as f64;
            assert_eq!(s(x, C), s(-x, C));
            assert_eq!(rho1(x, C), -rho1(-x, C));
            assert_eq!(rho2(x, C), rho2(-x, C));
            assert!(rho2(x, C) > 0.0);
            assert!(rho1(x, C).abs() < 1.0);
        }
    }

    #[test]
    fn rho1_is_monotone() {
        let mut prev = rho1(-2.0, C);
        for i in 1..=400 {
            let cur = rho1(-2.0 + 0.01 * i as f64, C);
            assert!(cur >= prev);
            prev = cur;
        }
    }

    #[test]
    fn asymptotic_branches_are_continuous() {
        let edge = ASYMPTOTE / C;
        for x in [edge, -edge] {
            assert!((s(x * (1.0 - 1e-12), C) - s(x * (1.0 + 1e-12), C)).abs() < 1e-11);
            assert!((rho1(x * (1.0 - 1e-12), C) - rho1(x * (1.0 + 1e-12), C)).abs() < 1e-12);
            assert!(rho2(x * (1.0 - 1e-12), C) < 1e-11);
        }
        assert!(s(1e300, C).is_finite());
        assert_eq!(rho1(-1e300, C), -1.0);
    }

    #[test]
    fn config_validation() {
        assert!(SmoothAbsConfig::new(0.0).is_err());
        assert!(SmoothAbsConfig::new(f64::NAN).is_err());
        assert_eq!(SmoothAbsConfig::default().c, 10.0);
    }
}

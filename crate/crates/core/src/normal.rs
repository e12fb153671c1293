//! Univariate normal and Student t helpers.

use statrs::distribution::{Continuous, ContinuousCDF, StudentsT};
use libm::erfc;
use statrs::function::erf::erfc_inv;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn pdf(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function.
pub fn cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
    }
}

/// Upper tail `1 - Phi(x)` without cancellation.
pub fn sf(x: f64) -> f64 {
    cdf(-x)
}

/// Standard normal quantile. Returns infinities at 0 and 1.
pub fn quantile(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        let x = quantile_fast(p);
        // One Newton step on the smaller tail.
        let step = if p < 0.5 {
            (cdf(x) - p) / pdf(x)
        } else {
            ((1.0 - p) - sf(x)) / pdf(x)
        };
        if step.is_finite() {
            x - step
        } else {
            x
        }
    }
}

/// Quantile without refinement, for inner loops; within a few ulps.
pub(crate) fn quantile_fast(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// Student t distribution function; infinite `df` is the normal.
pub fn t_cdf(x: f64, df: f64) -> f64 {
    if df.is_infinite() {
        return cdf(x);
    }
    if x.is_infinite() {
        return if x > 0.0 { 1.0 } else { 0.0 };
    }
    StudentsT::new(0.0, 1.0, df)
        .expect("degrees of freedom are validated by callers")
        .cdf(x)
}

/// Student t upper tail.
pub fn t_sf(x: f64, df: f64) -> f64 {
    t_cdf(-x, df)
}

pub fn t_quantile(p: f64, df: f64) -> f64 {
    if df.is_infinite() {
        return quantile(p);
    }
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("degrees of freedom are validated by callers");
    let x = dist.inverse_cdf(p);
    let density = dist.pdf(x);
    if !(density > 0.0) {
        return x;
    }
    // One Newton step on the smaller tail.
    if p < 0.5 {
        x - (t_cdf(x, df) - p) / density
    } else {
        x + (t_sf(x, df) - (1.0 - p)) / density
    }
}

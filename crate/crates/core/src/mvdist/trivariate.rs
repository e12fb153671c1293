//! Trivariate normal and t orthant-type probabilities by conditioning on
//! one coordinate and integrating the bivariate conditional probability
//! with adaptive Gauss-Kronrod quadrature.

use std::f64::consts::{FRAC_PI_2, PI};

use super::bivariate::{bvn_lower, bvt_lower};
use super::CorrelationMatrix;
use crate::normal;
use crate::quad::adaptive_gk;

/// Conditional variances below this are left to the general integrator.
const MIN_CONDITIONAL_VAR: f64 = 1e-8;
const TOL: f64 = 1e-11;
const MAX_INTERVALS: usize = 400;

pub(crate) struct Outcome {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

struct Split {
    h1: f64,
    /// Limits, regression slopes and conditional sds of the other two.
    h: [f64; 2],
    beta: [f64; 2],
    sd: [f64; 2],
    r: f64,
}

fn split(upper: &[f64], sigma: &CorrelationMatrix) -> Option<Split> {
    let (mut best, mut best_var) = (0, -1.0);
    for i in 0..3 {
        let v = (0..3)
            .filter(|&k| k != i)
            .map(|k| 1.0 - sigma.get(i, k).powi(2))
            .fold(f64::INFINITY, f64::min);
        if v > best_var {
            best_var = v;
            best = i;
        }
    }
    if best_var < MIN_CONDITIONAL_VAR {
        return None;
    }
    let others: Vec<usize> = (0..3).filter(|&k| k != best).collect();
    let (a, b) = (others[0], others[1]);
    let beta = [sigma.get(best, a), sigma.get(best, b)];
    let sd = [(1.0 - beta[0] * beta[0]).sqrt(), (1.0 - beta[1] * beta[1]).sqrt()];
    let r = ((sigma.get(a, b) - beta[0] * beta[1]) / (sd[0] * sd[1])).clamp(-1.0, 1.0);
    Some(Split {
        h1: upper[best],
        h: [upper[a], upper[b]],
        beta,
        sd,
        r,
    })
}

/// `P(Z <= upper)` for `Z ~ N(0, sigma)` in three dimensions with finite
/// limits. `None` when the matrix is too close to singular.
pub(crate) fn tvn(upper: &[f64], sigma: &CorrelationMatrix) -> Option<Outcome> {
    let s = split(upper, sigma)?;
    if s.h1 <= -10.0 {
        return Some(Outcome {
            value: 0.0,
            error: 1e-20,
            evaluations: 0,
        });
    }
    let f = |z: f64| {
        let x = (s.h[0] - s.beta[0] * z) / s.sd[0];
        let y = (s.h[1] - s.beta[1] * z) / s.sd[1];
        normal::pdf(z) * bvn_lower(x, y, s.r)
    };
    let (value, error, evaluations) = adaptive_gk(f, -10.0, s.h1, TOL, MAX_INTERVALS);
    Some(Outcome {
        value: value.clamp(0.0, 1.0),
        error: error + 1e-20,
        evaluations,
    })
}

/// `P(T <= upper)` for a trivariate t with integer `nu`. Given the
/// conditioning coordinate `t`, the other two are bivariate t with `nu + 1`
/// degrees of freedom and scale inflated by `sqrt((nu + t^2) / (nu + 1))`.
/// The outer integral runs over `theta` with `t = sqrt(nu) tan(theta)`,
/// under which the t density becomes a multiple of `cos(theta)^(nu - 1)`.
pub(crate) fn tvt(nu: u64, upper: &[f64], sigma: &CorrelationMatrix) -> Option<Outcome> {
    let s = split(upper, sigma)?;
    let nuf = nu as f64;
    let snu = nuf.sqrt();
    let log_norm = libm::lgamma(0.5 * (nuf + 1.0)) - libm::lgamma(0.5 * nuf) - 0.5 * PI.ln();
    let theta_hi = (s.h1 / snu).atan();
    // Beyond this angle the density factor is below exp(-60).
    let theta_lo = if nu > 1 {
        -(-60.0 / (nuf - 1.0)).exp().acos()
    } else {
        -FRAC_PI_2
    };
    if theta_hi <= theta_lo {
        return Some(Outcome {
            value: 0.0,
            error: 1e-20,
            evaluations: 0,
        });
    }
    let f = |theta: f64| {
        let t = snu * theta.tan();
        let w = ((nuf + t * t) / (nuf + 1.0)).sqrt();
        let x = (s.h[0] - s.beta[0] * t) / (s.sd[0] * w);
        let y = (s.h[1] - s.beta[1] * t) / (s.sd[1] * w);
        let density = (log_norm + (nuf - 1.0) * theta.cos().ln()).exp();
        density * bvt_lower(nu + 1, x, y, s.r)
    };
    let (value, error, evaluations) = adaptive_gk(f, theta_lo, theta_hi, TOL, MAX_INTERVALS);
    Some(Outcome {
        value: value.clamp(0.0, 1.0),
        error: error + 1e-20,
        evaluations,
    })
}

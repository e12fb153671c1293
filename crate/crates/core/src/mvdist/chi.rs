//! Quantiles of the scale `S = chi_nu / sqrt(nu)` mixing a normal vector
//! into a multivariate t vector.
//!
//! `S` is tabulated against the normal score `z = Phi^-1(u)` and read back by
//! cubic Hermite interpolation, with the exact derivative at each node.
//! Tables are cached per degrees of freedom.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::normal;

const Z_MAX: f64 = 8.5;
const STEP: f64 = 0.04;
const CACHE_CAP: usize = 256;

#[derive(Debug)]
pub(crate) struct ChiScale {
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl ChiScale {
    fn new(df: f64) -> Self {
        let n = (2.0 * Z_MAX / STEP).round() as usize + 1;
        let a = df / 2.0;
        let gln = ln_gamma(a);
        let mut values = Vec::with_capacity(n);
        let mut slopes = Vec::with_capacity(n);
        let mut guess = None;
        for k in 0..n {
            let z = -Z_MAX + k as f64 * STEP;
            let x = inverse_gamma(a, gln, normal::cdf(z), normal::sf(z), guess);
            guess = Some(x);
            let s = (2.0 * x / df).sqrt();
            // ds/dz = phi(z) / (g(x) * df * s) with g the Gamma(a) density.
            let ln_g = (a - 1.0) * x.ln() - x - gln;
            let slope = (normal::pdf(z).ln() - ln_g - (df * s).ln()).exp();
            values.push(s);
            slopes.push(if slope.is_finite() { slope } else { 0.0 });
        }
        Self { values, slopes }
    }

    /// Quantile of `S` at normal score `z`.
    pub(crate) fn at_score(&self, z: f64) -> f64 {
        let last = self.values.len() - 1;
        let pos = (z + Z_MAX) / STEP;
        if pos <= 0.0 {
            return self.values[0];
        }
        if pos >= last as f64 {
            return self.values[last];
        }
        let k = pos.floor() as usize;
        let t = pos - k as f64;
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (m0, m1) = (self.slopes[k] * STEP, self.slopes[k + 1] * STEP);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1
    }

    /// Quantile of `S` at probability `u`.
    pub(crate) fn at(&self, u: f64) -> f64 {
        self.at_score(normal::quantile_fast(u))
    }
}

/// Solves `P(a, x) = p` (equivalently `Q(a, x) = q`) by Halley iteration,
/// working on whichever tail is smaller.
fn inverse_gamma(a: f64, gln: f64, p: f64, q: f64, guess: Option<f64>) -> f64 {
    let a1 = a - 1.0;
    let mut x = match guess {
        Some(g) if g > 0.0 => g,
        _ => initial_guess(a, p, q),
    };
    for _ in 0..60 {
        if x <= 0.0 {
            return 0.0;
        }
        let err = if p < 0.5 {
            gamma_lr(a, x) - p
        } else {
            q - gamma_ur(a, x)
        };
        let dens = (a1 * x.ln() - x - gln).exp();
        if dens == 0.0 {
            break;
        }
        let u = err / dens;
        let step = u / (1.0 - 0.5 * (u * (a1 / x - 1.0)).min(1.0));
        let next = x - step;
        x = if next <= 0.0 { 0.5 * x } else { next };
        if step.abs() < 1e-14 * x {
            break;
        }
    }
    x
}

fn initial_guess(a: f64, p: f64, q: f64) -> f64 {
    let x = if a > 1.0 {
        // Wilson-Hilferty with a rational normal-quantile approximation.
        let pp = if p < 0.5 { p } else { q };
        let t = (-2.0 * pp.ln()).sqrt();
        let mut z = (2.30753 + t * 0.27061) / (1.0 + t * (0.99229 + t * 0.04481)) - t;
        if p < 0.5 {
            z = -z;
        }
        (a * (1.0 - 1.0 / (9.0 * a) - z / (3.0 * a.sqrt())).powi(3)).max(1e-3)
    } else {
        let t = 1.0 - a * (0.253 + a * 0.12);
        if p < t {
            (p / t).powf(1.0 / a)
        } else {
            1.0 - (1.0 - (p - t) / (1.0 - t)).ln()
        }
    };
    x.clamp(f64::MIN_POSITIVE, 1e300)
}

/// Shared table for `df` degrees of freedom.
pub(crate) fn chi_scale(df: f64) -> Arc<ChiScale> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Arc<ChiScale>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = df.to_bits();
    if let Some(t) = cache.lock().expect("chi cache poisoned").get(&key) {
        return Arc::clone(t);
    }
    let table = Arc::new(ChiScale::new(df));
    let mut guard = cache.lock().expect("chi cache poisoned");
    if guard.len() >= CACHE_CAP {
        guard.clear();
    }
    guard.insert(key, Arc::clone(&table));
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn quantiles_match_chi_square() {
        for &df in &[1.0, 2.5, 7.0, 40.0, 480.0, 12_345.6] {
            let table = ChiScale::new(df);
            let chi = ChiSquared::new(df).unwrap();
            for &u in &[1e-6, 0.01, 0.2, 0.5, 0.77, 0.99, 1.0 - 1e-7] {
                let s = table.at(u);
                let back = chi.cdf(s * s * df);
                assert!((back - u).abs() < 1e-5 * u.min(1.0 - u).max(1e-6), "df={df} u={u}: {back}");
            }
        }
    }

    #[test]
    fn nodes_solve_exactly() {
        let a = 3.5;
        let x = inverse_gamma(a, ln_gamma(a), 0.3, 0.7, None);
        assert!((gamma_lr(a, x) - 0.3).abs() < 1e-14);
        let x = inverse_gamma(a, ln_gamma(a), 1.0 - 1e-12, 1e-12, None);
        assert!((gamma_ur(a, x) - 1e-12).abs() < 1e-24);
    }
}

//! Randomized quasi-Monte Carlo integration of normal and t rectangle
//! probabilities by sequential conditioning (Genz separation of variables).
//!
//! Variables are reordered while the Cholesky factor is built so that the
//! variable with the smallest expected conditional probability comes first.
//! The integrand is evaluated on a Kronecker lattice with generators
//! `frac(sqrt(prime_k))`, periodized with the baker's transform and
//! antithetic pairs, under independent uniform random shifts. The spread of
//! the per-shift estimates gives the error bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::chi::{chi_scale, ChiScale};
use super::{CorrelationMatrix, IntegrationBudget, Method, ProbResult};
use crate::error::{Error, Result};
use crate::normal;

const PRIMES: [f64; 17] = [
    2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0, 23.0, 29.0, 31.0, 37.0, 41.0, 43.0, 47.0, 53.0, 59.0,
];

/// Below this conditional standard deviation a variable is treated as a
/// deterministic function of the earlier ones.
const SINGULAR_TOL: f64 = 1e-10;

pub(crate) const GENERATOR: &str = "kronecker-sqrt-primes/baker/antithetic";

struct Conditioned {
    dim: usize,
    /// Row-major lower-triangular factor; rows scaled by their diagonal
    /// except for singular rows.
    chol: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    singular: Vec<bool>,
}

impl Conditioned {
    fn new(lower: &[f64], upper: &[f64], sigma: &CorrelationMatrix) -> Self {
        let d = lower.len();
        let mut cov: Vec<f64> = sigma.as_slice().to_vec();
        let mut a = lower.to_vec();
        let mut b = upper.to_vec();
        let mut l = vec![0.0; d * d];
        let mut y = vec![0.0; d];

        for i in 0..d {
            // Pick the remaining variable with the smallest conditional
            // probability given the expected values of the earlier ones.
            let mut best = i;
            let mut best_prob = f64::INFINITY;
            for j in i..d {
                let partial: f64 = (0..i).map(|k| l[j * d + k] * l[j * d + k]).sum();
                let var = cov[j * d + j] - partial;
                let sd = var.max(0.0).sqrt();
                if sd <= SINGULAR_TOL {
                    continue;
                }
                let shift: f64 = (0..i).map(|k| l[j * d + k] * y[k]).sum();
                let prob = normal::cdf((b[j] - shift) / sd) - normal::cdf((a[j] - shift) / sd);
                if prob < best_prob {
                    best_prob = prob;
                    best = j;
                }
            }
            if best != i {
                swap_variables(&mut cov, &mut l, &mut a, &mut b, d, i, best);
            }

            let partial: f64 = (0..i).map(|k| l[i * d + k] * l[i * d + k]).sum();
            let var = (cov[i * d + i] - partial).max(0.0);
            // Diagonal jitter keeps the factor finite for near-singular input.
            let diag = (var + 1e-12).sqrt();
            if var.sqrt() <= SINGULAR_TOL {
                l[i * d + i] = 0.0;
                for j in i + 1..d {
                    l[j * d + i] = 0.0;
                }
                y[i] = 0.0;
                continue;
            }
            l[i * d + i] = diag;
            for j in i + 1..d {
                let partial: f64 = (0..i).map(|k| l[j * d + k] * l[i * d + k]).sum();
                l[j * d + i] = (cov[j * d + i] - partial) / diag;
            }
            let shift: f64 = (0..i).map(|k| l[i * d + k] * y[k]).sum();
            let lo = (a[i] - shift) / diag;
            let hi = (b[i] - shift) / diag;
            let mass = normal::cdf(hi) - normal::cdf(lo);
            y[i] = if mass > 1e-300 {
                (normal::pdf(lo) - normal::pdf(hi)) / mass
            } else if lo > 0.0 {
                lo
            } else {
                hi
            };
        }

        let mut singular = vec![false; d];
        for i in 0..d {
            let diag = l[i * d + i];
            if diag == 0.0 {
                singular[i] = true;
                continue;
            }
            for k in 0..=i {
                l[i * d + k] /= diag;
            }
            a[i] /= diag;
            b[i] /= diag;
        }
        Self {
            dim: d,
            chol: l,
            lower: a,
            upper: b,
            singular,
        }
    }

    /// Integrand at one point; `scale` multiplies the limits (1 for the
    /// normal case, a chi draw for t). Consumes `w[0..dim-1]`.
    #[inline]
    fn integrand(&self, w: &[f64], scale: f64, y: &mut [f64]) -> f64 {
        let d = self.dim;
        let mut f = 1.0;
        for i in 0..d {
            let row = &self.chol[i * d..i * d + i];
            let shift: f64 = row.iter().zip(&y[..i]).map(|(l, y)| l * y).sum();
            let lo_lim = self.lower[i] * scale;
            let hi_lim = self.upper[i] * scale;
            if self.singular[i] {
                if shift < lo_lim || shift > hi_lim {
                    return 0.0;
                }
                y[i] = 0.0;
                continue;
            }
            let lo = normal::cdf(lo_lim - shift);
            let hi = normal::cdf(hi_lim - shift);
            let mass = hi - lo;
            if mass <= 0.0 {
                return 0.0;
            }
            f *= mass;
            if i + 1 < d {
                let u = (lo + w[i] * mass).clamp(1e-300, 1.0 - 1e-16);
                y[i] = normal::quantile_fast(u);
            }
        }
        f
    }
}

fn swap_variables(
    cov: &mut [f64],
    l: &mut [f64],
    a: &mut [f64],
    b: &mut [f64],
    d: usize,
    i: usize,
    j: usize,
) {
    a.swap(i, j);
    b.swap(i, j);
    for k in 0..d {
        cov.swap(i * d + k, j * d + k);
    }
    for k in 0..d {
        cov.swap(k * d + i, k * d + j);
    }
    for k in 0..i {
        l.swap(i * d + k, j * d + k);
    }
}

/// `P(lower <= X <= upper)` for `X = Z / S` (t case, `df` given) or
/// `X = Z` (normal case), `Z ~ N(0, sigma)`.
pub(crate) fn integrate(
    lower: &[f64],
    upper: &[f64],
    sigma: &CorrelationMatrix,
    df: Option<f64>,
    budget: &IntegrationBudget,
) -> Result<ProbResult> {
    let problem = Conditioned::new(lower, upper, sigma);
    let d = problem.dim;
    let chi: Option<std::sync::Arc<ChiScale>> = df.map(chi_scale);
    // One coordinate per conditioned variable except the last, plus the
    // chi scale for t.
    let qdim = d - 1 + usize::from(chi.is_some());
    let generators: Vec<f64> = PRIMES[..qdim].iter().map(|p| p.sqrt().fract()).collect();

    let shifts = budget.shifts.max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    let offsets: Vec<Vec<f64>> = (0..shifts)
        .map(|_| (0..qdim).map(|_| rng.random::<f64>()).collect())
        .collect();
    let t_factor = normal::t_quantile(0.995, (shifts - 1) as f64);

    let mut sums = vec![0.0; shifts];
    let mut points = 0usize;
    let mut batch = budget.initial_points.max(1);
    let mut y = vec![0.0; d];
    let mut w = vec![0.0; qdim];
    let mut w_anti = vec![0.0; qdim];

    let eval = |w: &[f64], y: &mut [f64]| -> f64 {
        match &chi {
            Some(table) => problem.integrand(&w[1..], table.at(w[0]), y),
            None => problem.integrand(w, 1.0, y),
        }
    };

    loop {
        for (offset, sum) in offsets.iter().zip(sums.iter_mut()) {
            for j in points + 1..=points + batch {
                let jf = j as f64;
                for k in 0..qdim {
                    let x = (jf * generators[k] + offset[k]).fract();
                    let tent = (2.0 * x - 1.0).abs();
                    w[k] = tent;
                    w_anti[k] = 1.0 - tent;
                }
                *sum += 0.5 * (eval(&w, &mut y) + eval(&w_anti, &mut y));
            }
        }
        points += batch;

        let n = points as f64;
        let estimates: Vec<f64> = sums.iter().map(|s| s / n).collect();
        let k = shifts as f64;
        let mean = estimates.iter().sum::<f64>() / k;
        let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (k - 1.0);
        let error = t_factor * (var / k).sqrt();
        let evaluations = 2 * points * shifts;
        let result = ProbResult {
            value: mean.clamp(0.0, 1.0),
            error,
            evaluations,
            method: Method::Qmc {
                shifts,
                points_per_shift: 2 * points,
                generator: GENERATOR,
            },
        };
        if error <= budget.abs_tol {
            return Ok(result);
        }
        if evaluations >= budget.max_evals {
            return Err(Error::BudgetExceeded { best: result });
        }
        batch = points;
    }
}

//! Multivariate normal and t probabilities.
//!
//! Dimension one is evaluated exactly, dimensions two and three (lower
//! orthants) by deterministic quadrature, and everything else by randomized
//! quasi-Monte Carlo with a 99% error bound. Results are reproducible bit for bit given the budget's
//! seed.

mod bivariate;
mod chi;
mod genz;
mod trivariate;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

pub use bivariate::{bvn_lower, bvn_upper, bvt_lower};

/// Symmetry tolerance for correlation matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Most negative eigenvalue accepted (and clipped) as rounding noise.
pub const EIGEN_CLIP: f64 = -1e-10;
/// Default absolute error target per probability.
pub const DEFAULT_ABS_TOL: f64 = 5e-6;

/// Integer degrees of freedom up to this bound use the closed-form
/// bivariate t series; larger or fractional values use the scale mixture.
const BVT_SERIES_MAX_DF: f64 = 5000.0;

/// A symmetric positive semidefinite matrix with unit diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl CorrelationMatrix {
    /// Validates a row-major `dim x dim` matrix.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Matrix("dimension must be at least 1".into()));
        }
        if data.len() != dim * dim {
            return Err(Error::Matrix(format!(
                "expected {} entries for dimension {dim}, got {}",
                dim * dim,
                data.len()
            )));
        }
        let mut data = data;
        for i in 0..dim {
            let d = data[i * dim + i];
            if (d - 1.0).abs() > SYMMETRY_TOL {
                return Err(Error::Matrix(format!("diagonal entry {i} is {d}, not 1")));
            }
            data[i * dim + i] = 1.0;
            for j in 0..i {
                let (a, b) = (data[i * dim + j], data[j * dim + i]);
                if !a.is_finite() || (a - b).abs() > SYMMETRY_TOL {
                    return Err(Error::Matrix(format!("entries ({i},{j}) = {a} and ({j},{i}) = {b} differ")));
                }
                if a.abs() > 1.0 + SYMMETRY_TOL {
                    return Err(Error::Matrix(format!("entry ({i},{j}) = {a} outside [-1, 1]")));
                }
                let avg = (0.5 * (a + b)).clamp(-1.0, 1.0);
                data[i * dim + j] = avg;
                data[j * dim + i] = avg;
            }
        }
        let out = Self { dim, data };
        if dim > 2 {
            let min = out.min_eigenvalue();
            if min < EIGEN_CLIP {
                return Err(Error::Matrix(format!(
                    "not positive semidefinite: smallest eigenvalue {min:.3e}"
                )));
            }
        }
        Ok(out)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Matrix("matrix rows must all have length equal to the row count".into()));
        }
        Self::new(dim, rows.concat())
    }

    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        Self { dim, data }
    }

    /// All off-diagonal entries equal to `rho`.
    pub fn equicorrelated(dim: usize, rho: f64) -> Result<Self> {
        let mut data = vec![rho; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    /// Principal submatrix on `idx`. A principal submatrix of a valid
    /// correlation matrix is valid, so no checks are repeated.
    pub fn sub(&self, idx: &[usize]) -> Self {
        let k = idx.len();
        let mut data = Vec::with_capacity(k * k);
        for &i in idx {
            for &j in idx {
                data.push(self.get(i, j));
            }
        }
        Self { dim: k, data }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let m = nalgebra::DMatrix::from_row_slice(self.dim, self.dim, &self.data);
        m.symmetric_eigenvalues().min()
    }

    /// Applies a permutation to rows and columns: entry `(i, j)` of the
    /// result is entry `(perm[i], perm[j])` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        self.sub(perm)
    }
}

/// Accuracy target and resource limits for one probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrationBudget {
    /// Target half-width of the 99% error bound.
    pub abs_tol: f64,
    /// Integrand evaluations after which the integrator gives up.
    pub max_evals: usize,
    /// Independent random shifts of the lattice.
    pub shifts: usize,
    /// Lattice points per shift in the first pass; doubled each pass.
    pub initial_points: usize,
    pub seed: u64,
}

impl Default for IntegrationBudget {
    fn default() -> Self {
        Self {
            abs_tol: DEFAULT_ABS_TOL,
            max_evals: 20_000_000,
            shifts: 10,
            initial_points: 64,
            seed: 0x5eed_0f_9a11,
        }
    }
}

impl IntegrationBudget {
    pub fn with_tol(abs_tol: f64) -> Self {
        Self {
            abs_tol,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// How a probability was evaluated.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Method {
    /// Closed form in one dimension or a trivial case.
    Exact,
    /// Deterministic quadrature in two dimensions.
    Quadrature,
    Qmc {
        shifts: usize,
        points_per_shift: usize,
        generator: &'static str,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbResult {
    pub value: f64,
    /// Half-width of a 99% bound on the integration error.
    pub error: f64,
    pub evaluations: usize,
    pub method: Method,
}

impl ProbResult {
    fn exact(value: f64) -> Self {
        Self {
            value: value.clamp(0.0, 1.0),
            error: 0.0,
            evaluations: 0,
            method: Method::Exact,
        }
    }

    fn quadrature(value: f64, evaluations: usize) -> Self {
        Self {
            value: value.clamp(0.0, 1.0),
            error: 1e-12,
            evaluations,
            method: Method::Quadrature,
        }
    }
}

impl From<trivariate::Outcome> for ProbResult {
    fn from(o: trivariate::Outcome) -> Self {
        Self {
            value: o.value,
            error: o.error,
            evaluations: o.evaluations,
            method: Method::Quadrature,
        }
    }
}

fn check_dims(n: usize, sigma: &CorrelationMatrix) -> Result<()> {
    if n != sigma.dim() {
        return Err(Error::Matrix(format!(
            "limits have dimension {n}, matrix has dimension {}",
            sigma.dim()
        )));
    }
    Ok(())
}

/// `P(Z <= upper)` componentwise for `Z ~ N(0, sigma)`.
pub fn mvn_cdf(upper: &[f64], sigma: &CorrelationMatrix, budget: &IntegrationBudget) -> Result<ProbResult> {
    let lower = vec![f64::NEG_INFINITY; upper.len()];
    mvn_rectangle(&lower, upper, sigma, budget)
}

/// `P(lower <= Z <= upper)` for `Z ~ N(0, sigma)`; infinite limits allowed.
pub fn mvn_rectangle(
    lower: &[f64],
    upper: &[f64],
    sigma: &CorrelationMatrix,
    budget: &IntegrationBudget,
) -> Result<ProbResult> {
    check_dims(lower.len(), sigma)?;
    check_dims(upper.len(), sigma)?;
    for (i, (a, b)) in lower.iter().zip(upper).enumerate() {
        if a.is_nan() || b.is_nan() || a > b {
            return Err(Error::config(format!("limits [{a}, {b}] of coordinate {i} are not ordered")));
        }
        if a == b {
            return Ok(ProbResult::exact(0.0));
        }
    }
    // Coordinates without constraints integrate out.
    let active: Vec<usize> = (0..lower.len())
        .filter(|&i| lower[i] > f64::NEG_INFINITY || upper[i] < f64::INFINITY)
        .collect();
    let a: Vec<f64> = active.iter().map(|&i| lower[i]).collect();
    let b: Vec<f64> = active.iter().map(|&i| upper[i]).collect();
    match active.len() {
        0 => Ok(ProbResult::exact(1.0)),
        1 => {
            let p = if a[0] > 0.0 {
                normal::sf(a[0]) - normal::sf(b[0])
            } else {
                normal::cdf(b[0]) - normal::cdf(a[0])
            };
            Ok(ProbResult::exact(p))
        }
        2 => {
            let r = sigma.get(active[0], active[1]);
            let p = bvn_lower(b[0], b[1], r) - bvn_lower(a[0], b[1], r) - bvn_lower(b[0], a[1], r)
                + bvn_lower(a[0], a[1], r);
            Ok(ProbResult::quadrature(p, 4))
        }
        3 if a.iter().all(|x| *x == f64::NEG_INFINITY) => {
            let sub = sigma.sub(&active);
            match trivariate::tvn(&b, &sub) {
                Some(o) => Ok(o.into()),
                None => genz::integrate(&a, &b, &sub, None, budget),
            }
        }
        _ => genz::integrate(&a, &b, &sigma.sub(&active), None, budget),
    }
}

/// `P(T <= upper)` componentwise for a central multivariate t with
/// correlation `sigma` and `df` degrees of freedom. Infinite `df` gives the
/// normal.
pub fn mvt_cdf(
    upper: &[f64],
    sigma: &CorrelationMatrix,
    df: f64,
    budget: &IntegrationBudget,
) -> Result<ProbResult> {
    if df.is_infinite() && df > 0.0 {
        return mvn_cdf(upper, sigma, budget);
    }
    if !(df > 0.0) {
        return Err(Error::config(format!("degrees of freedom {df} must be positive")));
    }
    check_dims(upper.len(), sigma)?;
    if upper.iter().any(|u| u.is_nan()) {
        return Err(Error::config("upper limit is NaN"));
    }
    if upper.contains(&f64::NEG_INFINITY) {
        return Ok(ProbResult::exact(0.0));
    }
    let active: Vec<usize> = (0..upper.len()).filter(|&i| upper[i] < f64::INFINITY).collect();
    let b: Vec<f64> = active.iter().map(|&i| upper[i]).collect();
    match active.len() {
        0 => Ok(ProbResult::exact(1.0)),
        1 => Ok(ProbResult::exact(normal::t_cdf(b[0], df))),
        2 => {
            let r = sigma.get(active[0], active[1]);
            if df.fract() == 0.0 && df <= BVT_SERIES_MAX_DF {
                Ok(ProbResult::quadrature(bvt_lower(df as u64, b[0], b[1], r), 1))
            } else {
                Ok(bvt_mixture(df, b[0], b[1], r))
            }
        }
        n => {
            let sub = sigma.sub(&active);
            if n == 3 && df.fract() == 0.0 && df < BVT_SERIES_MAX_DF {
                if let Some(o) = trivariate::tvt(df as u64, &b, &sub) {
                    return Ok(o.into());
                }
            }
            let lower = vec![f64::NEG_INFINITY; b.len()];
            genz::integrate(&lower, &b, &sub, Some(df), budget)
        }
    }
}

/// Bivariate t by integrating the bivariate normal against the chi scale,
/// with composite Gauss-Legendre over the normal score of the scale.
fn bvt_mixture(df: f64, h: f64, k: f64, r: f64) -> ProbResult {
    let table = chi::chi_scale(df);
    let (xs, ws) = crate::quad::gl20();
    let panels = 17;
    let (lo, hi) = (-8.5, 8.5);
    let width = (hi - lo) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = lo + (p as f64 + 0.5) * width;
        for (&x, &w) in xs.iter().zip(ws) {
            let z = mid + 0.5 * width * x;
            let s = table.at_score(z);
            total += 0.5 * width * w * normal::pdf(z) * bvn_lower(h * s, k * s, r);
        }
    }
    ProbResult::quadrature(total, panels * xs.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn univariate_reductions() {
        let s = CorrelationMatrix::identity(1);
        let p = mvn_cdf(&[1.959_964], &s, &IntegrationBudget::default()).unwrap();
        assert!((p.value - 0.975).abs() < 1e-6);
        let q = normal::t_quantile(0.975, 10.0);
        let t = mvt_cdf(&[q], &s, 10.0, &IntegrationBudget::default()).unwrap();
        assert!((t.value - 0.975).abs() < 1e-12);
    }

    #[test]
    fn rectangle_trivial_cases() {
        let s = CorrelationMatrix::equicorrelated(3, 0.3).unwrap();
        let b = IntegrationBudget::default();
        let same = mvn_rectangle(&[0.1, 0.2, 0.3], &[0.1, 1.0, 1.0], &s, &b).unwrap();
        assert_eq!(same.value, 0.0);
        let inf = vec![f64::INFINITY; 3];
        let ninf = vec![f64::NEG_INFINITY; 3];
        assert_eq!(mvn_rectangle(&ninf, &inf, &s, &b).unwrap().value, 1.0);
        let i2 = CorrelationMatrix::identity(2);
        let unit = mvn_rectangle(&[0.0, 0.0], &[1.0, 1.0], &i2, &b).unwrap();
        let want = (normal::cdf(1.0) - 0.5).powi(2);
        assert!((unit.value - want).abs() < 1e-14);
        assert!(mvn_rectangle(&[1.0, 0.0], &[0.0, 1.0], &i2, &b).is_err());
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(CorrelationMatrix::from_rows(&[vec![1.0, 0.5], vec![0.4, 1.0]]).is_err());
        assert!(CorrelationMatrix::from_rows(&[vec![1.1, 0.0], vec![0.0, 1.0]]).is_err());
        let not_psd = CorrelationMatrix::equicorrelated(3, -0.6);
        assert!(matches!(not_psd, Err(Error::Matrix(_))));
        assert!(CorrelationMatrix::equicorrelated(3, -0.5).is_ok());
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let s = CorrelationMatrix::identity(3);
        assert!(mvn_cdf(&[1.0, 1.0], &s, &IntegrationBudget::default()).is_err());
    }

    #[test]
    fn qmc_independent_product() {
        let s = CorrelationMatrix::identity(4);
        let c = 1.2;
        let r = mvn_cdf(&[c; 4], &s, &IntegrationBudget::default()).unwrap();
        assert!((r.value - normal::cdf(c).powi(4)).abs() < r.error.max(1e-9) + 1e-9);
        assert!(r.error <= DEFAULT_ABS_TOL);
        assert!(matches!(r.method, Method::Qmc { .. }));
    }

    #[test]
    fn qmc_equicorrelated_half_orthant() {
        // P(all Z_i <= 0) for 3 variables with rho = 1/2 is 1/4.
        let s = CorrelationMatrix::equicorrelated(3, 0.5).unwrap();
        let r = mvn_cdf(&[0.0; 3], &s, &IntegrationBudget::default()).unwrap();
        assert!((r.value - 0.25).abs() < 1e-5, "{}", r.value);
    }

    #[test]
    fn singular_matrix_collapses() {
        let s = CorrelationMatrix::equicorrelated(3, 1.0).unwrap();
        let r = mvn_cdf(&[1.0, 1.5, 2.0], &s, &IntegrationBudget::default()).unwrap();
        assert!((r.value - normal::cdf(1.0)).abs() < 1e-9, "{}", r.value);
    }

    #[test]
    fn reproducible_bit_for_bit() {
        let s = CorrelationMatrix::equicorrelated(5, 0.4).unwrap();
        let b = IntegrationBudget::default();
        let x = mvt_cdf(&[2.0; 5], &s, 12.0, &b).unwrap();
        let y = mvt_cdf(&[2.0; 5], &s, 12.0, &b).unwrap();
        assert_eq!(x.value.to_bits(), y.value.to_bits());
    }

    #[test]
    fn mixture_agrees_with_series() {
        for &(df, r) in &[(7.0, 0.3), (480.0, 0.6), (3.0, -0.5)] {
            let a = bvt_mixture(df, 1.9, 2.3, r).value;
            let b = bvt_lower(df as u64, 1.9, 2.3, r);
            assert!((a - b).abs() < 1e-9, "df={df}: {a} vs {b}");
        }
    }

    #[test]
    fn budget_exhaustion_reports_best_estimate() {
        let s = CorrelationMatrix::equicorrelated(6, 0.3).unwrap();
        let b = IntegrationBudget {
            abs_tol: 1e-15,
            max_evals: 10_000,
            ..IntegrationBudget::default()
        };
        match mvn_cdf(&[1.0; 6], &s, &b) {
            Err(Error::BudgetExceeded { best }) => {
                assert!(best.value > 0.0 && best.value < 1.0);
                assert!(best.evaluations >= 10_000);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }
}

//! Population-wise error rates and critical values controlling them.

use serde::Serialize;

use crate::design::DesignModel;
use crate::error::{Error, Result};
use crate::mvdist::{self, CorrelationMatrix, IntegrationBudget, ProbResult};
use crate::normal;
use crate::prevalence::min_prevalence_adjust;
use crate::strata::{PrevalenceVector, StrataIndex};

/// Rejection boundaries: one for all statistics or one per population.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Common(f64),
    PerPopulation(Vec<f64>),
}

impl Boundary {
    pub fn for_population(&self, i: usize) -> f64 {
        match self {
            Boundary::Common(c) => *c,
            Boundary::PerPopulation(c) => c[i],
        }
    }

    pub fn values(&self, m: usize) -> Vec<f64> {
        (0..m).map(|i| self.for_population(i)).collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StratumRate {
    pub stratum: StrataIndex,
    pub weight: f64,
    /// Probability that some hypothesis relevant to the stratum is rejected.
    pub swer: f64,
    pub error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ErrorRateReport {
    pub pwer: f64,
    /// Strata with positive weight, in mask order.
    pub strata: Vec<StratumRate>,
    pub max_swer: f64,
    pub mean_swer: f64,
    /// Weighted sum of the integration error bounds.
    pub numerical_error: f64,
}

impl ErrorRateReport {
    pub fn swer(&self, j: StrataIndex) -> Option<f64> {
        self.strata.iter().find(|r| r.stratum == j).map(|r| r.swer)
    }
}

/// Accuracy settings of the boundary search.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    /// Stop once `|PWER(c) - alpha|` is within this.
    pub pwer_tol: f64,
    /// Stop once the bracket is this narrow.
    pub boundary_tol: f64,
    pub max_iterations: usize,
    pub budget: IntegrationBudget,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            pwer_tol: 1e-6,
            boundary_tol: 1e-8,
            max_iterations: 200,
            budget: IntegrationBudget::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMode {
    Equal,
    PerPopulation,
    MinPrevalenceAdjusted,
}

/// One monotone root search.
#[derive(Clone, Debug, Serialize)]
pub struct RootSolve {
    pub boundary: f64,
    pub achieved: f64,
    pub iterations: usize,
    pub bracket: (f64, f64),
    pub numerical_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CriticalValueResult {
    pub mode: SolveMode,
    pub boundary: Boundary,
    /// Estimated error rate at the boundary. In per-population mode the
    /// value for the population whose condition is furthest from `alpha`.
    pub achieved: f64,
    pub alpha: f64,
    pub iterations: usize,
    pub bracket: (f64, f64),
    pub numerical_error: f64,
    /// Boundary from the unadjusted prevalences (adjusted mode).
    pub unadjusted: Option<f64>,
    /// Boundary from the minimal-prevalence adjusted weights (adjusted mode).
    pub adjusted: Option<f64>,
    /// Individual searches in per-population mode.
    pub populations: Vec<RootSolve>,
    /// Set when the distribution of the statistics is only approximate.
    pub approximate: bool,
}

impl CriticalValueResult {
    fn from_root(mode: SolveMode, root: RootSolve, alpha: f64, approximate: bool) -> Self {
        Self {
            mode,
            boundary: Boundary::Common(root.boundary),
            achieved: root.achieved,
            alpha,
            iterations: root.iterations,
            bracket: root.bracket,
            numerical_error: root.numerical_error,
            unadjusted: None,
            adjusted: None,
            populations: Vec::new(),
            approximate,
        }
    }

    /// The common boundary; panics in per-population mode.
    pub fn common(&self) -> f64 {
        match self.boundary {
            Boundary::Common(c) => c,
            Boundary::PerPopulation(_) => panic!("per-population boundary has no common value"),
        }
    }
}

/// Integration seed for one stratum, decorrelating the strata while
/// keeping the draws fixed across boundaries.
/// Loosest per-stratum tolerance, so individual SWERs stay meaningful.
const MAX_STRATUM_TOL: f64 = 1e-4;

/// Tolerance multiplier for the first evaluation at each bisection point.
const COARSE_FACTOR: f64 = 40.0;

fn stratum_seed(seed: u64, j: StrataIndex) -> u64 {
    seed ^ (j.mask() as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

struct Term {
    stratum: StrataIndex,
    weight: f64,
    members: Vec<usize>,
    sigma: CorrelationMatrix,
    df: f64,
    budget: IntegrationBudget,
}

/// Positive-weight strata with their correlation blocks, prepared once for
/// repeated evaluation.
struct Evaluator {
    terms: Vec<Term>,
}

impl Evaluator {
    fn new(prev: &PrevalenceVector, model: &DesignModel, df: Option<f64>, budget: &IntegrationBudget) -> Result<Self> {
        if prev.m() != model.m() {
            return Err(Error::config(format!(
                "prevalences are for m = {}, design for m = {}",
                prev.m(),
                model.m()
            )));
        }
        // Spread the weighted error target so that light strata get looser
        // tolerances: e_J proportional to w_J^(-1/3) keeps sum w_J e_J at the
        // target while roughly minimizing total QMC effort.
        let spread: f64 = prev.iter().map(|(_, w)| w.powf(2.0 / 3.0)).sum();
        let terms = prev
            .iter()
            .filter(|&(_, w)| w > 0.0)
            .map(|(j, w)| {
                let tol = (budget.abs_tol / (w.cbrt() * spread)).min(MAX_STRATUM_TOL.max(budget.abs_tol));
                Term {
                    stratum: j,
                    weight: w,
                    members: j.member_vec(),
                    sigma: model.sigma_of(j),
                    df: df.unwrap_or_else(|| model.df().stratum(j)),
                    budget: IntegrationBudget {
                        abs_tol: tol,
                        ..budget.clone().with_seed(stratum_seed(budget.seed, j))
                    },
                }
            })
            .collect();
        Ok(Self { terms })
    }

    fn swer(term: &Term, bounds: &[f64], loosen: f64) -> Result<ProbResult> {
        let upper: Vec<f64> = term.members.iter().map(|&i| bounds[i]).collect();
        let coarse;
        let budget = if loosen == 1.0 {
            &term.budget
        } else {
            coarse = IntegrationBudget {
                abs_tol: term.budget.abs_tol * loosen,
                ..term.budget.clone()
            };
            &coarse
        };
        let p = if term.df.is_infinite() {
            mvdist::mvn_cdf(&upper, &term.sigma, budget)?
        } else {
            mvdist::mvt_cdf(&upper, &term.sigma, term.df, budget)?
        };
        Ok(ProbResult {
            value: (1.0 - p.value).clamp(0.0, 1.0),
            ..p
        })
    }

    fn report(&self, bounds: &[f64]) -> Result<ErrorRateReport> {
        let mut strata = Vec::with_capacity(self.terms.len());
        for term in &self.terms {
            let r = Self::swer(term, bounds, 1.0)?;
            strata.push(StratumRate {
                stratum: term.stratum,
                weight: term.weight,
                swer: r.value,
                error: r.error,
            });
        }
        let pwer = strata.iter().map(|r| r.weight * r.swer).sum::<f64>().clamp(0.0, 1.0);
        let numerical_error = strata.iter().map(|r| r.weight * r.error).sum();
        let max_swer = strata.iter().map(|r| r.swer).fold(0.0, f64::max);
        let mean_swer = if strata.is_empty() {
            0.0
        } else {
            strata.iter().map(|r| r.swer).sum::<f64>() / strata.len() as f64
        };
        Ok(ErrorRateReport {
            pwer,
            strata,
            max_swer,
            mean_swer,
            numerical_error,
        })
    }

    fn pwer(&self, c: f64, m: usize) -> Result<(f64, f64)> {
        self.pwer_with(c, m, 1.0)
    }

    /// Rate at `c`, first at a loose tolerance and again at the full one
    /// only when the loose bound cannot tell which side of `alpha` it is.
    fn pwer_near(&self, c: f64, m: usize, alpha: f64) -> Result<(f64, f64)> {
        let coarse = self.pwer_with(c, m, COARSE_FACTOR)?;
        if (coarse.0 - alpha).abs() > coarse.1 {
            Ok(coarse)
        } else {
            self.pwer(c, m)
        }
    }

    fn pwer_with(&self, c: f64, m: usize, loosen: f64) -> Result<(f64, f64)> {
        let bounds = vec![c; m];
        let mut pwer = 0.0;
        let mut err = 0.0;
        for term in &self.terms {
            let r = Self::swer(term, &bounds, loosen)?;
            pwer += term.weight * r.value;
            err += term.weight * r.error;
        }
        Ok((pwer, err))
    }

    /// True when every weighted stratum is a single population with the
    /// same degrees of freedom, so the rate is one univariate tail.
    fn univariate_df(&self) -> Option<f64> {
        let df = self.terms.first()?.df;
        self.terms
            .iter()
            .all(|t| t.members.len() == 1 && t.df.to_bits() == df.to_bits())
            .then_some(df)
    }

    fn df_range(&self) -> (f64, f64) {
        self.terms
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), t| (lo.min(t.df), hi.max(t.df)))
    }

    fn max_dim(&self) -> usize {
        self.terms.iter().map(|t| t.members.len()).max().unwrap_or(1)
    }
}

/// PWER, strata-wise FWERs and their summaries at `boundary`.
pub fn error_rates(
    boundary: &Boundary,
    prev: &PrevalenceVector,
    model: &DesignModel,
    budget: &IntegrationBudget,
) -> Result<ErrorRateReport> {
    let bounds = boundary.values(model.m());
    if let Some(c) = bounds.iter().find(|c| c.is_nan()) {
        return Err(Error::config(format!("boundary {c} is not a number")));
    }
    Evaluator::new(prev, model, None, budget)?.report(&bounds)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 0.5 {
        Ok(())
    } else {
        Err(Error::config(format!("alpha = {alpha} must lie in (0, 0.5]")))
    }
}

fn t_or_normal_quantile(p: f64, df: f64) -> f64 {
    if df.is_infinite() {
        normal::quantile(p)
    } else {
        normal::t_quantile(p, df)
    }
}

fn solve_root(eval: &Evaluator, m: usize, alpha: f64, opts: &SolverOptions) -> Result<RootSolve> {
    if eval.terms.is_empty() {
        return Err(Error::config("prevalence vector puts no weight on any stratum"));
    }
    if let Some(df) = eval.univariate_df() {
        let c = t_or_normal_quantile(1.0 - alpha, df);
        let (achieved, err) = eval.pwer(c, m)?;
        return Ok(RootSolve {
            boundary: c,
            achieved,
            iterations: 0,
            bracket: (c, c),
            numerical_error: err,
        });
    }

    // The rate lies between the marginal tail and the Boole bound, which
    // pins the root between the two quantiles below.
    let (df_lo, df_hi) = eval.df_range();
    let k = eval.max_dim() as f64;
    let mut lo = t_or_normal_quantile(1.0 - alpha, df_hi) - 1e-6;
    let mut hi = t_or_normal_quantile(1.0 - alpha / k, df_lo) + 1e-6;
    let mut f_lo = eval.pwer_near(lo, m, alpha)?;
    let mut f_hi = eval.pwer_near(hi, m, alpha)?;
    let mut iterations = 2;
    if f_lo.0 < alpha || f_hi.0 > alpha {
        lo = 0.0;
        hi = 12.0;
        f_lo = eval.pwer_near(lo, m, alpha)?;
        f_hi = eval.pwer_near(hi, m, alpha)?;
        iterations += 2;
        while f_hi.0 > alpha && iterations < opts.max_iterations {
            lo = hi;
            f_lo = f_hi;
            hi *= 2.0;
            f_hi = eval.pwer_near(hi, m, alpha)?;
            iterations += 1;
        }
        while f_lo.0 < alpha && iterations < opts.max_iterations {
            hi = lo;
            f_hi = f_lo;
            lo -= 4.0;
            f_lo = eval.pwer_near(lo, m, alpha)?;
            iterations += 1;
        }
        if f_lo.0 < alpha || f_hi.0 > alpha {
            return Err(Error::Solver {
                message: format!(
                    "could not bracket alpha = {alpha}: rate {} at {lo}, {} at {hi}",
                    f_lo.0, f_hi.0
                ),
                lo,
                hi,
                iterations,
            });
        }
    }

    let mut best = if (f_lo.0 - alpha).abs() <= (f_hi.0 - alpha).abs() {
        (lo, f_lo)
    } else {
        (hi, f_hi)
    };
    while iterations < opts.max_iterations {
        if (best.1 .0 - alpha).abs() <= opts.pwer_tol || hi - lo <= opts.boundary_tol {
            return Ok(RootSolve {
                boundary: best.0,
                achieved: best.1 .0,
                iterations,
                bracket: (lo, hi),
                numerical_error: best.1 .1,
            });
        }
        let mid = 0.5 * (lo + hi);
        let f_mid = eval.pwer_near(mid, m, alpha)?;
        iterations += 1;
        if f_mid.0 > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
        if (f_mid.0 - alpha).abs() < (best.1 .0 - alpha).abs() || hi - lo <= opts.boundary_tol {
            best = (mid, f_mid);
        }
    }
    Err(Error::Solver {
        message: format!("no convergence after {iterations} evaluations"),
        lo,
        hi,
        iterations,
    })
}

/// Smallest common boundary whose estimated PWER under `prev` is `alpha`.
pub fn solve_equal(
    prev: &PrevalenceVector,
    model: &DesignModel,
    alpha: f64,
    opts: &SolverOptions,
) -> Result<CriticalValueResult> {
    check_alpha(alpha)?;
    let eval = Evaluator::new(prev, model, None, &opts.budget)?;
    let root = solve_root(&eval, model.m(), alpha, opts)?;
    Ok(CriticalValueResult::from_root(
        SolveMode::Equal,
        root,
        alpha,
        model.is_approximate(),
    ))
}

/// Larger of the boundaries from `prev_hat` and from its minimal-prevalence
/// adjustment.
pub fn solve_min_adjusted(
    prev_hat: &PrevalenceVector,
    model: &DesignModel,
    alpha: f64,
    pi_min: Option<f64>,
    opts: &SolverOptions,
) -> Result<CriticalValueResult> {
    let adjusted = min_prevalence_adjust(prev_hat, pi_min)?.prevalence;
    solve_max_of(prev_hat, &adjusted, model, alpha, opts)
}

/// Larger of the boundaries solved from two prevalence vectors.
pub fn solve_max_of(
    base: &PrevalenceVector,
    adjusted: &PrevalenceVector,
    model: &DesignModel,
    alpha: f64,
    opts: &SolverOptions,
) -> Result<CriticalValueResult> {
    let plain = solve_equal(base, model, alpha, opts)?;
    let adj = if adjusted == base {
        plain.clone()
    } else {
        solve_equal(adjusted, model, alpha, opts)?
    };
    let (c_hat, c_min) = (plain.common(), adj.common());
    let mut out = if c_min > c_hat { adj } else { plain };
    out.mode = SolveMode::MinPrevalenceAdjusted;
    out.unadjusted = Some(c_hat);
    out.adjusted = Some(c_min);
    Ok(out)
}

/// Population-specific boundaries: `c_i` solves the estimated-PWER
/// condition with every stratum evaluated at population `i`'s degrees of
/// freedom.
pub fn solve_per_population(
    prev_hat: &PrevalenceVector,
    model: &DesignModel,
    alpha: f64,
    opts: &SolverOptions,
) -> Result<CriticalValueResult> {
    check_alpha(alpha)?;
    let m = model.m();
    let mut roots: Vec<RootSolve> = Vec::with_capacity(m);
    for i in 0..m {
        let df = model.df().population(i);
        // Populations sharing degrees of freedom share the root.
        let earlier = (0..i).find(|&k| model.df().population(k).to_bits() == df.to_bits());
        let root = match earlier {
            Some(k) => roots[k].clone(),
            None => {
                let eval = Evaluator::new(prev_hat, model, Some(df), &opts.budget)?;
                solve_root(&eval, m, alpha, opts)?
            }
        };
        roots.push(root);
    }
    let worst = roots
        .iter()
        .max_by(|a, b| (a.achieved - alpha).abs().total_cmp(&(b.achieved - alpha).abs()))
        .expect("at least one population");
    Ok(CriticalValueResult {
        mode: SolveMode::PerPopulation,
        boundary: Boundary::PerPopulation(roots.iter().map(|r| r.boundary).collect()),
        achieved: worst.achieved,
        alpha,
        iterations: roots.iter().map(|r| r.iterations).sum(),
        bracket: worst.bracket,
        numerical_error: roots.iter().map(|r| r.numerical_error).fold(0.0, f64::max),
        unadjusted: None,
        adjusted: None,
        populations: roots,
        approximate: model.is_approximate(),
    })
}

/// Estimated PWER condition for population `i` at boundary `c`; the
/// left-hand side solved by [`solve_per_population`].
pub fn per_population_rate(
    prev_hat: &PrevalenceVector,
    model: &DesignModel,
    i: usize,
    c: f64,
    budget: &IntegrationBudget,
) -> Result<f64> {
    let eval = Evaluator::new(prev_hat, model, Some(model.df().population(i)), budget)?;
    Ok(eval.pwer(c, model.m())?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::{allocate, Stratified};
    use crate::design::{build_model, PooledVariance, VarianceRegime};
    use crate::mvdist::bvn_lower;
    use crate::strata::{CountTable, TreatmentStructure};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const AD: TreatmentStructure = TreatmentStructure::AllDifferent;
    const Q975: f64 = 1.959_963_984_540_054;

    fn model(m: usize, n: Vec<u64>, regime: VarianceRegime) -> DesignModel {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let counts = allocate(&CountTable::from_strata(m, AD, n).unwrap(), &Stratified, &mut rng);
        build_model(&counts, &regime, AD).unwrap()
    }

    fn known() -> VarianceRegime {
        VarianceRegime::KnownHomogeneous { sigma2: 1.0 }
    }

    #[test]
    fn univariate_rates() {
        let md = model(1, vec![50], known());
        let prev = PrevalenceVector::new(1, vec![1.0]).unwrap();
        let r = error_rates(&Boundary::Common(Q975), &prev, &md, &IntegrationBudget::default()).unwrap();
        assert!((r.pwer - 0.025).abs() < 1e-15);
        let far = error_rates(&Boundary::Common(40.0), &prev, &md, &IntegrationBudget::default()).unwrap();
        assert_eq!(far.pwer, 0.0);
        let s = solve_equal(&prev, &md, 0.025, &SolverOptions::default()).unwrap();
        assert!((s.common() - Q975).abs() < 1e-14);
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn disjoint_strata_are_single_tests() {
        let md = model(2, vec![40, 40, 0], known());
        let prev = PrevalenceVector::new(2, vec![0.5, 0.5, 0.0]).unwrap();
        let r = error_rates(&Boundary::Common(Q975), &prev, &md, &IntegrationBudget::default()).unwrap();
        assert!((r.pwer - 0.025).abs() < 1e-15);
        assert_eq!(r.strata.len(), 2);
    }

    #[test]
    fn bivariate_boundary_matches_quadrature_oracle() {
        // Single shared stratum with correlation 1/2.
        let md = model(2, vec![0, 0, 30], known());
        let prev = PrevalenceVector::new(2, vec![0.0, 0.0, 1.0]).unwrap();
        let s = solve_equal(&prev, &md, 0.025, &SolverOptions::default()).unwrap();
        let c = s.common();
        // Independent oracle: Simpson over the conditional normal.
        let oracle = |c: f64| {
            let rho: f64 = 0.5;
            let n = 4000;
            let (a, b) = (-9.0, c);
            let h = (b - a) / n as f64;
            let f = |x: f64| normal::pdf(x) * normal::cdf((c - rho * x) / (1.0 - rho * rho).sqrt());
            let mut s = f(a) + f(b);
            for k in 1..n {
                s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
            }
            1.0 - s * h / 3.0
        };
        assert!((oracle(c) - 0.025).abs() < 1e-6, "{}", oracle(c));
        assert!((1.0 - bvn_lower(c, c, 0.5) - s.achieved).abs() < 1e-12);
    }

    #[test]
    fn perfect_correlation_collapses() {
        // Identical statistics: both populations share every patient and the
        // treatment arm is one cell.
        let counts = CountTable::from_cells(
            2,
            TreatmentStructure::SingleTreatment,
            &[
                (StrataIndex::from_members(&[1, 2], 2).unwrap(), crate::strata::Treatment::Control, 20),
                (StrataIndex::from_members(&[1, 2], 2).unwrap(), crate::strata::Treatment::Arm(0), 20),
            ],
        )
        .unwrap();
        let md = build_model(&counts, &known(), TreatmentStructure::SingleTreatment).unwrap();
        assert_eq!(md.sigma().get(0, 1), 1.0);
        let prev = PrevalenceVector::new(2, vec![0.0, 0.0, 1.0]).unwrap();
        let s = solve_equal(&prev, &md, 0.025, &SolverOptions::default()).unwrap();
        assert!((s.common() - Q975).abs() < 1e-5, "{}", s.common());
    }

    #[test]
    fn round_trip_and_antitone() {
        let md = model(3, vec![30, 25, 20, 18, 22, 15, 40], known());
        let prev = PrevalenceVector::from_unnormalized(3, vec![3.0, 2.5, 2.0, 1.8, 2.2, 1.5, 4.0]).unwrap();
        let opts = SolverOptions::default();
        let a = solve_equal(&prev, &md, 0.025, &opts).unwrap();
        let b = solve_equal(&prev, &md, 0.01, &opts).unwrap();
        assert!(b.common() > a.common());
        let r = error_rates(&a.boundary, &prev, &md, &opts.budget).unwrap();
        assert!((r.pwer - 0.025).abs() <= 2e-6 + r.numerical_error, "{}", r.pwer);
        assert!(r.pwer <= r.max_swer);
        for s in &r.strata {
            assert!(s.swer <= s.stratum.len() as f64 * normal::sf(a.common()) + s.error + 1e-12);
        }
    }

    #[test]
    fn rates_decrease_in_boundary() {
        let md = model(3, vec![30, 25, 20, 18, 22, 15, 40], VarianceRegime::UnknownHomogeneous(PooledVariance { sigma2: 1.0, s: 19, df: 151.0 }));
        let prev = PrevalenceVector::from_unnormalized(3, vec![1.0; 7]).unwrap();
        let b = IntegrationBudget::default();
        let mut last = (1.0, 0.0);
        for k in 0..30 {
            let c = 1.5 + 0.05 * k as f64;
            let r = error_rates(&Boundary::Common(c), &prev, &md, &b).unwrap();
            assert!(r.pwer < last.0 + last.1 + r.numerical_error);
            last = (r.pwer, r.numerical_error);
        }
    }

    #[test]
    fn adjusted_solver_takes_the_maximum() {
        let md = model(2, vec![60, 40, 0], known());
        let prev = PrevalenceVector::new(2, vec![0.6, 0.4, 0.0]).unwrap();
        let opts = SolverOptions::default();
        let s = solve_min_adjusted(&prev, &md, 0.025, None, &opts).unwrap();
        let (c_hat, c_min) = (s.unadjusted.unwrap(), s.adjusted.unwrap());
        assert!((c_hat - Q975).abs() < 1e-14);
        assert_eq!(s.common(), c_hat.max(c_min));
        let adj = PrevalenceVector::new(2, vec![0.5, 1.0 / 3.0, 1.0 / 6.0]).unwrap();
        let direct = solve_equal(&adj, &md, 0.025, &opts).unwrap();
        assert!((direct.common() - c_min).abs() < 1e-12);
        // Nothing below pi_min: the adjustment is inert.
        let flat = PrevalenceVector::new(2, vec![0.3, 0.3, 0.4]).unwrap();
        let md2 = model(2, vec![30, 30, 40], known());
        let same = solve_min_adjusted(&flat, &md2, 0.025, None, &opts).unwrap();
        assert_eq!(same.unadjusted, same.adjusted);
    }

    #[test]
    fn bad_alpha_is_config_error() {
        let md = model(1, vec![10], known());
        let prev = PrevalenceVector::new(1, vec![1.0]).unwrap();
        for a in [0.0, 0.6, f64::NAN] {
            assert!(matches!(
                solve_equal(&prev, &md, a, &SolverOptions::default()),
                Err(Error::Config(_))
            ));
        }
    }
}

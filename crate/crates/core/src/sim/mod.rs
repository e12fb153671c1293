//! Simulation scenarios: draw a trial, estimate prevalences, solve the
//! boundary and score it against the true prevalences.

mod data;
mod summary;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::{allocate, AllocationPolicy, AllocationRegistry};
use crate::control::{self, Boundary, SolverOptions};
use crate::design::{build_model, CellSummary, DesignModel, PooledVariance, VarianceRegime};
use crate::error::{Error, Result};
use crate::mvdist::CorrelationMatrix;
use crate::prevalence::{
    default_pi_min, min_prevalence_adjust, Estimate, Marginal, MarginalDenominator, Mle, MleMinPrevalence,
    PrevalenceEstimator,
};
use crate::strata::{
    sample_counts, strata_probabilities_with, BiomarkerModel, CellValues, CountTable, Dependence, PrevalenceVector,
    StrataIndex, Treatment, TreatmentStructure,
};

pub use data::{mc_true_pwer, DataSpec, McEstimate, StatisticKind};
pub use summary::{quantile_sorted, summarize_values, SummaryStats};

/// How the biomarker expression probabilities arise in each replicate.
#[derive(Clone, Debug, PartialEq)]
pub enum BiomarkerMode {
    Fixed(Vec<f64>),
    /// Independent uniform draws on `[low, high]` per replicate.
    UniformRandom { low: f64, high: f64 },
    /// Uniform draws as above, linked through a Gaussian copula.
    CorrelatedRandom { low: f64, high: f64, r: CorrelationMatrix },
    /// Uniform draws, after which `stratum` gets prevalence `value` and the
    /// other strata share the rest in proportion.
    OnePrevalencePinned { value: f64, stratum: StrataIndex },
}

impl BiomarkerMode {
    pub fn uniform() -> Self {
        BiomarkerMode::UniformRandom { low: 0.0, high: 1.0 }
    }
}

/// Per-cell variances, fixed or drawn per replicate.
#[derive(Clone, Debug, PartialEq)]
pub enum CellVariances {
    Fixed(CellValues<f64>),
    Uniform { low: f64, high: f64 },
}

/// The variance setting of a scenario. Unknown regimes estimate the
/// variances from simulated responses.
#[derive(Clone, Debug, PartialEq)]
pub enum VarianceSpec {
    KnownHomogeneous { sigma2: f64 },
    UnknownHomogeneous { sigma2: f64 },
    KnownHeterogeneous(CellVariances),
    UnknownHeterogeneous(CellVariances),
}

impl VarianceSpec {
    pub fn name(&self) -> &'static str {
        match self {
            VarianceSpec::KnownHomogeneous { .. } => "known-homogeneous",
            VarianceSpec::UnknownHomogeneous { .. } => "unknown-homogeneous",
            VarianceSpec::KnownHeterogeneous(_) => "known-heterogeneous",
            VarianceSpec::UnknownHeterogeneous(_) => "unknown-heterogeneous",
        }
    }

    fn statistic(&self) -> StatisticKind {
        match self {
            VarianceSpec::KnownHomogeneous { .. } | VarianceSpec::KnownHeterogeneous(_) => StatisticKind::Known,
            VarianceSpec::UnknownHomogeneous { .. } => StatisticKind::PooledT,
            VarianceSpec::UnknownHeterogeneous(_) => StatisticKind::Welch,
        }
    }
}

/// Prevalence estimator used for the boundary.
#[derive(Clone, Debug, PartialEq)]
pub enum EstimatorChoice {
    Mle,
    Marginal(MarginalDenominator),
    /// `None` uses half the equal-split weight.
    MleWithMinPrevalence(Option<f64>),
}

impl EstimatorChoice {
    pub fn build(&self) -> Arc<dyn PrevalenceEstimator> {
        match self {
            EstimatorChoice::Mle => Arc::new(Mle),
            EstimatorChoice::Marginal(d) => Arc::new(Marginal { denominator: *d }),
            EstimatorChoice::MleWithMinPrevalence(p) => Arc::new(MleMinPrevalence { pi_min: *p }),
        }
    }

    fn needs_screening_count(&self) -> bool {
        matches!(self, EstimatorChoice::Marginal(_))
    }
}

#[derive(Clone, Debug)]
pub struct ScenarioSpec {
    pub m: usize,
    pub n: u64,
    pub replicates: usize,
    pub alpha: f64,
    pub biomarkers: BiomarkerMode,
    /// Applies to `Fixed`, `UniformRandom` and `OnePrevalencePinned`.
    pub dependence: Dependence,
    pub variance: VarianceSpec,
    pub structure: TreatmentStructure,
    /// Name in the standard allocation registry.
    pub allocation: String,
    pub estimator: EstimatorChoice,
    /// True cell means; `None` is the global null.
    pub effects: Option<CellValues<f64>>,
    /// Data replicates behind each Monte Carlo error rate.
    pub data_replicates: usize,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl ScenarioSpec {
    /// Defaults of the main simulation: uniform probabilities, independent
    /// biomarkers, t statistics, pairwise different treatments, stratified
    /// allocation, MLE, 10,000 replicates.
    pub fn new(m: usize, n: u64) -> Self {
        Self {
            m,
            n,
            replicates: 10_000,
            alpha: 0.025,
            biomarkers: BiomarkerMode::uniform(),
            dependence: Dependence::Independent,
            variance: VarianceSpec::UnknownHomogeneous { sigma2: 1.0 },
            structure: TreatmentStructure::AllDifferent,
            allocation: "stratified".into(),
            estimator: EstimatorChoice::Mle,
            effects: None,
            data_replicates: 10_000,
            seed: 1,
            solver: SolverOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        crate::strata::enumerate_strata(self.m)?;
        if self.n == 0 {
            return Err(Error::config("N must be positive"));
        }
        if self.replicates == 0 {
            return Err(Error::config("replicates must be at least 1"));
        }
        if self.data_replicates == 0 {
            return Err(Error::config("data replicates must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 0.5) {
            return Err(Error::config(format!("alpha = {} must lie in (0, 0.5]", self.alpha)));
        }
        match &self.biomarkers {
            BiomarkerMode::Fixed(p) => {
                if p.len() != self.m {
                    return Err(Error::config(format!("{} probabilities for m = {}", p.len(), self.m)));
                }
                BiomarkerModel::new(p.clone(), self.dependence.clone())?;
            }
            BiomarkerMode::UniformRandom { low, high } | BiomarkerMode::CorrelatedRandom { low, high, .. } => {
                if !(0.0 <= *low && low <= high && *high <= 1.0 && *high > 0.0) {
                    return Err(Error::config(format!("probability range [{low}, {high}] is invalid")));
                }
                if let BiomarkerMode::CorrelatedRandom { r, .. } = &self.biomarkers {
                    if r.dim() != self.m {
                        return Err(Error::config("copula dimension differs from m"));
                    }
                }
            }
            BiomarkerMode::OnePrevalencePinned { value, stratum } => {
                if !(*value > 0.0 && *value < 1.0) {
                    return Err(Error::config(format!("pinned prevalence {value} must lie in (0, 1)")));
                }
                StrataIndex::new(stratum.mask(), self.m)?;
            }
        }
        if let Dependence::GaussianCopula(r) = &self.dependence {
            if r.dim() != self.m {
                return Err(Error::config("copula dimension differs from m"));
            }
        }
        match &self.variance {
            VarianceSpec::KnownHomogeneous { sigma2 } | VarianceSpec::UnknownHomogeneous { sigma2 } => {
                if !(*sigma2 > 0.0 && sigma2.is_finite()) {
                    return Err(Error::config(format!("sigma2 = {sigma2} must be positive")));
                }
            }
            VarianceSpec::KnownHeterogeneous(v) | VarianceSpec::UnknownHeterogeneous(v) => match v {
                CellVariances::Fixed(values) => {
                    if values.m() != self.m || values.structure() != self.structure {
                        return Err(Error::config("cell variances do not match m and the treatment structure"));
                    }
                    if let Some((j, t, x)) = values.iter().find(|(_, _, x)| !(**x > 0.0 && x.is_finite())) {
                        return Err(Error::config(format!("variance {x} of cell {j}/{t} must be positive")));
                    }
                }
                CellVariances::Uniform { low, high } => {
                    if !(*low > 0.0 && low <= high && high.is_finite()) {
                        return Err(Error::config(format!("variance range [{low}, {high}] is invalid")));
                    }
                }
            },
        }
        if let Some(e) = &self.effects {
            if e.m() != self.m || e.structure() != self.structure {
                return Err(Error::config("effects do not match m and the treatment structure"));
            }
        }
        AllocationRegistry::standard().get(&self.allocation)?;
        if let EstimatorChoice::MleWithMinPrevalence(Some(p)) = self.estimator {
            if !(0.0..1.0 / crate::strata::strata_count(self.m) as f64).contains(&p) {
                return Err(Error::config(format!("pi_min = {p} must lie in [0, 1/K)")));
            }
        }
        Ok(())
    }

    fn data_spec(&self, variances: CellValues<f64>) -> DataSpec {
        let means = self
            .effects
            .clone()
            .unwrap_or_else(|| CellValues::filled(self.m, self.structure, 0.0));
        DataSpec { variances, means }
    }

    fn is_null(&self) -> bool {
        self.effects
            .as_ref()
            .is_none_or(|e| e.iter().all(|(_, _, &x)| x == 0.0))
    }
}

/// How the true error rates of a replicate were obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RateMethod {
    /// Multivariate normal or t integral with the true prevalences.
    Formula,
    /// Response-level simulation with the given standard error.
    MonteCarlo { se: f64 },
}

/// Outcome of one successful replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub replicate: usize,
    pub true_pwer: f64,
    pub max_swer: f64,
    pub mean_swer: f64,
    /// One boundary per population.
    pub boundary: Vec<f64>,
    /// Estimated PWER at the boundary.
    pub estimated_pwer: f64,
    pub counts_digest: String,
    pub had_empty_stratum: bool,
    pub method: RateMethod,
}

/// A replicate that produced no record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepFailure {
    pub replicate: usize,
    pub reason: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ScenarioOutcome {
    pub records: Vec<RepRecord>,
    pub failures: Vec<RepFailure>,
}

impl ScenarioOutcome {
    /// Number of failed replicates per reason.
    pub fn failure_counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for f in &self.failures {
            *out.entry(f.reason.clone()).or_insert(0) += 1;
        }
        out
    }
}

/// Short, stable label for a replicate-level failure.
pub fn failure_reason(e: &Error) -> &'static str {
    match e {
        Error::Config(_) => "config",
        Error::DegenerateModel(_) => "degenerate-model",
        Error::EmptySample => "empty-sample",
        Error::InfeasibleAdjustment { .. } => "infeasible-adjustment",
        Error::Matrix(_) => "matrix",
        Error::BudgetExceeded { .. } => "integration-budget",
        Error::UndefinedStatistic { .. } => "undefined-statistic",
        Error::VarianceInestimable(_) => "variance-inestimable",
        Error::Solver { .. } => "solver",
        Error::Specification(_) => "specification",
    }
}

/// Independent random stream of one replicate.
pub fn replicate_rng(seed: u64, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    rng
}

/// A drawn trial: true prevalences, allocated counts and the model of the
/// statistics.
pub struct Trial {
    pub truth: PrevalenceVector,
    pub counts: CountTable,
    pub model: DesignModel,
    pub data: DataSpec,
    pub estimate: Estimate,
}

/// True strata prevalences and the expression probabilities behind them.
fn draw_probabilities(spec: &ScenarioSpec, rng: &mut dyn RngCore) -> Result<(PrevalenceVector, BiomarkerModel)> {
    let uniform = |rng: &mut dyn RngCore, low: f64, high: f64| -> Vec<f64> {
        (0..spec.m)
            .map(|_| if high > low { rng.random_range(low..high) } else { low })
            .collect()
    };
    let budget = spec.solver.budget.clone();
    let model = match &spec.biomarkers {
        BiomarkerMode::Fixed(p) => BiomarkerModel::new(p.clone(), spec.dependence.clone())?,
        BiomarkerMode::UniformRandom { low, high } => {
            BiomarkerModel::new(uniform(rng, *low, *high), spec.dependence.clone())?
        }
        BiomarkerMode::CorrelatedRandom { low, high, r } => {
            BiomarkerModel::new(uniform(rng, *low, *high), Dependence::GaussianCopula(r.clone()))?
        }
        BiomarkerMode::OnePrevalencePinned { .. } => BiomarkerModel::new(uniform(rng, 0.0, 1.0), spec.dependence.clone())?,
    };
    let base = strata_probabilities_with(&model, &budget)?;
    let truth = match &spec.biomarkers {
        BiomarkerMode::OnePrevalencePinned { value, stratum } => {
            let rest = 1.0 - base.get(*stratum);
            if rest <= 0.0 {
                return Err(Error::DegenerateModel("all mass sits in the pinned stratum".into()));
            }
            let weights = base
                .iter()
                .map(|(j, w)| if j == *stratum { *value } else { w * (1.0 - value) / rest })
                .collect();
            PrevalenceVector::from_unnormalized(spec.m, weights)?
        }
        _ => base,
    };
    Ok((truth, model))
}

/// Biomarker-free patients screened before `n` eligible ones enrol: a
/// negative binomial draw via its gamma-Poisson mixture.
fn screened_empty(n: u64, none_probability: f64, rng: &mut dyn RngCore) -> u64 {
    if none_probability <= 0.0 {
        return 0;
    }
    let scale = none_probability / (1.0 - none_probability).max(1e-300);
    let lambda = Gamma::new(n as f64, scale).expect("positive shape and scale").sample(rng);
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).map(|p| p.sample(rng) as u64).unwrap_or(u64::MAX)
}

fn true_variances(spec: &ScenarioSpec, rng: &mut dyn RngCore) -> CellValues<f64> {
    let (m, s) = (spec.m, spec.structure);
    match &spec.variance {
        VarianceSpec::KnownHomogeneous { sigma2 } | VarianceSpec::UnknownHomogeneous { sigma2 } => {
            CellValues::filled(m, s, *sigma2)
        }
        VarianceSpec::KnownHeterogeneous(v) | VarianceSpec::UnknownHeterogeneous(v) => match v {
            CellVariances::Fixed(values) => values.clone(),
            CellVariances::Uniform { low, high } => data::random_variances(m, s, *low, *high, rng),
        },
    }
}

/// Draws one trial and its estimated quantities.
pub fn draw_trial(spec: &ScenarioSpec, rng: &mut dyn RngCore) -> Result<Trial> {
    let (truth, biomarkers) = draw_probabilities(spec, rng)?;
    let mut counts = sample_counts(&truth, spec.n, spec.structure, rng);
    if spec.estimator.needs_screening_count() {
        let q0 = biomarkers.none_probability()?;
        counts = counts.with_empty_count(screened_empty(spec.n, q0, rng));
    }
    let policy: Arc<dyn AllocationPolicy> = AllocationRegistry::standard().get(&spec.allocation)?;
    let counts = allocate(&counts, policy.as_ref(), rng);
    let variances = true_variances(spec, rng);
    let data = spec.data_spec(variances);
    let regime = match &spec.variance {
        VarianceSpec::KnownHomogeneous { sigma2 } => VarianceRegime::KnownHomogeneous { sigma2: *sigma2 },
        VarianceSpec::KnownHeterogeneous(_) => VarianceRegime::KnownHeterogeneous {
            variances: data.variances.clone(),
        },
        VarianceSpec::UnknownHomogeneous { sigma2 } => {
            // The correlations do not depend on the pooled estimate; only
            // its degrees of freedom enter.
            let s = counts.cells().filter(|c| c.2 > 1).count();
            let df = counts.total() as f64 - s as f64;
            if s == 0 || df < 1.0 {
                return Err(Error::VarianceInestimable(format!("N - s = {df} with s = {s}")));
            }
            VarianceRegime::UnknownHomogeneous(PooledVariance { sigma2: *sigma2, s, df })
        }
        VarianceSpec::UnknownHeterogeneous(_) => {
            let mut draws = data::CellDraws::new(&counts);
            draws.draw(rng);
            let cells: CellValues<CellSummary> = draws.summaries(&data);
            VarianceRegime::UnknownHeterogeneous { cells }
        }
    };
    let model = build_model(&counts, &regime, spec.structure)?;
    let estimate = spec.estimator.build().estimate(&counts)?;
    Ok(Trial {
        truth,
        counts,
        model,
        data,
        estimate,
    })
}

/// Boundary from the estimated prevalences of a trial.
pub fn solve_trial(spec: &ScenarioSpec, trial: &Trial) -> Result<control::CriticalValueResult> {
    let base = &trial.estimate.base;
    if trial.model.is_approximate() {
        let prev = trial.estimate.adjusted.as_ref().unwrap_or(base);
        return control::solve_per_population(prev, &trial.model, spec.alpha, &spec.solver);
    }
    match &trial.estimate.adjusted {
        Some(adj) => control::solve_max_of(base, adj, &trial.model, spec.alpha, &spec.solver),
        None => control::solve_equal(base, &trial.model, spec.alpha, &spec.solver),
    }
}

struct Rates {
    pwer: f64,
    max_swer: f64,
    mean_swer: f64,
    method: RateMethod,
}

fn true_rates(spec: &ScenarioSpec, trial: &Trial, boundary: &Boundary, rng: &mut dyn RngCore) -> Result<Rates> {
    if trial.model.is_approximate() || !spec.is_null() {
        let mc = mc_true_pwer(
            &trial.counts,
            spec.variance.statistic(),
            boundary,
            &trial.truth,
            &trial.data,
            spec.data_replicates,
            rng,
        )?;
        return Ok(Rates {
            pwer: mc.pwer,
            max_swer: mc.max_swer,
            mean_swer: mc.mean_swer,
            method: RateMethod::MonteCarlo { se: mc.se },
        });
    }
    let r = control::error_rates(boundary, &trial.truth, &trial.model, &spec.solver.budget)?;
    Ok(Rates {
        pwer: r.pwer,
        max_swer: r.max_swer,
        mean_swer: r.mean_swer,
        method: RateMethod::Formula,
    })
}

fn run_replicate(spec: &ScenarioSpec, replicate: usize) -> Result<RepRecord> {
    let mut rng = replicate_rng(spec.seed, replicate);
    let trial = draw_trial(spec, &mut rng)?;
    let solved = solve_trial(spec, &trial)?;
    let rates = true_rates(spec, &trial, &solved.boundary, &mut rng)?;
    Ok(RepRecord {
        replicate,
        true_pwer: rates.pwer,
        max_swer: rates.max_swer,
        mean_swer: rates.mean_swer,
        boundary: solved.boundary.values(spec.m),
        estimated_pwer: solved.achieved,
        counts_digest: trial.counts.digest(),
        had_empty_stratum: trial.counts.per_stratum().contains(&0),
        method: rates.method,
    })
}

/// Runs every replicate of `spec`. Records come back in replicate order
/// and do not depend on the number of threads.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<ScenarioOutcome> {
    spec.validate()?;
    let results: Vec<(usize, Result<RepRecord>)> = (0..spec.replicates)
        .into_par_iter()
        .map(|r| (r, run_replicate(spec, r)))
        .collect();
    let mut out = ScenarioOutcome::default();
    for (replicate, result) in results {
        match result {
            Ok(rec) => out.records.push(rec),
            Err(e) => out.failures.push(RepFailure {
                replicate,
                reason: failure_reason(&e).into(),
                message: e.to_string(),
            }),
        }
    }
    Ok(out)
}

/// Quantities of a replicate record that can be summarized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    TruePwer,
    MaxSwer,
    MeanSwer,
    EstimatedPwer,
    /// Boundary of the first population.
    Boundary,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::TruePwer,
        Metric::MaxSwer,
        Metric::MeanSwer,
        Metric::EstimatedPwer,
        Metric::Boundary,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::TruePwer => "true_pwer",
            Metric::MaxSwer => "max_swer",
            Metric::MeanSwer => "mean_swer",
            Metric::EstimatedPwer => "estimated_pwer",
            Metric::Boundary => "boundary",
        }
    }

    pub fn of(self, r: &RepRecord) -> f64 {
        match self {
            Metric::TruePwer => r.true_pwer,
            Metric::MaxSwer => r.max_swer,
            Metric::MeanSwer => r.mean_swer,
            Metric::EstimatedPwer => r.estimated_pwer,
            Metric::Boundary => r.boundary[0],
        }
    }
}

pub fn summarize(records: &[RepRecord], metric: Metric) -> Result<SummaryStats> {
    let values: Vec<f64> = records.iter().map(|r| metric.of(r)).collect();
    summarize_values(&values)
}

/// Empirical PWER of one design with and without the effects.
#[derive(Clone, Debug, Serialize)]
pub struct LfcComparison {
    pub replicate: usize,
    pub boundary: Vec<f64>,
    pub pwer_effects: f64,
    pub pwer_null: f64,
    pub difference: f64,
    /// Standard error of the paired difference.
    pub se: f64,
    /// Difference above three standard errors.
    pub violation: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct LfcReport {
    pub comparisons: Vec<LfcComparison>,
    pub violations: usize,
    pub failures: Vec<RepFailure>,
}

/// Compares the empirical PWER under `spec.effects` with the global null
/// on each of `spec.replicates` designs, using the same response draws for
/// both.
pub fn lfc_check(spec: &ScenarioSpec) -> Result<LfcReport> {
    spec.validate()?;
    let effects = spec
        .effects
        .as_ref()
        .ok_or_else(|| Error::Specification("the check needs effects".into()))?;
    for j in crate::strata::enumerate_strata(spec.m)? {
        let control_mean = *effects.get(j, Treatment::Control);
        for t in spec.structure.eligible(j) {
            let theta = effects.get(j, t) - control_mean;
            if t != Treatment::Control && theta > 0.0 {
                return Err(Error::Specification(format!(
                    "effect {theta} of cell {j}/{t} is positive; the check needs effects <= 0"
                )));
            }
        }
    }
    let null_spec = ScenarioSpec {
        effects: None,
        ..spec.clone()
    };
    let results: Vec<(usize, Result<LfcComparison>)> = (0..spec.replicates)
        .into_par_iter()
        .map(|r| (r, lfc_replicate(spec, &null_spec, r)))
        .collect();
    let mut report = LfcReport {
        comparisons: Vec::new(),
        violations: 0,
        failures: Vec::new(),
    };
    for (replicate, res) in results {
        match res {
            Ok(c) => {
                report.violations += usize::from(c.violation);
                report.comparisons.push(c);
            }
            Err(e) => report.failures.push(RepFailure {
                replicate,
                reason: failure_reason(&e).into(),
                message: e.to_string(),
            }),
        }
    }
    Ok(report)
}

fn lfc_replicate(spec: &ScenarioSpec, null_spec: &ScenarioSpec, replicate: usize) -> Result<LfcComparison> {
    let mut rng = replicate_rng(spec.seed, replicate);
    let trial = draw_trial(null_spec, &mut rng)?;
    let solved = solve_trial(null_spec, &trial)?;
    let bounds = solved.boundary.values(spec.m);
    let kind = spec.variance.statistic();
    let with_effects = spec.data_spec(trial.data.variances.clone());
    let nulls_effects = data::true_nulls(&trial.counts, &with_effects)?;
    let nulls_zero = vec![true; spec.m];
    let mut draws = data::CellDraws::new(&trial.counts);
    let mut tally_e = data::Tally::new(&trial.truth);
    let mut tally_0 = data::Tally::new(&trial.truth);
    let (mut sum_d, mut sum_d2) = (0.0, 0.0);
    for _ in 0..spec.data_replicates {
        draws.draw(&mut rng);
        let s_e = data::statistics(&trial.counts, kind, &with_effects, &draws.summaries(&with_effects))?;
        let s_0 = data::statistics(&trial.counts, kind, &trial.data, &draws.summaries(&trial.data))?;
        let d = tally_e.add(&s_e, &bounds, &nulls_effects) - tally_0.add(&s_0, &bounds, &nulls_zero);
        sum_d += d;
        sum_d2 += d * d;
    }
    let n = spec.data_replicates as f64;
    let (e, z) = (tally_e.finish(), tally_0.finish());
    let mean_d = sum_d / n;
    let var_d = if n > 1.0 {
        ((sum_d2 - n * mean_d * mean_d) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    let se = (var_d / n).sqrt();
    Ok(LfcComparison {
        replicate,
        boundary: bounds,
        pwer_effects: e.pwer,
        pwer_null: z.pwer,
        difference: e.pwer - z.pwer,
        se,
        violation: e.pwer - z.pwer > 3.0 * se,
    })
}

/// Error rates of one boundary in the empty-stratum study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRates {
    pub boundary: f64,
    pub true_pwer: f64,
    pub max_swer: f64,
    pub mean_swer: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedRecord {
    pub replicate: usize,
    pub empty_strata: usize,
    pub unadjusted: BoundaryRates,
    pub adjusted: BoundaryRates,
    pub counts_digest: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct EmptyStratumStudy {
    pub pi_min: f64,
    pub records: Vec<PairedRecord>,
    /// Replicates without an empty stratum, left out.
    pub skipped: usize,
    pub failures: Vec<RepFailure>,
}

impl EmptyStratumStudy {
    pub fn summarize(&self, adjusted: bool, metric: fn(&BoundaryRates) -> f64) -> Result<SummaryStats> {
        let values: Vec<f64> = self
            .records
            .iter()
            .map(|r| metric(if adjusted { &r.adjusted } else { &r.unadjusted }))
            .collect();
        summarize_values(&values)
    }
}

/// Replicates with at least one unobserved stratum, scored under the MLE
/// boundary and under the boundary from minimal-prevalence weights.
pub fn empty_stratum_study(spec: &ScenarioSpec, pi_min: Option<f64>) -> Result<EmptyStratumStudy> {
    spec.validate()?;
    let high = match &spec.biomarkers {
        BiomarkerMode::UniformRandom { high, .. } | BiomarkerMode::CorrelatedRandom { high, .. } => *high,
        BiomarkerMode::Fixed(p) => p.iter().copied().fold(0.0, f64::max),
        BiomarkerMode::OnePrevalencePinned { .. } => 1.0,
    };
    if high > 0.1 {
        return Err(Error::config(format!(
            "the study expects biomarker probabilities below 0.1, got up to {high}"
        )));
    }
    if matches!(spec.variance, VarianceSpec::UnknownHeterogeneous(_)) {
        return Err(Error::config("the study needs a regime with an exact error-rate formula"));
    }
    let pi = pi_min.unwrap_or_else(|| default_pi_min(spec.m));
    let mle_spec = ScenarioSpec {
        estimator: EstimatorChoice::Mle,
        effects: None,
        ..spec.clone()
    };
    let results: Vec<(usize, Result<Option<PairedRecord>>)> = (0..spec.replicates)
        .into_par_iter()
        .map(|r| (r, paired_replicate(&mle_spec, pi, r)))
        .collect();
    let mut study = EmptyStratumStudy {
        pi_min: pi,
        records: Vec::new(),
        skipped: 0,
        failures: Vec::new(),
    };
    for (replicate, res) in results {
        match res {
            Ok(Some(rec)) => study.records.push(rec),
            Ok(None) => study.skipped += 1,
            Err(e) => study.failures.push(RepFailure {
                replicate,
                reason: failure_reason(&e).into(),
                message: e.to_string(),
            }),
        }
    }
    if study.records.is_empty() {
        return Err(Error::config(format!(
            "none of {} replicates had an empty stratum; increase the replicate count",
            spec.replicates
        )));
    }
    Ok(study)
}

fn paired_replicate(spec: &ScenarioSpec, pi_min: f64, replicate: usize) -> Result<Option<PairedRecord>> {
    let mut rng = replicate_rng(spec.seed, replicate);
    let trial = draw_trial(spec, &mut rng)?;
    let empty = trial.counts.per_stratum().iter().filter(|&&n| n == 0).count();
    if empty == 0 {
        return Ok(None);
    }
    let adjusted = min_prevalence_adjust(&trial.estimate.base, Some(pi_min))?.prevalence;
    let rates = |prev: &PrevalenceVector| -> Result<BoundaryRates> {
        let c = control::solve_equal(prev, &trial.model, spec.alpha, &spec.solver)?.common();
        let r = control::error_rates(&Boundary::Common(c), &trial.truth, &trial.model, &spec.solver.budget)?;
        Ok(BoundaryRates {
            boundary: c,
            true_pwer: r.pwer,
            max_swer: r.max_swer,
            mean_swer: r.mean_swer,
        })
    };
    Ok(Some(PairedRecord {
        replicate,
        empty_strata: empty,
        unadjusted: rates(&trial.estimate.base)?,
        adjusted: rates(&adjusted)?,
        counts_digest: trial.counts.digest(),
    }))
}

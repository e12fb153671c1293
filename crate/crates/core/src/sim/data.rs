//! Response-level Monte Carlo: cell means and variances are drawn from
//! their sampling distributions, the statistics recomputed and compared
//! with the boundaries.

use rand::{Rng, RngCore};
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::control::Boundary;
use crate::design::{mean_differences, pooled_variance, CellSummary};
use crate::error::{Error, Result};
use crate::strata::{CellValues, CountTable, PrevalenceVector, StrataIndex, Treatment};

/// Which statistic is recomputed in every data replicate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatisticKind {
    /// `Z_i`: mean difference over its true standard error.
    Known,
    /// `T_i`: pooled residual variance over all cells.
    PooledT,
    /// `T*_i`: population-level variances per arm.
    Welch,
}

/// True response distribution per cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub variances: CellValues<f64>,
    pub means: CellValues<f64>,
}

impl DataSpec {
    pub fn null(variances: CellValues<f64>) -> Self {
        let means = CellValues::filled(variances.m(), variances.structure(), 0.0);
        Self { variances, means }
    }
}

/// Empirical population-wise error rate.
#[derive(Clone, Debug, Serialize)]
pub struct McEstimate {
    pub pwer: f64,
    pub se: f64,
    pub reps: usize,
    /// Rejection frequency of each positive-weight stratum, in mask order.
    pub strata: Vec<(StrataIndex, f64)>,
    pub max_swer: f64,
    pub mean_swer: f64,
}

/// Standard normal and chi-square draws for every populated cell, shared
/// between effect configurations.
pub(crate) struct CellDraws {
    cells: Vec<(StrataIndex, Treatment, u64)>,
    z: Vec<f64>,
    chi: Vec<f64>,
}

impl CellDraws {
    pub(crate) fn new(counts: &CountTable) -> Self {
        let cells: Vec<_> = counts.cells().filter(|c| c.2 > 0).collect();
        let k = cells.len();
        Self {
            cells,
            z: vec![0.0; k],
            chi: vec![f64::NAN; k],
        }
    }

    pub(crate) fn draw(&mut self, rng: &mut dyn RngCore) {
        for (idx, &(_, _, n)) in self.cells.iter().enumerate() {
            self.z[idx] = StandardNormal.sample(rng);
            self.chi[idx] = if n > 1 {
                let dof = (n - 1) as f64;
                ChiSquared::new(dof).expect("positive degrees of freedom").sample(rng) / dof
            } else {
                f64::NAN
            };
        }
    }

    pub(crate) fn summaries(&self, data: &DataSpec) -> CellValues<CellSummary> {
        let mut out = CellValues::filled(data.variances.m(), data.variances.structure(), CellSummary::EMPTY);
        for (idx, &(j, t, n)) in self.cells.iter().enumerate() {
            let var = *data.variances.get(j, t);
            let mean = *data.means.get(j, t) + (var / n as f64).sqrt() * self.z[idx];
            out.set(j, t, CellSummary { n, mean, var: var * self.chi[idx] });
        }
        out
    }
}

/// Statistics of one data replicate.
pub(crate) fn statistics(
    counts: &CountTable,
    kind: StatisticKind,
    data: &DataSpec,
    cells: &CellValues<CellSummary>,
) -> Result<Vec<f64>> {
    let structure = counts.structure();
    let m = counts.m();
    let means = CellValues::from_fn(m, structure, f64::NAN, |j, t| cells.get(j, t).mean);
    let diff = mean_differences(counts, structure, &means)?;
    let n_arm = |i: usize, t: Treatment| counts.population_count(i, t) as f64;
    let se: Vec<f64> = match kind {
        StatisticKind::Known => (0..m)
            .map(|i| {
                let t = structure.arm_of(i);
                let (nt, nc) = (n_arm(i, t), n_arm(i, Treatment::Control));
                counts
                    .strata()
                    .filter(|j| j.contains(i))
                    .map(|j| {
                        counts.n_cell(j, t) as f64 * data.variances.get(j, t) / (nt * nt)
                            + counts.n_cell(j, Treatment::Control) as f64
                                * data.variances.get(j, Treatment::Control)
                                / (nc * nc)
                    })
                    .sum::<f64>()
                    .sqrt()
            })
            .collect(),
        StatisticKind::PooledT => {
            let pooled = pooled_variance(cells.iter().map(|(_, _, c)| c))?;
            (0..m)
                .map(|i| {
                    let t = structure.arm_of(i);
                    (pooled.sigma2 * (1.0 / n_arm(i, t) + 1.0 / n_arm(i, Treatment::Control))).sqrt()
                })
                .collect()
        }
        StatisticKind::Welch => (0..m)
            .map(|i| {
                let pop = |t: Treatment| {
                    CellSummary::combine(counts.strata().filter(|j| j.contains(i)).map(|j| cells.get(j, t)))
                };
                let (tr, ct) = (pop(structure.arm_of(i)), pop(Treatment::Control));
                (tr.var / tr.n as f64 + ct.var / ct.n as f64).sqrt()
            })
            .collect(),
    };
    Ok(diff.iter().zip(&se).map(|(d, s)| d / s).collect())
}

/// Hypotheses that are true under `data`: population mean difference <= 0.
pub(crate) fn true_nulls(counts: &CountTable, data: &DataSpec) -> Result<Vec<bool>> {
    Ok(mean_differences(counts, counts.structure(), &data.means)?
        .iter()
        .map(|&d| d <= 0.0)
        .collect())
}

pub(crate) struct Tally {
    strata: Vec<(StrataIndex, f64)>,
    hits: Vec<u64>,
    sum: f64,
    sum_sq: f64,
    reps: usize,
}

impl Tally {
    pub(crate) fn new(truth: &PrevalenceVector) -> Self {
        let strata: Vec<(StrataIndex, f64)> = truth.iter().filter(|&(_, w)| w > 0.0).collect();
        let k = strata.len();
        Self {
            strata,
            hits: vec![0; k],
            sum: 0.0,
            sum_sq: 0.0,
            reps: 0,
        }
    }

    /// Records one replicate; returns its weighted rejection indicator.
    pub(crate) fn add(&mut self, stats: &[f64], bounds: &[f64], nulls: &[bool]) -> f64 {
        let mut x = 0.0;
        for (k, &(j, w)) in self.strata.iter().enumerate() {
            if j.members().any(|i| nulls[i] && stats[i] > bounds[i]) {
                self.hits[k] += 1;
                x += w;
            }
        }
        self.sum += x;
        self.sum_sq += x * x;
        self.reps += 1;
        x
    }

    pub(crate) fn finish(self) -> McEstimate {
        let n = self.reps as f64;
        let pwer = self.sum / n;
        let var = if self.reps > 1 {
            ((self.sum_sq - n * pwer * pwer) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        let strata: Vec<(StrataIndex, f64)> = self
            .strata
            .iter()
            .zip(&self.hits)
            .map(|(&(j, _), &h)| (j, h as f64 / n))
            .collect();
        let max_swer = strata.iter().map(|s| s.1).fold(0.0, f64::max);
        let mean_swer = strata.iter().map(|s| s.1).sum::<f64>() / strata.len().max(1) as f64;
        McEstimate {
            pwer,
            se: (var / n).sqrt(),
            reps: self.reps,
            strata,
            max_swer,
            mean_swer,
        }
    }
}

/// `sum_J pi_J * (share of replicates rejecting some true H_j, j in J)`
/// with its Monte Carlo standard error.
pub fn mc_true_pwer(
    counts: &CountTable,
    kind: StatisticKind,
    boundary: &Boundary,
    truth: &PrevalenceVector,
    data: &DataSpec,
    reps: usize,
    rng: &mut dyn RngCore,
) -> Result<McEstimate> {
    if reps == 0 {
        return Err(Error::config("at least one data replicate is needed"));
    }
    if truth.m() != counts.m() || data.variances.m() != counts.m() || data.means.m() != counts.m() {
        return Err(Error::config("prevalences, data and counts disagree on m"));
    }
    let bounds = boundary.values(counts.m());
    let nulls = true_nulls(counts, data)?;
    let mut draws = CellDraws::new(counts);
    let mut tally = Tally::new(truth);
    for _ in 0..reps {
        draws.draw(rng);
        let stats = statistics(counts, kind, data, &draws.summaries(data))?;
        tally.add(&stats, &bounds, &nulls);
    }
    Ok(tally.finish())
}

/// Uniform random cell variances on `[low, high]`.
pub(crate) fn random_variances(
    m: usize,
    structure: crate::strata::TreatmentStructure,
    low: f64,
    high: f64,
    rng: &mut dyn RngCore,
) -> CellValues<f64> {
    CellValues::from_fn(m, structure, f64::NAN, |_, _| {
        if high > low {
            rng.random_range(low..=high)
        } else {
            low
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::{allocate, Stratified};
    use crate::control::error_rates;
    use crate::design::{build_model, VarianceRegime};
    use crate::mvdist::IntegrationBudget;
    use crate::strata::TreatmentStructure;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn design() -> (CountTable, PrevalenceVector) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let counts = allocate(
            &CountTable::from_strata(2, TreatmentStructure::AllDifferent, vec![40, 30, 30]).unwrap(),
            &Stratified,
            &mut rng,
        );
        let truth = PrevalenceVector::new(2, vec![0.4, 0.3, 0.3]).unwrap();
        (counts, truth)
    }

    #[test]
    fn infinite_boundary_never_rejects() {
        let (counts, truth) = design();
        let data = DataSpec::null(CellValues::filled(2, TreatmentStructure::AllDifferent, 1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let est = mc_true_pwer(
            &counts,
            StatisticKind::Welch,
            &Boundary::Common(f64::INFINITY),
            &truth,
            &data,
            200,
            &mut rng,
        )
        .unwrap();
        assert_eq!(est.pwer, 0.0);
        assert_eq!(est.se, 0.0);
    }

    #[test]
    fn known_variance_agrees_with_formula() {
        let (counts, truth) = design();
        let variances = CellValues::from_fn(2, TreatmentStructure::AllDifferent, 1.0, |j, _| 0.5 + j.mask() as f64 * 0.4);
        let model = build_model(
            &counts,
            &VarianceRegime::KnownHeterogeneous {
                variances: variances.clone(),
            },
            TreatmentStructure::AllDifferent,
        )
        .unwrap();
        let boundary = Boundary::Common(1.8);
        let exact = error_rates(&boundary, &truth, &model, &IntegrationBudget::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mc = mc_true_pwer(
            &counts,
            StatisticKind::Known,
            &boundary,
            &truth,
            &DataSpec::null(variances),
            40_000,
            &mut rng,
        )
        .unwrap();
        assert!((mc.pwer - exact.pwer).abs() < 3.0 * mc.se, "{} vs {} (se {})", mc.pwer, exact.pwer, mc.se);
    }

    #[test]
    fn pooled_t_matches_t_formula() {
        let (counts, truth) = design();
        let cells = counts.cells().filter(|c| c.2 > 1).count();
        let pooled = crate::design::PooledVariance {
            sigma2: 1.0,
            s: cells,
            df: counts.total() as f64 - cells as f64,
        };
        let model = build_model(&counts, &VarianceRegime::UnknownHomogeneous(pooled), TreatmentStructure::AllDifferent).unwrap();
        let boundary = Boundary::Common(1.9);
        let exact = error_rates(&boundary, &truth, &model, &IntegrationBudget::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let data = DataSpec::null(CellValues::filled(2, TreatmentStructure::AllDifferent, 2.0));
        let mc = mc_true_pwer(&counts, StatisticKind::PooledT, &boundary, &truth, &data, 40_000, &mut rng).unwrap();
        assert!((mc.pwer - exact.pwer).abs() < 3.0 * mc.se, "{} vs {}", mc.pwer, exact.pwer);
    }

    #[test]
    fn false_nulls_are_not_errors() {
        let (counts, truth) = design();
        let mut data = DataSpec::null(CellValues::filled(2, TreatmentStructure::AllDifferent, 1.0));
        for j in counts.strata() {
            data.means.set(j, Treatment::Arm(0), 5.0);
            data.means.set(j, Treatment::Arm(1), 5.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let est = mc_true_pwer(&counts, StatisticKind::Known, &Boundary::Common(0.0), &truth, &data, 100, &mut rng).unwrap();
        assert_eq!(est.pwer, 0.0);
    }
}

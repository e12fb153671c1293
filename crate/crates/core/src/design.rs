//! Joint null distribution of the population test statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mvdist::CorrelationMatrix;
use crate::strata::{CellValues, CountTable, StrataIndex, Treatment, TreatmentStructure};

/// Size, mean and sample variance of the responses in one cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub n: u64,
    pub mean: f64,
    /// Sample variance with divisor `n - 1`; `NaN` when `n < 2`.
    pub var: f64,
}

impl CellSummary {
    pub const EMPTY: CellSummary = CellSummary {
        n: 0,
        mean: f64::NAN,
        var: f64::NAN,
    };

    pub fn from_samples(x: &[f64]) -> Self {
        let n = x.len();
        if n == 0 {
            return Self::EMPTY;
        }
        let mean = x.iter().sum::<f64>() / n as f64;
        let var = if n < 2 {
            f64::NAN
        } else {
            x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        };
        Self { n: n as u64, mean, var }
    }

    /// Merges cells into one sample via the sum-of-squares decomposition.
    pub fn combine<'a>(cells: impl IntoIterator<Item = &'a CellSummary>) -> Self {
        let cells: Vec<&CellSummary> = cells.into_iter().filter(|c| c.n > 0).collect();
        let n: u64 = cells.iter().map(|c| c.n).sum();
        if n == 0 {
            return Self::EMPTY;
        }
        let mean = cells.iter().map(|c| c.n as f64 * c.mean).sum::<f64>() / n as f64;
        if n < 2 {
            return Self { n, mean, var: f64::NAN };
        }
        let ss: f64 = cells
            .iter()
            .map(|c| {
                let within = if c.n > 1 { (c.n - 1) as f64 * c.var } else { 0.0 };
                within + c.n as f64 * (c.mean - mean).powi(2)
            })
            .sum();
        Self {
            n,
            mean,
            var: ss / (n - 1) as f64,
        }
    }
}

/// Pooled residual variance with its degrees of freedom.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PooledVariance {
    pub sigma2: f64,
    /// Cells with more than one observation.
    pub s: usize,
    pub df: f64,
}

/// `sum (n - 1) s^2 / (N - s)` over cells with `n > 1`; singletons add to
/// `N` only.
pub fn pooled_variance<'a>(cells: impl IntoIterator<Item = &'a CellSummary>) -> Result<PooledVariance> {
    let mut total = 0u64;
    let mut s = 0usize;
    let mut ss = 0.0;
    for c in cells {
        total += c.n;
        if c.n > 1 {
            s += 1;
            ss += (c.n - 1) as f64 * c.var;
        }
    }
    if s == 0 {
        return Err(Error::VarianceInestimable(
            "no cell has two or more observations".into(),
        ));
    }
    let df = total as f64 - s as f64;
    if df < 1.0 {
        return Err(Error::VarianceInestimable(format!("N - s = {df} is below 1")));
    }
    Ok(PooledVariance {
        sigma2: ss / df,
        s,
        df,
    })
}

/// Welch-Satterthwaite degrees of freedom for a difference of two means.
pub fn satterthwaite_df(var_t: f64, n_t: u64, var_c: f64, n_c: u64) -> Result<f64> {
    if n_t < 2 || n_c < 2 {
        return Err(Error::VarianceInestimable(format!(
            "Satterthwaite degrees of freedom need two observations per arm, got {n_t} and {n_c}"
        )));
    }
    if !(var_t >= 0.0 && var_c >= 0.0) || var_t + var_c == 0.0 {
        return Err(Error::VarianceInestimable(format!(
            "variances {var_t} and {var_c} must be nonnegative and not both zero"
        )));
    }
    let a = var_t / n_t as f64;
    let b = var_c / n_c as f64;
    Ok((a + b).powi(2) / (a * a / (n_t - 1) as f64 + b * b / (n_c - 1) as f64))
}

/// What is known about the residual variances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceRegime {
    KnownHomogeneous { sigma2: f64 },
    KnownHeterogeneous { variances: CellValues<f64> },
    UnknownHomogeneous(PooledVariance),
    /// Per-cell sample summaries; the resulting model is an approximation.
    UnknownHeterogeneous { cells: CellValues<CellSummary> },
}

impl VarianceRegime {
    pub fn name(&self) -> &'static str {
        match self {
            VarianceRegime::KnownHomogeneous { .. } => "known-homogeneous",
            VarianceRegime::KnownHeterogeneous { .. } => "known-heterogeneous",
            VarianceRegime::UnknownHomogeneous(_) => "unknown-homogeneous",
            VarianceRegime::UnknownHeterogeneous { .. } => "unknown-heterogeneous",
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        matches!(
            self,
            VarianceRegime::KnownHomogeneous { .. } | VarianceRegime::UnknownHomogeneous(_)
        )
    }
}

/// Distribution family of the statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DfModel {
    Gaussian,
    /// Multivariate t with common degrees of freedom.
    Pooled(f64),
    /// Approximate t with population-specific degrees of freedom.
    PerPopulation(Vec<f64>),
}

impl DfModel {
    /// Degrees of freedom used for population `i` (infinite for Gaussian).
    pub fn population(&self, i: usize) -> f64 {
        match self {
            DfModel::Gaussian => f64::INFINITY,
            DfModel::Pooled(df) => *df,
            DfModel::PerPopulation(df) => df[i],
        }
    }

    /// Degrees of freedom for the joint law of the populations in `j` under
    /// a common boundary: the smallest among them.
    pub fn stratum(&self, j: StrataIndex) -> f64 {
        j.members().map(|i| self.population(i)).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug)]
pub struct DesignModel {
    m: usize,
    counts: CountTable,
    structure: TreatmentStructure,
    regime: VarianceRegime,
    /// Cell variances used for `V_i` and the correlations.
    cell_var: CellValues<f64>,
    v: Vec<f64>,
    h: Option<Vec<f64>>,
    sigma: CorrelationMatrix,
    df: DfModel,
}

impl DesignModel {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn counts(&self) -> &CountTable {
        &self.counts
    }

    pub fn structure(&self) -> TreatmentStructure {
        self.structure
    }

    pub fn regime(&self) -> &VarianceRegime {
        &self.regime
    }

    /// `Var(mu_hat_T - mu_hat_C)` per population.
    pub fn v(&self) -> &[f64] {
        &self.v
    }

    /// `1/n_T + 1/n_C` per population, for homogeneous regimes.
    pub fn h(&self) -> Option<&[f64]> {
        self.h.as_deref()
    }

    pub fn sigma(&self) -> &CorrelationMatrix {
        &self.sigma
    }

    pub fn df(&self) -> &DfModel {
        &self.df
    }

    pub fn cell_variances(&self) -> &CellValues<f64> {
        &self.cell_var
    }

    /// True when the distribution is only an approximation.
    pub fn is_approximate(&self) -> bool {
        matches!(self.regime, VarianceRegime::UnknownHeterogeneous { .. })
    }

    /// Correlation submatrix of the populations in `j`.
    pub fn sigma_of(&self, j: StrataIndex) -> CorrelationMatrix {
        self.sigma.sub(&j.member_vec())
    }
}

fn check_cells<T: Clone>(m: usize, structure: TreatmentStructure, cells: &CellValues<T>) -> Result<()> {
    if cells.m() != m || cells.structure() != structure {
        return Err(Error::config(format!(
            "cell table is for m = {} ({:?}), design is for m = {m} ({structure:?})",
            cells.m(),
            cells.structure()
        )));
    }
    Ok(())
}

fn unknown_cell_variances(
    counts: &CountTable,
    structure: TreatmentStructure,
    cells: &CellValues<CellSummary>,
) -> Result<CellValues<f64>> {
    let m = counts.m();
    let mut out = CellValues::filled(m, structure, f64::NAN);
    let arms: Vec<Treatment> = std::iter::once(Treatment::Control)
        .chain((0..structure.arm_count(m)).map(Treatment::Arm))
        .collect();
    for t in arms {
        // Cells with fewer than two responses borrow the variance of all
        // responses on the same treatment.
        let mut fallback: Option<f64> = None;
        for j in counts.strata() {
            if !structure.is_eligible(j, t) {
                continue;
            }
            let c = cells.get(j, t);
            if c.n != counts.n_cell(j, t) {
                return Err(Error::config(format!(
                    "cell {j}/{t} summarizes {} responses but the count table has {}",
                    c.n,
                    counts.n_cell(j, t)
                )));
            }
            let var = match c.n {
                0 => 0.0,
                1 => match fallback {
                    Some(v) => v,
                    None => {
                        let all = CellSummary::combine(
                            counts.strata().filter(|&k| structure.is_eligible(k, t)).map(|k| cells.get(k, t)),
                        );
                        if all.n < 2 || !(all.var > 0.0) {
                            return Err(Error::VarianceInestimable(format!(
                                "treatment {t}: fewer than two responses or zero spread"
                            )));
                        }
                        *fallback.insert(all.var)
                    }
                },
                _ => c.var,
            };
            out.set(j, t, var);
        }
    }
    Ok(out)
}

/// Builds the null distribution of the statistics for the given allocation.
pub fn build_model(counts: &CountTable, regime: &VarianceRegime, structure: TreatmentStructure) -> Result<DesignModel> {
    let m = counts.m();
    if !counts.is_allocated() {
        return Err(Error::config("count table has not been allocated to treatments"));
    }
    if counts.structure() != structure {
        return Err(Error::config(format!(
            "count table was allocated for {:?}, design asks for {structure:?}",
            counts.structure()
        )));
    }
    for i in 0..m {
        let n_t = counts.population_count(i, structure.arm_of(i));
        let n_c = counts.population_count(i, Treatment::Control);
        if n_t == 0 || n_c == 0 {
            return Err(Error::UndefinedStatistic {
                population: i + 1,
                reason: format!("{n_t} patients on treatment and {n_c} on control"),
            });
        }
    }

    let cell_var = match regime {
        VarianceRegime::KnownHomogeneous { sigma2 } => {
            positive(*sigma2, "sigma2")?;
            CellValues::filled(m, structure, *sigma2)
        }
        VarianceRegime::UnknownHomogeneous(pooled) => {
            positive(pooled.sigma2, "pooled variance")?;
            if !(pooled.df >= 1.0) {
                return Err(Error::config(format!("pooled degrees of freedom {} below 1", pooled.df)));
            }
            CellValues::filled(m, structure, pooled.sigma2)
        }
        VarianceRegime::KnownHeterogeneous { variances } => {
            check_cells(m, structure, variances)?;
            for (j, t, &v) in variances.iter() {
                if counts.n_cell(j, t) > 0 {
                    positive(v, &format!("variance of cell {j}/{t}"))?;
                }
            }
            variances.clone()
        }
        VarianceRegime::UnknownHeterogeneous { cells } => {
            check_cells(m, structure, cells)?;
            unknown_cell_variances(counts, structure, cells)?
        }
    };

    let n_t: Vec<f64> = (0..m).map(|i| counts.population_count(i, structure.arm_of(i)) as f64).collect();
    let n_c: Vec<f64> = (0..m).map(|i| counts.population_count(i, Treatment::Control) as f64).collect();
    let v: Vec<f64> = (0..m)
        .map(|i| {
            let t = structure.arm_of(i);
            counts
                .strata()
                .filter(|j| j.contains(i))
                .map(|j| {
                    counts.n_cell(j, t) as f64 * cell_var.get(j, t) / (n_t[i] * n_t[i])
                        + counts.n_cell(j, Treatment::Control) as f64 * cell_var.get(j, Treatment::Control)
                            / (n_c[i] * n_c[i])
                })
                .sum()
        })
        .collect();
    if let Some(i) = v.iter().position(|x| !(*x > 0.0)) {
        return Err(Error::UndefinedStatistic {
            population: i + 1,
            reason: format!("variance of the mean difference is {}", v[i]),
        });
    }

    let mut rows = vec![0.0; m * m];
    for i in 0..m {
        rows[i * m + i] = 1.0;
        for k in 0..i {
            let mut cov = 0.0;
            for j in counts.strata().filter(|j| j.contains(i) && j.contains(k)) {
                let c = Treatment::Control;
                cov += counts.n_cell(j, c) as f64 * cell_var.get(j, c) / (n_c[i] * n_c[k]);
                if structure == TreatmentStructure::SingleTreatment {
                    let t = Treatment::Arm(0);
                    cov += counts.n_cell(j, t) as f64 * cell_var.get(j, t) / (n_t[i] * n_t[k]);
                }
            }
            let r = (cov / (v[i] * v[k]).sqrt()).min(1.0);
            rows[i * m + k] = r;
            rows[k * m + i] = r;
        }
    }
    let sigma = CorrelationMatrix::new(m, rows)?;

    let h = regime
        .is_homogeneous()
        .then(|| (0..m).map(|i| 1.0 / n_t[i] + 1.0 / n_c[i]).collect());

    let df = match regime {
        VarianceRegime::KnownHomogeneous { .. } | VarianceRegime::KnownHeterogeneous { .. } => DfModel::Gaussian,
        VarianceRegime::UnknownHomogeneous(p) => DfModel::Pooled(p.df),
        VarianceRegime::UnknownHeterogeneous { cells } => {
            let df = (0..m)
                .map(|i| {
                    let pop = |t: Treatment| {
                        CellSummary::combine(counts.strata().filter(|j| j.contains(i)).map(|j| cells.get(j, t)))
                    };
                    let (tr, ct) = (pop(structure.arm_of(i)), pop(Treatment::Control));
                    satterthwaite_df(tr.var, tr.n, ct.var, ct.n).map_err(|e| match e {
                        Error::VarianceInestimable(msg) => {
                            Error::VarianceInestimable(format!("population {}: {msg}", i + 1))
                        }
                        other => other,
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            DfModel::PerPopulation(df)
        }
    };

    Ok(DesignModel {
        m,
        counts: counts.clone(),
        structure,
        regime: regime.clone(),
        cell_var,
        v,
        h,
        sigma,
        df,
    })
}

fn positive(x: f64, what: &str) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("{what} must be positive, got {x}")))
    }
}

/// Weighted mean differences `mu_hat_{i,T_i} - mu_hat_{i,C}` for cell means
/// `means`; cells without patients are ignored.
pub fn mean_differences(counts: &CountTable, structure: TreatmentStructure, means: &CellValues<f64>) -> Result<Vec<f64>> {
    check_cells(counts.m(), structure, means)?;
    (0..counts.m())
        .map(|i| {
            let t = structure.arm_of(i);
            let (n_t, n_c) = (
                counts.population_count(i, t) as f64,
                counts.population_count(i, Treatment::Control) as f64,
            );
            let mut d = 0.0;
            for j in counts.strata().filter(|j| j.contains(i)) {
                for (arm, n_pop, sign) in [(t, n_t, 1.0), (Treatment::Control, n_c, -1.0)] {
                    let n = counts.n_cell(j, arm);
                    if n == 0 {
                        continue;
                    }
                    let mu = *means.get(j, arm);
                    if !mu.is_finite() {
                        return Err(Error::Specification(format!("no mean for populated cell {j}/{arm}")));
                    }
                    d += sign * n as f64 / n_pop * mu;
                }
            }
            Ok(d)
        })
        .collect()
}

/// Noncentrality `nu_i` of the statistics for true cell means `effects`.
pub fn noncentrality(model: &DesignModel, effects: &CellValues<f64>) -> Result<Vec<f64>> {
    let d = mean_differences(&model.counts, model.structure, effects)?;
    Ok(d.iter().zip(&model.v).map(|(d, v)| d / v.sqrt()).collect())
}

//! Prevalence estimation from stratum counts.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::strata::{strata_count, CountTable, PrevalenceVector, StrataIndex};

/// Multinomial maximum likelihood estimate `n_J / N`.
pub fn mle(counts: &CountTable) -> Result<PrevalenceVector> {
    let n = counts.total();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let weights = counts.per_stratum().iter().map(|&c| c as f64 / n as f64).collect();
    PrevalenceVector::new(counts.m(), weights)
}

/// Conditioning term in the marginal estimator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarginalDenominator {
    /// `1 - tau_empty`, the observed share of screened patients with at
    /// least one biomarker.
    #[default]
    Observed,
    /// `1 - prod_k (1 - p_k)`, the same share implied by the fitted
    /// independence model.
    ModelImplied,
}

/// Counts of all screened patients, biomarker-free ones included.
#[derive(Clone, Debug)]
pub struct MarginalInput {
    m: usize,
    /// `tau_J` for nonempty `J` in mask order.
    tau: Vec<f64>,
    tau_empty: f64,
    marginals: Vec<f64>,
}

impl MarginalInput {
    pub fn new(counts: &CountTable) -> Result<Self> {
        let empty = counts.empty_count().ok_or_else(|| {
            Error::config("the marginal estimator needs the count of biomarker-free screened patients")
        })?;
        let screened = counts.total() + empty;
        if screened == 0 {
            return Err(Error::EmptySample);
        }
        let m = counts.m();
        let total = screened as f64;
        let tau: Vec<f64> = counts.per_stratum().iter().map(|&n| n as f64 / total).collect();
        let marginals = (0..m)
            .map(|i| {
                counts
                    .strata()
                    .filter(|j| j.contains(i))
                    .map(|j| tau[j.position()])
                    .sum::<f64>()
                    .min(1.0)
            })
            .collect();
        Ok(Self {
            m,
            tau,
            tau_empty: empty as f64 / total,
            marginals,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn tau(&self, j: StrataIndex) -> f64 {
        self.tau[j.position()]
    }

    pub fn tau_empty(&self) -> f64 {
        self.tau_empty
    }

    /// Marginal biomarker frequencies `p_j`.
    pub fn marginals(&self) -> &[f64] {
        &self.marginals
    }
}

#[derive(Clone, Debug)]
pub struct MarginalEstimate {
    pub prevalence: PrevalenceVector,
    /// `sum_J pi_J - 1` before renormalization.
    pub residual: f64,
}

/// Independence-model estimate `prod p_j prod (1 - p_k) / denominator`,
/// renormalized over nonempty strata.
pub fn marginal(input: &MarginalInput, denominator: MarginalDenominator) -> Result<MarginalEstimate> {
    let p = &input.marginals;
    let denom = match denominator {
        MarginalDenominator::Observed => 1.0 - input.tau_empty,
        MarginalDenominator::ModelImplied => 1.0 - p.iter().map(|q| 1.0 - q).product::<f64>(),
    };
    if !(denom > 0.0) {
        return Err(Error::DegenerateModel(
            "no screened patient expresses any biomarker".into(),
        ));
    }
    let raw: Vec<f64> = (1..=strata_count(input.m) as u32)
        .map(|mask| {
            (0..input.m)
                .map(|k| if mask >> k & 1 == 1 { p[k] } else { 1.0 - p[k] })
                .product::<f64>()
                / denom
        })
        .collect();
    let residual = raw.iter().sum::<f64>() - 1.0;
    Ok(MarginalEstimate {
        prevalence: PrevalenceVector::from_unnormalized(input.m, raw)?,
        residual,
    })
}

/// Half the weight each stratum would get under an equal split.
pub fn default_pi_min(m: usize) -> f64 {
    1.0 / (2.0 * strata_count(m) as f64)
}

#[derive(Clone, Debug)]
pub struct Adjustment {
    pub prevalence: PrevalenceVector,
    /// Strata raised to `pi_min`.
    pub raised: Vec<StrataIndex>,
    /// Rescaled strata that ended below `pi_min`; left as they are.
    pub below_after_rescale: Vec<StrataIndex>,
    pub pi_min: f64,
}

/// Raises every stratum below `pi_min` to `pi_min` and shrinks the others
/// proportionally, in a single pass. `pi_min = 0` leaves the input unchanged.
pub fn min_prevalence_adjust(prev: &PrevalenceVector, pi_min: Option<f64>) -> Result<Adjustment> {
    let m = prev.m();
    let k = strata_count(m);
    let pi_min = pi_min.unwrap_or_else(|| default_pi_min(m));
    if !(pi_min >= 0.0 && pi_min < 1.0 / k as f64) {
        return Err(Error::config(format!(
            "pi_min = {pi_min} must lie in [0, {}) for m = {m}",
            1.0 / k as f64
        )));
    }
    let small: Vec<StrataIndex> = prev.iter().filter(|&(_, w)| w < pi_min).map(|(j, _)| j).collect();
    if small.len() as f64 * pi_min >= 1.0 {
        return Err(Error::InfeasibleAdjustment {
            small: small.len(),
            pi_min,
        });
    }
    let rest: f64 = prev.iter().filter(|&(_, w)| w >= pi_min).map(|(_, w)| w).sum();
    let scale = (1.0 - small.len() as f64 * pi_min) / rest;
    let weights: Vec<f64> = prev
        .weights()
        .iter()
        .map(|&w| if w < pi_min { pi_min } else { w * scale })
        .collect();
    let below_after_rescale = prev
        .iter()
        .filter(|&(_, w)| w >= pi_min && w * scale < pi_min)
        .map(|(j, _)| j)
        .collect();
    Ok(Adjustment {
        prevalence: PrevalenceVector::from_unnormalized(m, weights)?,
        raised: small,
        below_after_rescale,
        pi_min,
    })
}

/// Output of a prevalence estimator. When `adjusted` is present the
/// boundary is the larger of the two solved boundaries.
#[derive(Clone, Debug)]
pub struct Estimate {
    pub base: PrevalenceVector,
    pub adjusted: Option<PrevalenceVector>,
}

impl Estimate {
    fn plain(base: PrevalenceVector) -> Self {
        Self { base, adjusted: None }
    }
}

pub trait PrevalenceEstimator: Send + Sync {
    fn name(&self) -> &'static str;
    fn estimate(&self, counts: &CountTable) -> Result<Estimate>;
}

pub struct Mle;

impl PrevalenceEstimator for Mle {
    fn name(&self) -> &'static str {
        "mle"
    }

    fn estimate(&self, counts: &CountTable) -> Result<Estimate> {
        mle(counts).map(Estimate::plain)
    }
}

#[derive(Default)]
pub struct Marginal {
    pub denominator: MarginalDenominator,
}

impl PrevalenceEstimator for Marginal {
    fn name(&self) -> &'static str {
        match self.denominator {
            MarginalDenominator::Observed => "marginal",
            MarginalDenominator::ModelImplied => "marginal-model-implied",
        }
    }

    fn estimate(&self, counts: &CountTable) -> Result<Estimate> {
        let input = MarginalInput::new(counts)?;
        marginal(&input, self.denominator).map(|e| Estimate::plain(e.prevalence))
    }
}

/// MLE together with its minimal-prevalence adjustment.
#[derive(Default)]
pub struct MleMinPrevalence {
    /// `None` uses [`default_pi_min`].
    pub pi_min: Option<f64>,
}

impl PrevalenceEstimator for MleMinPrevalence {
    fn name(&self) -> &'static str {
        "mle-min-prevalence"
    }

    fn estimate(&self, counts: &CountTable) -> Result<Estimate> {
        let base = mle(counts)?;
        let adjusted = min_prevalence_adjust(&base, self.pi_min)?.prevalence;
        Ok(Estimate {
            base,
            adjusted: Some(adjusted),
        })
    }
}

/// Estimators selectable by name.
pub struct EstimatorRegistry {
    estimators: BTreeMap<&'static str, Arc<dyn PrevalenceEstimator>>,
}

impl EstimatorRegistry {
    pub fn empty() -> Self {
        Self {
            estimators: BTreeMap::new(),
        }
    }

    pub fn standard() -> Self {
        let mut r = Self::empty();
        r.register(Mle);
        r.register(Marginal::default());
        r.register(Marginal {
            denominator: MarginalDenominator::ModelImplied,
        });
        r.register(MleMinPrevalence::default());
        r
    }

    pub fn register<E: PrevalenceEstimator + 'static>(&mut self, estimator: E) {
        self.estimators.insert(estimator.name(), Arc::new(estimator));
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn PrevalenceEstimator>> {
        self.estimators.get(name).cloned().ok_or_else(|| {
            Error::config(format!(
                "unknown estimator '{name}' (known: {})",
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.estimators.keys().copied().collect()
    }
}

impl Default for EstimatorRegistry {
    fn default() -> Self {
        Self::standard()
    }
}

//! Strata of overlapping populations.
//!
//! `m` populations partition the union of patients into `2^m - 1` disjoint
//! strata, one per nonempty subset `J` of population indices. A patient in
//! stratum `J` belongs to exactly the populations in `J`. Populations are
//! numbered from 1 in user-facing text and from 0 internally.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mvdist::{self, CorrelationMatrix, IntegrationBudget};
use crate::normal;

/// Hard cap on the number of populations.
pub const MAX_POPULATIONS: usize = 16;

/// Tolerance for prevalence vectors summing to one.
pub const PREVALENCE_SUM_TOL: f64 = 1e-12;

/// A nonempty subset of populations, stored as a bit mask.
///
/// Bit `i` set means population `i + 1` is a member. Ordering follows the
/// integer value of the mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StrataIndex {
    mask: u32,
}

impl StrataIndex {
    pub fn new(mask: u32, m: usize) -> Result<Self> {
        check_population_count(m)?;
        if mask == 0 {
            return Err(Error::config("stratum must contain at least one population"));
        }
        if mask >> m != 0 {
            return Err(Error::config(format!(
                "stratum mask {mask:#b} refers to populations beyond m = {m}"
            )));
        }
        Ok(Self { mask })
    }

    /// Builds a stratum from 1-based population numbers.
    pub fn from_members(members: &[usize], m: usize) -> Result<Self> {
        let mut mask = 0u32;
        for &p in members {
            if p == 0 || p > m {
                return Err(Error::config(format!(
                    "population {p} outside 1..={m}"
                )));
            }
            mask |= 1 << (p - 1);
        }
        Self::new(mask, m)
    }

    pub fn mask(self) -> u32 {
        self.mask
    }

    /// Dense position of this stratum in ascending mask order.
    pub fn position(self) -> usize {
        self.mask as usize - 1
    }

    pub fn len(self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        false
    }

    /// Whether 0-based population `i` is a member.
    pub fn contains(self, i: usize) -> bool {
        self.mask >> i & 1 == 1
    }

    /// 0-based member indices in ascending order.
    pub fn members(self) -> impl Iterator<Item = usize> {
        let mask = self.mask;
        (0..32).filter(move |i| mask >> i & 1 == 1)
    }

    pub fn member_vec(self) -> Vec<usize> {
        self.members().collect()
    }
}

impl fmt::Display for StrataIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, i) in self.members().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", i + 1)?;
        }
        f.write_str("}")
    }
}

impl FromStr for StrataIndex {
    type Err = Error;

    /// Parses `{1,3}` (braces optional). The population count is taken as
    /// the largest member, so range checks against a specific `m` are left
    /// to the caller.
    fn from_str(s: &str) -> Result<Self> {
        let inner = s.trim().trim_start_matches('{').trim_end_matches('}');
        let mut members = Vec::new();
        for tok in inner.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let p: usize = tok
                .parse()
                .map_err(|_| Error::config(format!("bad population number '{tok}' in '{s}'")))?;
            members.push(p);
        }
        let m = members.iter().copied().max().unwrap_or(0);
        if m > MAX_POPULATIONS {
            return Err(Error::config(format!("population {m} exceeds cap {MAX_POPULATIONS}")));
        }
        Self::from_members(&members, m.max(1))
    }
}

impl Serialize for StrataIndex {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StrataIndex {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub(crate) fn check_population_count(m: usize) -> Result<()> {
    if m == 0 || m > MAX_POPULATIONS {
        return Err(Error::config(format!(
            "population count m = {m} outside 1..={MAX_POPULATIONS}"
        )));
    }
    Ok(())
}

/// Number of nonempty strata for `m` populations.
pub fn strata_count(m: usize) -> usize {
    (1usize << m) - 1
}

/// All nonempty subsets of `m` populations in ascending mask order.
pub fn enumerate_strata(m: usize) -> Result<Vec<StrataIndex>> {
    check_population_count(m)?;
    Ok((1..=strata_count(m) as u32)
        .map(|mask| StrataIndex { mask })
        .collect())
}

fn all_strata(m: usize) -> impl Iterator<Item = StrataIndex> {
    (1..=strata_count(m) as u32).map(|mask| StrataIndex { mask })
}

/// One value per stratum-treatment cell, laid out like [`CountTable`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellValues<T> {
    m: usize,
    structure: TreatmentStructure,
    data: Vec<T>,
}

impl<T: Clone> CellValues<T> {
    pub fn filled(m: usize, structure: TreatmentStructure, value: T) -> Self {
        let width = 1 + structure.arm_count(m);
        Self {
            m,
            structure,
            data: vec![value; strata_count(m) * width],
        }
    }

    /// Evaluates `f` on every eligible cell; ineligible cells get `fill`.
    pub fn from_fn(
        m: usize,
        structure: TreatmentStructure,
        fill: T,
        mut f: impl FnMut(StrataIndex, Treatment) -> T,
    ) -> Self {
        let mut out = Self::filled(m, structure, fill);
        for j in all_strata(m) {
            for t in structure.eligible(j) {
                out.set(j, t, f(j, t));
            }
        }
        out
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn structure(&self) -> TreatmentStructure {
        self.structure
    }

    fn index(&self, j: StrataIndex, t: Treatment) -> usize {
        j.position() * (1 + self.structure.arm_count(self.m)) + t.column()
    }

    /// Panics if `t` has no column under this structure.
    pub fn get(&self, j: StrataIndex, t: Treatment) -> &T {
        &self.data[self.index(j, t)]
    }

    pub fn set(&mut self, j: StrataIndex, t: Treatment, value: T) {
        let idx = self.index(j, t);
        self.data[idx] = value;
    }

    /// Eligible cells in stratum order, control first within a stratum.
    pub fn iter(&self) -> impl Iterator<Item = (StrataIndex, Treatment, &T)> + '_ {
        all_strata(self.m).flat_map(move |j| {
            self.structure
                .eligible(j)
                .into_iter()
                .map(move |t| (j, t, self.get(j, t)))
        })
    }
}

/// Which treatments are compared against the common control.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TreatmentStructure {
    /// Population `i` tests its own treatment `T_i`.
    #[default]
    AllDifferent,
    /// One treatment `T` is tested in every population.
    SingleTreatment,
}

impl TreatmentStructure {
    /// Number of experimental arms for `m` populations.
    pub fn arm_count(self, m: usize) -> usize {
        match self {
            TreatmentStructure::AllDifferent => m,
            TreatmentStructure::SingleTreatment => 1,
        }
    }

    /// Arm tested in 0-based population `i`.
    pub fn arm_of(self, i: usize) -> Treatment {
        match self {
            TreatmentStructure::AllDifferent => Treatment::Arm(i),
            TreatmentStructure::SingleTreatment => Treatment::Arm(0),
        }
    }

    /// Treatments available to patients in stratum `j`: control first,
    /// then arms in ascending order.
    pub fn eligible(self, j: StrataIndex) -> Vec<Treatment> {
        let mut out = vec![Treatment::Control];
        match self {
            TreatmentStructure::AllDifferent => out.extend(j.members().map(Treatment::Arm)),
            TreatmentStructure::SingleTreatment => out.push(Treatment::Arm(0)),
        }
        out
    }

    pub fn is_eligible(self, j: StrataIndex, t: Treatment) -> bool {
        match (self, t) {
            (_, Treatment::Control) => true,
            (TreatmentStructure::AllDifferent, Treatment::Arm(i)) => j.contains(i),
            (TreatmentStructure::SingleTreatment, Treatment::Arm(i)) => i == 0,
        }
    }
}

/// A treatment arm or the common control.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Treatment {
    Control,
    /// 0-based arm index. Under [`TreatmentStructure::AllDifferent`] arm `i`
    /// is the treatment of population `i + 1`.
    Arm(usize),
}

impl Treatment {
    fn column(self) -> usize {
        match self {
            Treatment::Control => 0,
            Treatment::Arm(i) => i + 1,
        }
    }
}

impl fmt::Display for Treatment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Treatment::Control => f.write_str("C"),
            Treatment::Arm(i) => write!(f, "T{}", i + 1),
        }
    }
}

impl FromStr for Treatment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("c") || s.eq_ignore_ascii_case("control") {
            return Ok(Treatment::Control);
        }
        if s.eq_ignore_ascii_case("t") {
            return Ok(Treatment::Arm(0));
        }
        let digits = s
            .strip_prefix('T')
            .or_else(|| s.strip_prefix('t'))
            .ok_or_else(|| Error::config(format!("unknown treatment '{s}'")))?;
        let k: usize = digits
            .parse()
            .map_err(|_| Error::config(format!("unknown treatment '{s}'")))?;
        if k == 0 {
            return Err(Error::config("treatments are numbered from T1"));
        }
        Ok(Treatment::Arm(k - 1))
    }
}

/// Weights `pi_J` over all nonempty strata, explicit zeros included.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceVector {
    m: usize,
    weights: Vec<f64>,
}

impl PrevalenceVector {
    /// `weights` are in ascending mask order and must sum to one.
    pub fn new(m: usize, weights: Vec<f64>) -> Result<Self> {
        check_population_count(m)?;
        if weights.len() != strata_count(m) {
            return Err(Error::config(format!(
                "expected {} prevalences for m = {m}, got {}",
                strata_count(m),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::config(format!("prevalence {w} is not a nonnegative number")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > PREVALENCE_SUM_TOL {
            return Err(Error::config(format!("prevalences sum to {sum}, not 1")));
        }
        Ok(Self { m, weights })
    }

    /// Rescales nonnegative weights to sum to one.
    pub fn from_unnormalized(m: usize, mut weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum.is_finite() && sum > 0.0) {
            return Err(Error::DegenerateModel(format!("weights sum to {sum}")));
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Self::new(m, weights)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, j: StrataIndex) -> f64 {
        self.weights[j.position()]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (StrataIndex, f64)> + '_ {
        all_strata(self.m).zip(self.weights.iter().copied())
    }

    /// Prevalence of population `i` (0-based): the sum over strata containing it.
    pub fn population(&self, i: usize) -> f64 {
        self.iter().filter(|(j, _)| j.contains(i)).map(|(_, w)| w).sum()
    }
}

/// Observed stratum sizes and, once allocated, stratum-by-treatment sizes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTable {
    m: usize,
    structure: TreatmentStructure,
    per_stratum: Vec<u64>,
    /// Row-major `(2^m - 1) x (1 + arms)`; column 0 is control. Empty until
    /// allocated.
    cells: Vec<u64>,
    empty_count: Option<u64>,
}

impl CountTable {
    /// Stratum sizes only, in ascending mask order.
    pub fn from_strata(m: usize, structure: TreatmentStructure, per_stratum: Vec<u64>) -> Result<Self> {
        check_population_count(m)?;
        if per_stratum.len() != strata_count(m) {
            return Err(Error::config(format!(
                "expected {} stratum counts for m = {m}, got {}",
                strata_count(m),
                per_stratum.len()
            )));
        }
        Ok(Self {
            m,
            structure,
            per_stratum,
            cells: Vec::new(),
            empty_count: None,
        })
    }

    /// Builds an allocated table from explicit cell counts. Stratum sizes are
    /// the row sums.
    pub fn from_cells(
        m: usize,
        structure: TreatmentStructure,
        cells: &[(StrataIndex, Treatment, u64)],
    ) -> Result<Self> {
        let mut table = Self::from_strata(m, structure, vec![0; strata_count(m)])?;
        table.cells = vec![0; strata_count(m) * table.width()];
        for &(j, t, n) in cells {
            if j.mask() >> m != 0 {
                return Err(Error::config(format!("stratum {j} outside m = {m}")));
            }
            if !structure.is_eligible(j, t) {
                return Err(Error::config(format!(
                    "treatment {t} is not available in stratum {j}"
                )));
            }
            let idx = table.cell_index(j, t);
            table.cells[idx] += n;
            table.per_stratum[j.position()] += n;
        }
        Ok(table)
    }

    pub fn with_empty_count(mut self, n_empty: u64) -> Self {
        self.empty_count = Some(n_empty);
        self
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn structure(&self) -> TreatmentStructure {
        self.structure
    }

    fn width(&self) -> usize {
        1 + self.structure.arm_count(self.m)
    }

    fn cell_index(&self, j: StrataIndex, t: Treatment) -> usize {
        j.position() * self.width() + t.column()
    }

    pub fn total(&self) -> u64 {
        self.per_stratum.iter().sum()
    }

    pub fn n(&self, j: StrataIndex) -> u64 {
        self.per_stratum[j.position()]
    }

    pub fn per_stratum(&self) -> &[u64] {
        &self.per_stratum
    }

    /// Biomarker-free screened patients, when recorded.
    pub fn empty_count(&self) -> Option<u64> {
        self.empty_count
    }

    pub fn is_allocated(&self) -> bool {
        !self.cells.is_empty()
    }

    pub fn strata(&self) -> impl Iterator<Item = StrataIndex> {
        all_strata(self.m)
    }

    /// `n_{J,T}`; zero for ineligible treatments or an unallocated table.
    pub fn n_cell(&self, j: StrataIndex, t: Treatment) -> u64 {
        if !self.is_allocated() || !self.structure.is_eligible(j, t) {
            return 0;
        }
        self.cells[self.cell_index(j, t)]
    }

    /// `n_{i,T}`: patients on `t` summed over strata containing population `i`.
    pub fn population_count(&self, i: usize, t: Treatment) -> u64 {
        self.strata()
            .filter(|j| j.contains(i))
            .map(|j| self.n_cell(j, t))
            .sum()
    }

    /// Patients in population `i` (0-based).
    pub fn population_size(&self, i: usize) -> u64 {
        self.strata().filter(|j| j.contains(i)).map(|j| self.n(j)).sum()
    }

    /// All allocated cells with their counts, including zeros.
    pub fn cells(&self) -> impl Iterator<Item = (StrataIndex, Treatment, u64)> + '_ {
        self.strata().flat_map(move |j| {
            self.structure
                .eligible(j)
                .into_iter()
                .map(move |t| (j, t, self.n_cell(j, t)))
        })
    }

    pub(crate) fn set_cells(&mut self, j: StrataIndex, counts: &[(Treatment, u64)]) {
        if self.cells.is_empty() {
            self.cells = vec![0; strata_count(self.m) * self.width()];
        }
        for &(t, n) in counts {
            let idx = self.cell_index(j, t);
            self.cells[idx] = n;
        }
    }

    /// Checks the row-sum invariant of an allocated table.
    pub fn validate(&self) -> Result<()> {
        if !self.is_allocated() {
            return Ok(());
        }
        for j in self.strata() {
            let row: u64 = self.structure.eligible(j).iter().map(|&t| self.n_cell(j, t)).sum();
            if row != self.n(j) {
                return Err(Error::config(format!(
                    "stratum {j}: cell counts sum to {row}, stratum size is {}",
                    self.n(j)
                )));
            }
        }
        Ok(())
    }

    /// Compact `n_J` listing in mask order, e.g. `3;0;12`.
    pub fn digest(&self) -> String {
        self.per_stratum
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Dependence between the binary biomarkers.
#[derive(Clone, Debug, PartialEq)]
pub enum Dependence {
    Independent,
    /// Biomarker `i` is expressed iff latent `Z_i <= Phi^-1(p_i)` with
    /// `Z ~ N(0, R)`.
    GaussianCopula(CorrelationMatrix),
}

/// Binary biomarkers defining the populations.
#[derive(Clone, Debug, PartialEq)]
pub struct BiomarkerModel {
    p: Vec<f64>,
    dependence: Dependence,
}

impl BiomarkerModel {
    pub fn independent(p: Vec<f64>) -> Result<Self> {
        Self::new(p, Dependence::Independent)
    }

    pub fn new(p: Vec<f64>, dependence: Dependence) -> Result<Self> {
        check_population_count(p.len())?;
        if let Some(x) = p.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::config(format!("expression probability {x} outside [0, 1]")));
        }
        if p.iter().all(|&x| x == 0.0) {
            return Err(Error::DegenerateModel(
                "no biomarker can be expressed (all p_i = 0)".into(),
            ));
        }
        if let Dependence::GaussianCopula(r) = &dependence {
            if r.dim() != p.len() {
                return Err(Error::config(format!(
                    "copula correlation is {}x{}, expected {m}x{m}",
                    r.dim(),
                    r.dim(),
                    m = p.len()
                )));
            }
        }
        Ok(Self { p, dependence })
    }

    pub fn m(&self) -> usize {
        self.p.len()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn dependence(&self) -> &Dependence {
        &self.dependence
    }

    /// Probability that no biomarker is expressed.
    pub fn none_probability(&self) -> Result<f64> {
        match &self.dependence {
            Dependence::Independent => Ok(self.p.iter().map(|p| 1.0 - p).product()),
            Dependence::GaussianCopula(r) => {
                let lower: Vec<f64> = self.p.iter().map(|&p| latent_threshold(p)).collect();
                let upper = vec![f64::INFINITY; self.m()];
                Ok(mvdist::mvn_rectangle(&lower, &upper, r, &IntegrationBudget::default())?.value)
            }
        }
    }
}

fn latent_threshold(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        normal::quantile(p)
    }
}

/// True strata prevalences implied by a biomarker model, conditioned on at
/// least one biomarker being expressed.
pub fn strata_probabilities(model: &BiomarkerModel) -> Result<PrevalenceVector> {
    strata_probabilities_with(model, &IntegrationBudget::default())
}

pub fn strata_probabilities_with(
    model: &BiomarkerModel,
    budget: &IntegrationBudget,
) -> Result<PrevalenceVector> {
    let m = model.m();
    let raw: Vec<f64> = match &model.dependence {
        Dependence::Independent => all_strata(m)
            .map(|j| {
                (0..m)
                    .map(|i| if j.contains(i) { model.p[i] } else { 1.0 - model.p[i] })
                    .product()
            })
            .collect(),
        Dependence::GaussianCopula(r) => {
            let thresholds: Vec<f64> = model.p.iter().map(|&p| latent_threshold(p)).collect();
            let mut out = Vec::with_capacity(strata_count(m));
            for j in all_strata(m) {
                let mut lower = vec![f64::NEG_INFINITY; m];
                let mut upper = vec![f64::INFINITY; m];
                for i in 0..m {
                    if j.contains(i) {
                        upper[i] = thresholds[i];
                    } else {
                        lower[i] = thresholds[i];
                    }
                }
                let cell_budget = IntegrationBudget {
                    seed: budget.seed ^ u64::from(j.mask()).wrapping_mul(0x9e37_79b9_7f4a_7c15),
                    ..budget.clone()
                };
                out.push(mvdist::mvn_rectangle(&lower, &upper, r, &cell_budget)?.value);
            }
            out
        }
    };
    let normalizer: f64 = raw.iter().sum();
    if normalizer <= 1e-14 {
        return Err(Error::DegenerateModel(format!(
            "probability of at least one biomarker is {normalizer:.3e}"
        )));
    }
    PrevalenceVector::from_unnormalized(m, raw)
}

/// Multinomial draw of `n` patients over the strata.
pub fn sample_counts<R: Rng + ?Sized>(
    prev: &PrevalenceVector,
    n: u64,
    structure: TreatmentStructure,
    rng: &mut R,
) -> CountTable {
    let mut remaining_n = n;
    let mut remaining_p = 1.0f64;
    let mut per_stratum = Vec::with_capacity(prev.weights.len());
    for &w in &prev.weights {
        let draw = if remaining_n == 0 || w <= 0.0 {
            0
        } else if w >= remaining_p {
            remaining_n
        } else {
            let q = (w / remaining_p).clamp(0.0, 1.0);
            Binomial::new(remaining_n, q)
                .expect("binomial probability is clamped to [0, 1]")
                .sample(rng)
        };
        per_stratum.push(draw);
        remaining_n -= draw;
        remaining_p -= w;
    }
    // Rounding in `remaining_p` can strand a few patients; they belong to
    // the last stratum with positive weight.
    if remaining_n > 0 {
        if let Some(k) = prev.weights.iter().rposition(|&w| w > 0.0) {
            per_stratum[k] += remaining_n;
        }
    }
    CountTable {
        m: prev.m,
        structure,
        per_stratum,
        cells: Vec::new(),
        empty_count: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn enumeration_small_cases() {
        let one = enumerate_strata(1).unwrap();
        assert_eq!(one.iter().map(|j| j.to_string()).collect::<Vec<_>>(), ["{1}"]);
        let two = enumerate_strata(2).unwrap();
        assert_eq!(
            two.iter().map(|j| j.to_string()).collect::<Vec<_>>(),
            ["{1}", "{2}", "{1,2}"]
        );
        let three = enumerate_strata(3).unwrap();
        assert_eq!(three.len(), 7);
        assert_eq!(three[6].to_string(), "{1,2,3}");
        assert!(three.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn enumeration_rejects_out_of_range() {
        assert!(enumerate_strata(0).is_err());
        assert!(enumerate_strata(MAX_POPULATIONS + 1).is_err());
        assert_eq!(enumerate_strata(MAX_POPULATIONS).unwrap().len(), 65535);
    }

    #[test]
    fn stratum_parsing_round_trips() {
        let j = StrataIndex::from_members(&[1, 3], 3).unwrap();
        assert_eq!(j.to_string(), "{1,3}");
        assert_eq!("{1,3}".parse::<StrataIndex>().unwrap(), j);
        assert_eq!(" 3, 1 ".parse::<StrataIndex>().unwrap(), j);
        assert!("{}".parse::<StrataIndex>().is_err());
        assert!("{0}".parse::<StrataIndex>().is_err());
    }

    #[test]
    fn single_population_has_all_mass() {
        let prev = strata_probabilities(&BiomarkerModel::independent(vec![0.3]).unwrap()).unwrap();
        assert_eq!(prev.weights(), &[1.0]);
    }

    #[test]
    fn two_fair_biomarkers_split_evenly() {
        let prev =
            strata_probabilities(&BiomarkerModel::independent(vec![0.5, 0.5]).unwrap()).unwrap();
        for w in prev.weights() {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_copula_matches_independence() {
        let r = CorrelationMatrix::identity(2);
        let cop = BiomarkerModel::new(vec![0.5, 0.5], Dependence::GaussianCopula(r)).unwrap();
        let prev = strata_probabilities(&cop).unwrap();
        for w in prev.weights() {
            assert!((w - 1.0 / 3.0).abs() < 1e-6, "{w}");
        }
    }

    #[test]
    fn degenerate_biomarkers_rejected() {
        assert!(matches!(
            BiomarkerModel::independent(vec![0.0, 0.0]),
            Err(Error::DegenerateModel(_))
        ));
        assert!(BiomarkerModel::independent(vec![1.2]).is_err());
    }

    #[test]
    fn marginal_consistency_before_renormalization() {
        let p = vec![0.2, 0.55, 0.7, 0.05];
        let model = BiomarkerModel::independent(p.clone()).unwrap();
        let prev = strata_probabilities(&model).unwrap();
        let norm = 1.0 - p.iter().map(|x| 1.0 - x).product::<f64>();
        for (i, &pi) in p.iter().enumerate() {
            let marginal: f64 = prev.iter().filter(|(j, _)| j.contains(i)).map(|(_, w)| w).sum();
            assert!((marginal * norm - pi).abs() < 1e-14);
        }
    }

    #[test]
    fn sampling_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let prev = PrevalenceVector::new(2, vec![0.2, 0.3, 0.5]).unwrap();
        let zero = sample_counts(&prev, 0, TreatmentStructure::AllDifferent, &mut rng);
        assert_eq!(zero.per_stratum(), &[0, 0, 0]);

        let point = PrevalenceVector::new(2, vec![0.0, 1.0, 0.0]).unwrap();
        let all = sample_counts(&point, 77, TreatmentStructure::AllDifferent, &mut rng);
        assert_eq!(all.per_stratum(), &[0, 77, 0]);
    }

    #[test]
    fn sampling_is_reproducible_and_sums_to_n() {
        let prev = PrevalenceVector::new(2, vec![0.2, 0.3, 0.5]).unwrap();
        let a = sample_counts(&prev, 500, TreatmentStructure::AllDifferent, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_counts(&prev, 500, TreatmentStructure::AllDifferent, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert_eq!(a.total(), 500);
    }

    #[test]
    fn sampling_mean_frequencies_match_prevalences() {
        let prev = PrevalenceVector::new(2, vec![0.1, 0.25, 0.65]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 50u64;
        let reps = 10_000;
        let mut sums = [0.0f64; 3];
        for _ in 0..reps {
            let c = sample_counts(&prev, n, TreatmentStructure::AllDifferent, &mut rng);
            for (s, &k) in sums.iter_mut().zip(c.per_stratum()) {
                *s += k as f64 / n as f64;
            }
        }
        for (s, &p) in sums.iter().zip(prev.weights()) {
            let mean = s / reps as f64;
            let se = (p * (1.0 - p) / (n as f64 * reps as f64)).sqrt();
            assert!((mean - p).abs() < 3.0 * se, "mean {mean} vs {p}");
        }
    }

    #[test]
    fn sampling_chi_square_goodness_of_fit() {
        // Critical value of chi-square with 6 df at level 0.001. Fixed seed;
        // a rejection here would happen with probability 0.001 per seed.
        const CRIT: f64 = 22.457_744;
        let model = BiomarkerModel::independent(vec![0.3, 0.6, 0.45]).unwrap();
        let prev = strata_probabilities(&model).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 10_000u64;
        let c = sample_counts(&prev, draws, TreatmentStructure::AllDifferent, &mut rng);
        let stat: f64 = c
            .per_stratum()
            .iter()
            .zip(prev.weights())
            .map(|(&o, &p)| {
                let e = p * draws as f64;
                (o as f64 - e).powi(2) / e
            })
            .sum();
        assert!(stat < CRIT, "chi-square {stat}");
    }

    #[test]
    fn cell_table_accessors() {
        let j12 = StrataIndex::from_members(&[1, 2], 2).unwrap();
        let j1 = StrataIndex::from_members(&[1], 2).unwrap();
        let t = CountTable::from_cells(
            2,
            TreatmentStructure::AllDifferent,
            &[
                (j12, Treatment::Control, 4),
                (j12, Treatment::Arm(0), 3),
                (j12, Treatment::Arm(1), 3),
                (j1, Treatment::Control, 2),
                (j1, Treatment::Arm(0), 2),
            ],
        )
        .unwrap();
        assert_eq!(t.total(), 14);
        assert_eq!(t.population_count(0, Treatment::Control), 6);
        assert_eq!(t.population_count(1, Treatment::Control), 4);
        assert_eq!(t.population_count(0, Treatment::Arm(0)), 5);
        assert_eq!(t.n_cell(j1, Treatment::Arm(1)), 0);
        t.validate().unwrap();

        let bad = CountTable::from_cells(
            2,
            TreatmentStructure::AllDifferent,
            &[(j1, Treatment::Arm(1), 1)],
        );
        assert!(bad.is_err());
    }
}

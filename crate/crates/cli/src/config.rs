//! Run configuration files (TOML, strictly validated).

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use pwer_core::allocation::{allocate, AllocationRegistry};
use pwer_core::control::SolverOptions;
use pwer_core::design::{CellSummary, PooledVariance, VarianceRegime};
use pwer_core::mvdist::CorrelationMatrix;
use pwer_core::prevalence::{EstimatorRegistry, MarginalDenominator, MleMinPrevalence, PrevalenceEstimator};
use pwer_core::sim::{replicate_rng, BiomarkerMode, CellVariances, EstimatorChoice, ScenarioSpec, VarianceSpec};
use pwer_core::strata::{CellValues, CountTable, Dependence, StrataIndex, Treatment, TreatmentStructure};

use crate::records::Format;

/// A rejected configuration, pointing at the offending line when known.
#[derive(Debug)]
pub struct ConfigError {
    pub file: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{}: {}", self.file, l, self.message),
            None => write!(f, "{}: {}", self.file, self.message),
        }
    }
}

/// Text of a configuration file, kept for error locations.
pub struct Source {
    pub path: PathBuf,
    pub text: String,
}

impl Source {
    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            file: path.display().to_string(),
            line: None,
            message: format!("cannot read config: {e}"),
        })?;
        Ok(Self {
            path: path.to_path_buf(),
            text,
        })
    }

    pub fn from_text(path: impl Into<PathBuf>, text: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            text: text.into(),
        }
    }

    pub fn parse(&self) -> Result<RunConfig, ConfigError> {
        toml::from_str(&self.text).map_err(|e| {
            let line = e.span().map(|s| self.text[..s.start].matches('\n').count() + 1);
            ConfigError {
                file: self.path.display().to_string(),
                line,
                message: e.message().trim().to_string(),
            }
        })
    }

    /// Error at `key` inside `[section]`, or at the section header when the
    /// key is absent.
    pub fn error(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            file: self.path.display().to_string(),
            line: self.locate(section, key),
            message: message.into(),
        }
    }

    fn locate(&self, section: &str, key: &str) -> Option<usize> {
        let mut header = String::new();
        let mut header_line = None;
        for (k, raw) in self.text.lines().enumerate() {
            let line = raw.trim();
            if line.starts_with('[') {
                header = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
                if header == section && header_line.is_none() {
                    header_line = Some(k + 1);
                }
                continue;
            }
            let in_section = header == section || header.starts_with(&format!("{section}."));
            if in_section && !key.is_empty() {
                if let Some(rest) = line.strip_prefix(key) {
                    if rest.trim_start().starts_with('=') {
                        return Some(k + 1);
                    }
                }
            }
        }
        header_line
    }

    fn dir(&self) -> &Path {
        self.path.parent().unwrap_or(Path::new("."))
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
    pub output: Option<PathBuf>,
    /// Per-replicate records of `simulate` and the study commands.
    pub dump: Option<PathBuf>,
    pub format: Option<Format>,
    pub design: Option<DesignConfig>,
    pub rates: Option<RatesConfig>,
    pub scenario: Option<ScenarioConfig>,
    pub solver: Option<SolverConfig>,
}

fn default_alpha() -> f64 {
    0.025
}

fn default_estimator() -> String {
    "mle".into()
}

fn default_allocation() -> String {
    "stratified".into()
}

/// One observed trial, for `critical` and `rates`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub m: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub structure: TreatmentStructure,
    #[serde(default = "default_estimator")]
    pub estimator: String,
    pub pi_min: Option<f64>,
    /// Stratum sizes in ascending mask order, split over arms by `allocation`.
    pub strata: Option<Vec<u64>>,
    #[serde(default = "default_allocation")]
    pub allocation: String,
    pub cells: Option<Vec<CellCount>>,
    /// CSV with columns `stratum,treatment,n`, relative to the config file.
    pub counts_file: Option<PathBuf>,
    /// Screened patients without any biomarker.
    pub empty_count: Option<u64>,
    pub variance: DesignVariance,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellCount {
    pub stratum: String,
    pub treatment: String,
    pub n: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellVariance {
    pub stratum: String,
    pub treatment: String,
    pub variance: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellMean {
    pub stratum: String,
    pub treatment: String,
    pub mean: f64,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "regime", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DesignVariance {
    KnownHomogeneous { sigma2: f64 },
    /// `sigma2` is the pooled estimate.
    UnknownHomogeneous { sigma2: f64 },
    KnownHeterogeneous { cells: Vec<CellVariance> },
    /// `cells` hold sample variances.
    UnknownHeterogeneous { cells: Vec<CellVariance> },
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum BoundaryValue {
    Common(f64),
    PerPopulation(Vec<f64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    pub boundary: BoundaryValue,
    /// Defaults to the estimate from the design counts.
    pub prevalences: Option<Vec<f64>>,
    /// Second prevalence vector evaluated at the same boundary.
    pub compare: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub pwer_tol: Option<f64>,
    pub boundary_tol: Option<f64>,
    pub max_iterations: Option<usize>,
    pub abs_tol: Option<f64>,
    pub max_evals: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BiomarkersConfig {
    Uniform {
        #[serde(default)]
        low: f64,
        #[serde(default = "one")]
        high: f64,
    },
    Fixed {
        p: Vec<f64>,
    },
    Correlated {
        #[serde(default)]
        low: f64,
        #[serde(default = "one")]
        high: f64,
        correlation: Vec<Vec<f64>>,
    },
    Pinned {
        value: f64,
        #[serde(default = "first_stratum")]
        stratum: String,
    },
}

fn one() -> f64 {
    1.0
}

fn first_stratum() -> String {
    "{1}".into()
}

impl Default for BiomarkersConfig {
    fn default() -> Self {
        BiomarkersConfig::Uniform { low: 0.0, high: 1.0 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(tag = "regime", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScenarioVariance {
    KnownHomogeneous {
        #[serde(default = "one")]
        sigma2: f64,
    },
    UnknownHomogeneous {
        #[serde(default = "one")]
        sigma2: f64,
    },
    KnownHeterogeneous {
        cells: Option<Vec<CellVariance>>,
        low: Option<f64>,
        high: Option<f64>,
    },
    UnknownHeterogeneous {
        cells: Option<Vec<CellVariance>>,
        low: Option<f64>,
        high: Option<f64>,
    },
}

impl Default for ScenarioVariance {
    fn default() -> Self {
        ScenarioVariance::UnknownHomogeneous { sigma2: 1.0 }
    }
}

/// A simulation scenario, for `simulate`, `lfc-check` and
/// `empty-stratum-study`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub m: usize,
    pub n: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub structure: TreatmentStructure,
    #[serde(default = "default_allocation")]
    pub allocation: String,
    #[serde(default = "default_estimator")]
    pub estimator: String,
    pub pi_min: Option<f64>,
    pub data_replicates: Option<usize>,
    #[serde(default)]
    pub biomarkers: BiomarkersConfig,
    /// Gaussian copula correlation of the biomarkers.
    pub copula: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub variance: ScenarioVariance,
    /// Mean of every treatment arm cell; controls stay at zero.
    pub treatment_effect: Option<f64>,
    /// Cell means overriding `treatment_effect`.
    pub effects: Option<Vec<CellMean>>,
}

/// Settings resolved from the file and the command line.
pub struct Settings {
    pub seed: u64,
    pub replicates: Option<usize>,
    pub output: Option<PathBuf>,
    pub dump: Option<PathBuf>,
    pub format: Format,
}

fn stratum(src: &Source, section: &str, key: &str, s: &str, m: usize) -> Result<StrataIndex, ConfigError> {
    let j: StrataIndex = s.parse().map_err(|e: pwer_core::Error| src.error(section, key, e.to_string()))?;
    StrataIndex::new(j.mask(), m).map_err(|e| src.error(section, key, format!("stratum {s}: {e}")))
}

fn treatment(
    src: &Source,
    section: &str,
    key: &str,
    s: &str,
    j: StrataIndex,
    structure: TreatmentStructure,
) -> Result<Treatment, ConfigError> {
    let t: Treatment = s.parse().map_err(|e: pwer_core::Error| src.error(section, key, e.to_string()))?;
    if !structure.is_eligible(j, t) {
        return Err(src.error(section, key, format!("treatment {t} is not given in stratum {j}")));
    }
    Ok(t)
}

fn cell_values(
    src: &Source,
    section: &str,
    key: &str,
    m: usize,
    structure: TreatmentStructure,
    default: f64,
    entries: impl IntoIterator<Item = (String, String, f64)>,
) -> Result<CellValues<f64>, ConfigError> {
    let mut values = CellValues::filled(m, structure, default);
    for (s, t, x) in entries {
        let j = stratum(src, section, key, &s, m)?;
        let t = treatment(src, section, key, &t, j, structure)?;
        values.set(j, t, x);
    }
    Ok(values)
}

fn positive(src: &Source, section: &str, key: &str, x: f64) -> Result<f64, ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(src.error(section, key, format!("{key} = {x} must be positive")))
    }
}

impl SolverConfig {
    pub fn options(&self, src: &Source) -> Result<SolverOptions, ConfigError> {
        let mut o = SolverOptions::default();
        if let Some(x) = self.pwer_tol {
            o.pwer_tol = positive(src, "solver", "pwer_tol", x)?;
        }
        if let Some(x) = self.boundary_tol {
            o.boundary_tol = positive(src, "solver", "boundary_tol", x)?;
        }
        if let Some(x) = self.max_iterations {
            o.max_iterations = x;
        }
        if let Some(x) = self.abs_tol {
            o.budget.abs_tol = positive(src, "solver", "abs_tol", x)?;
        }
        if let Some(x) = self.max_evals {
            o.budget.max_evals = x;
        }
        Ok(o)
    }
}

/// A design resolved into core types.
pub struct Design {
    pub m: usize,
    pub alpha: f64,
    pub structure: TreatmentStructure,
    pub counts: CountTable,
    pub regime: VarianceRegime,
    pub estimator: std::sync::Arc<dyn PrevalenceEstimator>,
}

impl DesignConfig {
    pub fn resolve(&self, src: &Source, seed: u64) -> Result<Design, ConfigError> {
        const S: &str = "design";
        let m = self.m;
        pwer_core::strata::enumerate_strata(m).map_err(|e| src.error(S, "m", e.to_string()))?;
        if !(self.alpha > 0.0 && self.alpha <= 0.5) {
            return Err(src.error(S, "alpha", format!("alpha = {} must lie in (0, 0.5]", self.alpha)));
        }
        let counts = self.counts(src, seed)?;
        let regime = self.regime(src, &counts)?;
        let mut registry = EstimatorRegistry::standard();
        if self.pi_min.is_some() {
            registry.register(MleMinPrevalence { pi_min: self.pi_min });
        }
        let estimator = registry
            .get(&self.estimator)
            .map_err(|e| src.error(S, "estimator", e.to_string()))?;
        Ok(Design {
            m,
            alpha: self.alpha,
            structure: self.structure,
            counts,
            regime,
            estimator,
        })
    }

    fn counts(&self, src: &Source, seed: u64) -> Result<CountTable, ConfigError> {
        const S: &str = "design";
        let given = [self.strata.is_some(), self.cells.is_some(), self.counts_file.is_some()];
        if given.iter().filter(|&&g| g).count() != 1 {
            return Err(src.error(S, "", "give exactly one of strata, cells or counts_file"));
        }
        let (m, structure) = (self.m, self.structure);
        let mut table = if let Some(strata) = &self.strata {
            let raw = CountTable::from_strata(m, structure, strata.clone())
                .map_err(|e| src.error(S, "strata", e.to_string()))?;
            let policy = AllocationRegistry::standard()
                .get(&self.allocation)
                .map_err(|e| src.error(S, "allocation", e.to_string()))?;
            let mut rng = replicate_rng(seed, 0);
            allocate(&raw, policy.as_ref(), &mut rng)
        } else {
            let (entries, key) = match &self.cells {
                Some(cells) => (
                    cells.iter().map(|c| (c.stratum.clone(), c.treatment.clone(), c.n)).collect(),
                    "cells",
                ),
                None => (self.read_counts_file(src)?, "counts_file"),
            };
            let mut cells = Vec::with_capacity(entries.len());
            for (s, t, n) in entries {
                let j = stratum(src, S, key, &s, m)?;
                cells.push((j, treatment(src, S, key, &t, j, structure)?, n));
            }
            CountTable::from_cells(m, structure, &cells).map_err(|e| src.error(S, key, e.to_string()))?
        };
        if let Some(n0) = self.empty_count {
            table = table.with_empty_count(n0);
        }
        Ok(table)
    }

    fn read_counts_file(&self, src: &Source) -> Result<Vec<(String, String, u64)>, ConfigError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Row {
            stratum: String,
            treatment: String,
            n: u64,
        }
        let rel = self.counts_file.as_ref().expect("checked by caller");
        let path = src.dir().join(rel);
        let fail = |msg: String| src.error("design", "counts_file", format!("{}: {msg}", path.display()));
        let mut reader = csv::Reader::from_path(&path).map_err(|e| fail(e.to_string()))?;
        let mut out = Vec::new();
        for row in reader.deserialize::<Row>() {
            let row = row.map_err(|e| fail(e.to_string()))?;
            out.push((row.stratum, row.treatment, row.n));
        }
        Ok(out)
    }

    fn regime(&self, src: &Source, counts: &CountTable) -> Result<VarianceRegime, ConfigError> {
        const S: &str = "design";
        let (m, structure) = (self.m, self.structure);
        Ok(match &self.variance {
            DesignVariance::KnownHomogeneous { sigma2 } => VarianceRegime::KnownHomogeneous {
                sigma2: positive(src, S, "sigma2", *sigma2)?,
            },
            DesignVariance::UnknownHomogeneous { sigma2 } => {
                let s = counts.cells().filter(|c| c.2 > 1).count();
                let df = counts.total() as f64 - s as f64;
                if s == 0 || df < 1.0 {
                    return Err(src.error(S, "variance", format!("pooled variance has N - s = {df} degrees of freedom")));
                }
                VarianceRegime::UnknownHomogeneous(PooledVariance {
                    sigma2: positive(src, S, "sigma2", *sigma2)?,
                    s,
                    df,
                })
            }
            DesignVariance::KnownHeterogeneous { cells } => {
                let entries = cells.iter().map(|c| (c.stratum.clone(), c.treatment.clone(), c.variance));
                let variances = cell_values(src, S, "cells", m, structure, 1.0, entries)?;
                if let Some((j, t, x)) = variances.iter().find(|(_, _, x)| !(**x > 0.0 && x.is_finite())) {
                    return Err(src.error(S, "cells", format!("variance {x} of cell {j}/{t} must be positive")));
                }
                VarianceRegime::KnownHeterogeneous { variances }
            }
            DesignVariance::UnknownHeterogeneous { cells } => {
                let entries = cells.iter().map(|c| (c.stratum.clone(), c.treatment.clone(), c.variance));
                let variances = cell_values(src, S, "cells", m, structure, f64::NAN, entries)?;
                let summaries = CellValues::from_fn(m, structure, CellSummary::EMPTY, |j, t| {
                    let n = counts.n_cell(j, t);
                    CellSummary {
                        n,
                        mean: 0.0,
                        var: if n > 1 { *variances.get(j, t) } else { f64::NAN },
                    }
                });
                if let Some((j, t, c)) = summaries.iter().find(|(_, _, c)| c.n > 1 && !(c.var > 0.0)) {
                    return Err(src.error(
                        S,
                        "cells",
                        format!("cell {j}/{t} has {} patients but no positive sample variance", c.n),
                    ));
                }
                VarianceRegime::UnknownHeterogeneous { cells: summaries }
            }
        })
    }
}

fn estimator_choice(src: &Source, name: &str, pi_min: Option<f64>) -> Result<EstimatorChoice, ConfigError> {
    Ok(match name {
        "mle" => EstimatorChoice::Mle,
        "marginal" => EstimatorChoice::Marginal(MarginalDenominator::Observed),
        "marginal-model-implied" => EstimatorChoice::Marginal(MarginalDenominator::ModelImplied),
        "mle-min-prevalence" => EstimatorChoice::MleWithMinPrevalence(pi_min),
        other => {
            return Err(src.error(
                "scenario",
                "estimator",
                format!("unknown estimator '{other}' (known: marginal, marginal-model-implied, mle, mle-min-prevalence)"),
            ))
        }
    })
}

fn correlation(src: &Source, key: &str, rows: &[Vec<f64>]) -> Result<CorrelationMatrix, ConfigError> {
    CorrelationMatrix::from_rows(rows).map_err(|e| src.error("scenario", key, e.to_string()))
}

impl ScenarioConfig {
    pub fn resolve(&self, src: &Source, settings: &Settings, solver: SolverOptions) -> Result<ScenarioSpec, ConfigError> {
        const S: &str = "scenario";
        let (m, structure) = (self.m, self.structure);
        pwer_core::strata::enumerate_strata(m).map_err(|e| src.error(S, "m", e.to_string()))?;
        let mut spec = ScenarioSpec::new(m, self.n);
        spec.alpha = self.alpha;
        spec.structure = structure;
        spec.allocation = self.allocation.clone();
        spec.estimator = estimator_choice(src, &self.estimator, self.pi_min)?;
        spec.seed = settings.seed;
        spec.solver = solver;
        if let Some(r) = settings.replicates {
            spec.replicates = r;
        }
        if let Some(r) = self.data_replicates {
            spec.data_replicates = r;
        }
        spec.biomarkers = match &self.biomarkers {
            BiomarkersConfig::Uniform { low, high } => BiomarkerMode::UniformRandom { low: *low, high: *high },
            BiomarkersConfig::Fixed { p } => BiomarkerMode::Fixed(p.clone()),
            BiomarkersConfig::Correlated { low, high, correlation: r } => BiomarkerMode::CorrelatedRandom {
                low: *low,
                high: *high,
                r: correlation(src, "biomarkers", r)?,
            },
            BiomarkersConfig::Pinned { value, stratum: s } => BiomarkerMode::OnePrevalencePinned {
                value: *value,
                stratum: stratum(src, S, "biomarkers", s, m)?,
            },
        };
        if let Some(r) = &self.copula {
            spec.dependence = Dependence::GaussianCopula(correlation(src, "copula", r)?);
        }
        let hetero = |cells: &Option<Vec<CellVariance>>, low: Option<f64>, high: Option<f64>| match cells {
            Some(cells) => {
                if low.is_some() || high.is_some() {
                    return Err(src.error(S, "variance", "give either cells or low/high, not both"));
                }
                let entries = cells.iter().map(|c| (c.stratum.clone(), c.treatment.clone(), c.variance));
                Ok(CellVariances::Fixed(cell_values(src, S, "variance", m, structure, 1.0, entries)?))
            }
            None => Ok(CellVariances::Uniform {
                low: low.unwrap_or(0.5),
                high: high.unwrap_or(2.0),
            }),
        };
        spec.variance = match &self.variance {
            ScenarioVariance::KnownHomogeneous { sigma2 } => VarianceSpec::KnownHomogeneous { sigma2: *sigma2 },
            ScenarioVariance::UnknownHomogeneous { sigma2 } => VarianceSpec::UnknownHomogeneous { sigma2: *sigma2 },
            ScenarioVariance::KnownHeterogeneous { cells, low, high } => {
                VarianceSpec::KnownHeterogeneous(hetero(cells, *low, *high)?)
            }
            ScenarioVariance::UnknownHeterogeneous { cells, low, high } => {
                VarianceSpec::UnknownHeterogeneous(hetero(cells, *low, *high)?)
            }
        };
        if self.treatment_effect.is_some() || self.effects.is_some() {
            let mut values = CellValues::filled(m, structure, 0.0);
            if let Some(theta) = self.treatment_effect {
                values = CellValues::from_fn(m, structure, 0.0, |_, t| if t == Treatment::Control { 0.0 } else { theta });
            }
            for c in self.effects.iter().flatten() {
                let j = stratum(src, S, "effects", &c.stratum, m)?;
                let t = treatment(src, S, "effects", &c.treatment, j, structure)?;
                values.set(j, t, c.mean);
            }
            spec.effects = Some(values);
        }
        spec.validate().map_err(|e| src.error(S, "", e.to_string()))?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn src(text: &str) -> Source {
        Source::from_text("run.toml", text)
    }

    #[test]
    fn unknown_key_has_line() {
        let s = src("seed = 3\n\n[design]\nm = 1\nstrata = [10]\nbogus = 1\nvariance = { regime = \"known-homogeneous\", sigma2 = 1.0 }\n");
        let e = s.parse().unwrap_err();
        assert_eq!(e.line, Some(6), "{e}");
        assert!(e.message.contains("bogus"), "{e}");
    }

    #[test]
    fn unknown_key_inside_tagged_table() {
        let s = src("[design]\nm = 1\nstrata = [10]\nvariance = { regime = \"known-homogeneous\", sigma2 = 1.0, extra = 2 }\n");
        let e = s.parse().unwrap_err();
        assert_eq!(e.line, Some(4), "{e}");
    }

    #[test]
    fn semantic_error_points_at_key() {
        let s = src("[design]\nm = 1\nalpha = 0.7\nstrata = [10]\nvariance = { regime = \"known-homogeneous\", sigma2 = 1.0 }\n");
        let cfg = s.parse().unwrap();
        let e = cfg.design.unwrap().resolve(&s, 1).err().unwrap();
        assert_eq!(e.line, Some(3));
        assert_eq!(e.to_string().split(':').take(2).collect::<Vec<_>>(), ["run.toml", "3"]);
    }

    #[test]
    fn scenario_defaults() {
        let s = src("[scenario]\nm = 3\nn = 500\n");
        let cfg = s.parse().unwrap();
        let settings = Settings {
            seed: 9,
            replicates: Some(7),
            output: None,
            dump: None,
            format: Format::Csv,
        };
        let spec = cfg.scenario.unwrap().resolve(&s, &settings, SolverOptions::default()).unwrap();
        assert_eq!((spec.m, spec.n, spec.replicates, spec.seed), (3, 500, 7, 9));
        assert_eq!(spec.variance, VarianceSpec::UnknownHomogeneous { sigma2: 1.0 });
        assert_eq!(spec.biomarkers, BiomarkerMode::uniform());
    }

    #[test]
    fn cells_and_strata_are_exclusive() {
        let s = src("[design]\nm = 1\nstrata = [4]\ncells = [{ stratum = \"{1}\", treatment = \"C\", n = 2 }]\nvariance = { regime = \"known-homogeneous\", sigma2 = 1.0 }\n");
        let cfg = s.parse().unwrap();
        let e = cfg.design.unwrap().resolve(&s, 1).err().unwrap();
        assert_eq!(e.line, Some(1));
    }
}

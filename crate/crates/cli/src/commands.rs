//! The subcommands.

use std::fmt;
use std::io::{self, Write};
use std::path::Path;

use pwer_core::control::{self, Boundary, CriticalValueResult, ErrorRateReport, SolveMode};
use pwer_core::design::build_model;
use pwer_core::sim::{self, Metric, RepFailure, ScenarioSpec};
use pwer_core::strata::PrevalenceVector;

use crate::config::{BoundaryValue, ConfigError, RunConfig, Settings, Source};
use crate::records::{write_rows, write_summary, DumpRow, LfcRow, PairedRow, ReportLine, SummaryRow};

/// Rates below this are printed as zero.
pub const RATE_FLOOR: f64 = 1e-14;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<pwer_core::Error> for CliError {
    fn from(e: pwer_core::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Critical,
    Simulate,
    Rates,
    LfcCheck,
    EmptyStratumStudy,
}

pub struct Run<'a> {
    pub source: &'a Source,
    pub config: &'a RunConfig,
    pub settings: &'a Settings,
}

pub fn execute(command: Command, run: &Run) -> Result<(), CliError> {
    match command {
        Command::Critical => critical(run),
        Command::Rates => rates(run),
        Command::Simulate => simulate(run),
        Command::LfcCheck => lfc_check(run),
        Command::EmptyStratumStudy => empty_stratum_study(run),
    }
}

/// Writes through a temporary file in the target directory, renamed into
/// place only once complete. Without a path the output goes to stdout.
pub fn write_atomic(path: Option<&Path>, fill: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), CliError> {
    let io_err = |e: io::Error| CliError::Config(format!("cannot write output: {e}"));
    let Some(path) = path else {
        let stdout = io::stdout();
        let mut lock = stdout.lock();
        return fill(&mut lock).and_then(|_| lock.flush()).map_err(io_err);
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    {
        let mut w = io::BufWriter::new(tmp.as_file_mut());
        fill(&mut w).and_then(|_| w.flush()).map_err(io_err)?;
    }
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

fn section<'a, T>(value: &'a Option<T>, run: &Run, name: &str) -> Result<&'a T, CliError> {
    value
        .as_ref()
        .ok_or_else(|| CliError::Config(format!("{}: missing [{name}] section", run.source.path.display())))
}

fn solver(run: &Run) -> Result<control::SolverOptions, CliError> {
    Ok(run.config.solver.as_ref().map(|s| s.options(run.source)).transpose()?.unwrap_or_default())
}

fn solve(
    prev: &PrevalenceVector,
    adjusted: Option<&PrevalenceVector>,
    model: &pwer_core::design::DesignModel,
    alpha: f64,
    opts: &control::SolverOptions,
) -> pwer_core::Result<CriticalValueResult> {
    if model.is_approximate() {
        return control::solve_per_population(adjusted.unwrap_or(prev), model, alpha, opts);
    }
    match adjusted {
        Some(adj) => control::solve_max_of(prev, adj, model, alpha, opts),
        None => control::solve_equal(prev, model, alpha, opts),
    }
}

fn critical_lines(r: &CriticalValueResult) -> Vec<ReportLine> {
    const S: &str = "critical";
    let mode = match r.mode {
        SolveMode::Equal => "equal",
        SolveMode::PerPopulation => "per-population",
        SolveMode::MinPrevalenceAdjusted => "min-prevalence-adjusted",
    };
    let mut lines = vec![ReportLine::text(S, "mode", mode)];
    match &r.boundary {
        Boundary::Common(c) => lines.push(ReportLine::value(S, "boundary", *c)),
        Boundary::PerPopulation(c) => {
            for (i, ci) in c.iter().enumerate() {
                lines.push(ReportLine::value(S, "boundary", *ci).at(i + 1));
            }
        }
    }
    lines.extend([
        ReportLine::value(S, "achieved", r.achieved),
        ReportLine::value(S, "alpha", r.alpha),
        ReportLine::value(S, "iterations", r.iterations as f64),
        ReportLine::value(S, "bracket_lo", r.bracket.0),
        ReportLine::value(S, "bracket_hi", r.bracket.1),
        ReportLine::value(S, "numerical_error", r.numerical_error),
        ReportLine::value(S, "approximate", f64::from(u8::from(r.approximate))),
    ]);
    if let (Some(u), Some(a)) = (r.unadjusted, r.adjusted) {
        lines.push(ReportLine::value(S, "unadjusted", u));
        lines.push(ReportLine::value(S, "adjusted", a));
    }
    for (i, p) in r.populations.iter().enumerate() {
        lines.push(ReportLine::value(S, "population_achieved", p.achieved).at(i + 1));
    }
    lines
}

fn floor(x: f64, floored: &mut usize) -> f64 {
    if x.abs() < RATE_FLOOR && x != 0.0 {
        *floored += 1;
        0.0
    } else {
        x
    }
}

fn rate_lines(section: &str, r: &ErrorRateReport, floored: &mut usize) -> Vec<ReportLine> {
    let mut lines = vec![
        ReportLine::value(section, "pwer", floor(r.pwer, floored)),
        ReportLine::value(section, "max_swer", floor(r.max_swer, floored)),
        ReportLine::value(section, "mean_swer", floor(r.mean_swer, floored)),
        ReportLine::value(section, "numerical_error", r.numerical_error),
    ];
    for s in &r.strata {
        lines.push(ReportLine::value(section, "weight", s.weight).at(s.stratum));
        lines.push(ReportLine::value(section, "swer", floor(s.swer, floored)).at(s.stratum));
        lines.push(ReportLine::value(section, "error", s.error).at(s.stratum));
    }
    lines
}

fn floor_note(lines: &mut Vec<ReportLine>, floored: usize) {
    if floored > 0 {
        let note = format!("{floored} rates below {RATE_FLOOR:e} reported as 0");
        eprintln!("note: {note}");
        lines.push(ReportLine::text("note", "floor", note));
    }
}

fn critical(run: &Run) -> Result<(), CliError> {
    let cfg = section(&run.config.design, run, "design")?;
    let design = cfg.resolve(run.source, run.settings.seed)?;
    let opts = solver(run)?;
    let model = build_model(&design.counts, &design.regime, design.structure)?;
    let estimate = design.estimator.estimate(&design.counts)?;
    let solved = solve(&estimate.base, estimate.adjusted.as_ref(), &model, design.alpha, &opts)?;
    let report = control::error_rates(&solved.boundary, &estimate.base, &model, &opts.budget)?;
    let mut lines = critical_lines(&solved);
    let mut floored = 0;
    lines.extend(rate_lines("rates", &report, &mut floored));
    floor_note(&mut lines, floored);
    eprintln!("boundary {:?}, estimated PWER {:.6}", solved.boundary.values(design.m), solved.achieved);
    let format = run.settings.format;
    write_atomic(run.settings.output.as_deref(), |w| write_rows(w, format, &lines))
}

fn prevalences(run: &Run, key: &str, m: usize, w: &[f64]) -> Result<PrevalenceVector, CliError> {
    PrevalenceVector::new(m, w.to_vec()).map_err(|e| run.source.error("rates", key, e.to_string()).into())
}

fn rates(run: &Run) -> Result<(), CliError> {
    let cfg = section(&run.config.design, run, "design")?;
    let rc = section(&run.config.rates, run, "rates")?;
    let design = cfg.resolve(run.source, run.settings.seed)?;
    let opts = solver(run)?;
    let model = build_model(&design.counts, &design.regime, design.structure)?;
    let boundary = match &rc.boundary {
        BoundaryValue::Common(c) => Boundary::Common(*c),
        BoundaryValue::PerPopulation(c) => {
            if c.len() != design.m {
                return Err(run
                    .source
                    .error("rates", "boundary", format!("{} boundaries for m = {}", c.len(), design.m))
                    .into());
            }
            Boundary::PerPopulation(c.clone())
        }
    };
    let prev = match &rc.prevalences {
        Some(w) => prevalences(run, "prevalences", design.m, w)?,
        None => design.estimator.estimate(&design.counts)?.base,
    };
    let report = control::error_rates(&boundary, &prev, &model, &opts.budget)?;
    let mut floored = 0;
    let mut lines = rate_lines("rates", &report, &mut floored);
    if let Some(w) = &rc.compare {
        let other = prevalences(run, "compare", design.m, w)?;
        let second = control::error_rates(&boundary, &other, &model, &opts.budget)?;
        lines.extend(rate_lines("compare", &second, &mut floored));
        // SWER_J does not depend on the weights, so the PWER difference is
        // the weighted sum of the SWERs.
        let identity: f64 = prev
            .iter()
            .zip(other.iter())
            .map(|((j, a), (_, b))| {
                let swer = report.swer(j).or_else(|| second.swer(j)).unwrap_or(0.0);
                (a - b) * swer
            })
            .sum();
        lines.push(ReportLine::value("difference", "pwer", report.pwer - second.pwer));
        lines.push(ReportLine::value("difference", "weighted_swer", identity));
        lines.push(ReportLine::value(
            "difference",
            "numerical_error",
            report.numerical_error + second.numerical_error,
        ));
    }
    floor_note(&mut lines, floored);
    let format = run.settings.format;
    write_atomic(run.settings.output.as_deref(), |w| write_rows(w, format, &lines))
}

fn scenario(run: &Run) -> Result<ScenarioSpec, CliError> {
    let cfg = section(&run.config.scenario, run, "scenario")?;
    Ok(cfg.resolve(run.source, run.settings, solver(run)?)?)
}

fn report_failures(failures: &[RepFailure]) {
    if failures.is_empty() {
        return;
    }
    let mut counts = std::collections::BTreeMap::<&str, usize>::new();
    for f in failures {
        *counts.entry(f.reason.as_str()).or_default() += 1;
    }
    let parts: Vec<String> = counts.iter().map(|(r, n)| format!("{r}: {n}")).collect();
    eprintln!("excluded {} replicates ({})", failures.len(), parts.join(", "));
}

fn no_records(failures: &[RepFailure]) -> CliError {
    let first = failures.first().map(|f| f.message.as_str()).unwrap_or("no replicates");
    CliError::Numerical(format!("every replicate failed; first failure: {first}"))
}

fn simulate(run: &Run) -> Result<(), CliError> {
    let spec = scenario(run)?;
    let outcome = sim::run_scenario(&spec)?;
    report_failures(&outcome.failures);
    if outcome.records.is_empty() {
        return Err(no_records(&outcome.failures));
    }
    let rows = Metric::ALL
        .iter()
        .map(|&metric| {
            sim::summarize(&outcome.records, metric).map(|s| SummaryRow::new(metric.name(), spec.m, spec.n, &s))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let format = run.settings.format;
    if let Some(dump) = &run.settings.dump {
        let dump_rows: Vec<DumpRow> = outcome.records.iter().map(DumpRow::from).collect();
        write_atomic(Some(dump), |w| write_rows(w, format, &dump_rows))?;
    }
    write_atomic(run.settings.output.as_deref(), |w| write_summary(w, format, &rows))
}

fn lfc_check(run: &Run) -> Result<(), CliError> {
    let spec = scenario(run)?;
    let report = sim::lfc_check(&spec)?;
    report_failures(&report.failures);
    if report.comparisons.is_empty() {
        return Err(no_records(&report.failures));
    }
    eprintln!(
        "{} designs, {} with PWER under the effects above the null by more than 3 SE",
        report.comparisons.len(),
        report.violations
    );
    let rows: Vec<LfcRow> = report.comparisons.iter().map(LfcRow::from).collect();
    let format = run.settings.format;
    write_atomic(run.settings.output.as_deref(), |w| write_rows(w, format, &rows))
}

fn empty_stratum_study(run: &Run) -> Result<(), CliError> {
    let spec = scenario(run)?;
    let pi_min = run.config.scenario.as_ref().and_then(|s| s.pi_min);
    let study = sim::empty_stratum_study(&spec, pi_min)?;
    report_failures(&study.failures);
    eprintln!(
        "pi_min {}, {} replicates with an empty stratum, {} without",
        study.pi_min,
        study.records.len(),
        study.skipped
    );
    type Pick = fn(&sim::BoundaryRates) -> f64;
    let metrics: [(&str, Pick); 4] = [
        ("true_pwer", |r| r.true_pwer),
        ("max_swer", |r| r.max_swer),
        ("mean_swer", |r| r.mean_swer),
        ("boundary", |r| r.boundary),
    ];
    let mut rows = Vec::new();
    for (name, pick) in metrics {
        for (adjusted, suffix) in [(false, "unadjusted"), (true, "adjusted")] {
            let s = study.summarize(adjusted, pick)?;
            rows.push(SummaryRow::new(&format!("{name}_{suffix}"), spec.m, spec.n, &s));
        }
    }
    let format = run.settings.format;
    if let Some(dump) = &run.settings.dump {
        let dump_rows: Vec<PairedRow> = study.records.iter().map(PairedRow::from).collect();
        write_atomic(Some(dump), |w| write_rows(w, format, &dump_rows))?;
    }
    write_atomic(run.settings.output.as_deref(), |w| write_summary(w, format, &rows))
}


//! Output rows and their CSV / JSON-lines encodings.

use std::io::{self, Write};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use pwer_core::sim::{BoundaryRates, PairedRecord, RateMethod, RepRecord, SummaryStats};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

/// Six significant digits, fixed notation for moderate magnitudes.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let exp: i32 = sci.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
    if (-5..=5).contains(&exp) {
        format!("{:.*}", (5 - exp) as usize, x)
    } else {
        sci
    }
}

/// One row of a summary table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub metric: String,
    pub m: usize,
    #[serde(rename = "N")]
    pub n: u64,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub q1: f64,
    pub med: f64,
    pub q3: f64,
    pub max: f64,
}

impl SummaryRow {
    /// Values rounded to six significant digits.
    pub fn new(metric: &str, m: usize, n: u64, s: &SummaryStats) -> Self {
        let r = |x: f64| sig6(x).parse::<f64>().unwrap_or(x);
        Self {
            metric: metric.to_string(),
            m,
            n,
            mean: r(s.mean),
            sd: r(s.sd),
            min: r(s.min),
            q1: r(s.q1),
            med: r(s.median),
            q3: r(s.q3),
            max: r(s.max),
        }
    }

    fn fields(&self) -> Vec<String> {
        let mut v = vec![self.metric.clone(), self.m.to_string(), self.n.to_string()];
        v.extend([self.mean, self.sd, self.min, self.q1, self.med, self.q3, self.max].map(sig6));
        v
    }
}

pub const SUMMARY_HEADER: [&str; 10] = ["metric", "m", "N", "mean", "sd", "min", "q1", "med", "q3", "max"];

pub fn write_summary(w: &mut dyn Write, format: Format, rows: &[SummaryRow]) -> io::Result<()> {
    match format {
        Format::Csv => {
            let mut out = csv::Writer::from_writer(w);
            out.write_record(SUMMARY_HEADER)?;
            for row in rows {
                out.write_record(row.fields())?;
            }
            out.flush()
        }
        Format::Jsonl => write_jsonl(w, rows),
    }
}

pub fn write_rows<T: Serialize>(w: &mut dyn Write, format: Format, rows: &[T]) -> io::Result<()> {
    match format {
        Format::Csv => {
            let mut out = csv::Writer::from_writer(w);
            for row in rows {
                out.serialize(row).map_err(io::Error::other)?;
            }
            out.flush()
        }
        Format::Jsonl => write_jsonl(w, rows),
    }
}

fn write_jsonl<T: Serialize>(w: &mut dyn Write, rows: &[T]) -> io::Result<()> {
    for row in rows {
        serde_json::to_writer(&mut *w, row)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads rows written by [`write_rows`] or [`write_summary`].
pub fn read_rows<T: for<'de> Deserialize<'de>>(text: &str, format: Format) -> Result<Vec<T>, String> {
    match format {
        Format::Csv => csv::Reader::from_reader(text.as_bytes())
            .deserialize()
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string()),
        Format::Jsonl => text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| e.to_string()))
            .collect(),
    }
}

/// Long-format report line: `section` groups lines, `target` names a
/// stratum or population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportLine {
    pub section: String,
    pub key: String,
    pub target: Option<String>,
    pub value: Option<f64>,
    pub text: Option<String>,
}

impl ReportLine {
    pub fn value(section: &str, key: &str, value: f64) -> Self {
        Self {
            section: section.into(),
            key: key.into(),
            target: None,
            value: Some(value),
            text: None,
        }
    }

    pub fn text(section: &str, key: &str, text: impl Into<String>) -> Self {
        Self {
            section: section.into(),
            key: key.into(),
            target: None,
            value: None,
            text: Some(text.into()),
        }
    }

    pub fn at(mut self, target: impl ToString) -> Self {
        self.target = Some(target.to_string());
        self
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

fn split(s: &str) -> Result<Vec<f64>, String> {
    s.split(';')
        .map(|x| x.parse::<f64>().map_err(|e| format!("bad boundary '{x}': {e}")))
        .collect()
}

/// Per-replicate record of `simulate`, at full precision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DumpRow {
    pub replicate: usize,
    pub true_pwer: f64,
    pub max_swer: f64,
    pub mean_swer: f64,
    pub estimated_pwer: f64,
    /// Population boundaries separated by `;`.
    pub boundary: String,
    pub counts_digest: String,
    pub had_empty_stratum: bool,
    pub method: String,
    pub mc_se: Option<f64>,
}

impl From<&RepRecord> for DumpRow {
    fn from(r: &RepRecord) -> Self {
        let (method, mc_se) = match r.method {
            RateMethod::Formula => ("formula", None),
            RateMethod::MonteCarlo { se } => ("monte-carlo", Some(se)),
        };
        Self {
            replicate: r.replicate,
            true_pwer: r.true_pwer,
            max_swer: r.max_swer,
            mean_swer: r.mean_swer,
            estimated_pwer: r.estimated_pwer,
            boundary: join(&r.boundary),
            counts_digest: r.counts_digest.clone(),
            had_empty_stratum: r.had_empty_stratum,
            method: method.into(),
            mc_se,
        }
    }
}

impl TryFrom<DumpRow> for RepRecord {
    type Error = String;

    fn try_from(d: DumpRow) -> Result<Self, String> {
        let method = match (d.method.as_str(), d.mc_se) {
            ("formula", None) => RateMethod::Formula,
            ("monte-carlo", Some(se)) => RateMethod::MonteCarlo { se },
            (m, se) => return Err(format!("inconsistent method '{m}' with standard error {se:?}")),
        };
        Ok(RepRecord {
            replicate: d.replicate,
            true_pwer: d.true_pwer,
            max_swer: d.max_swer,
            mean_swer: d.mean_swer,
            boundary: split(&d.boundary)?,
            estimated_pwer: d.estimated_pwer,
            counts_digest: d.counts_digest,
            had_empty_stratum: d.had_empty_stratum,
            method,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LfcRow {
    pub replicate: usize,
    pub boundary: String,
    pub pwer_effects: f64,
    pub pwer_null: f64,
    pub difference: f64,
    pub se: f64,
    pub violation: bool,
}

impl From<&pwer_core::sim::LfcComparison> for LfcRow {
    fn from(c: &pwer_core::sim::LfcComparison) -> Self {
        Self {
            replicate: c.replicate,
            boundary: join(&c.boundary),
            pwer_effects: c.pwer_effects,
            pwer_null: c.pwer_null,
            difference: c.difference,
            se: c.se,
            violation: c.violation,
        }
    }
}

/// Per-replicate record of the empty-stratum study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedRow {
    pub replicate: usize,
    pub empty_strata: usize,
    pub counts_digest: String,
    pub unadjusted_boundary: f64,
    pub unadjusted_true_pwer: f64,
    pub unadjusted_max_swer: f64,
    pub unadjusted_mean_swer: f64,
    pub adjusted_boundary: f64,
    pub adjusted_true_pwer: f64,
    pub adjusted_max_swer: f64,
    pub adjusted_mean_swer: f64,
}

impl From<&PairedRecord> for PairedRow {
    fn from(r: &PairedRecord) -> Self {
        Self {
            replicate: r.replicate,
            empty_strata: r.empty_strata,
            counts_digest: r.counts_digest.clone(),
            unadjusted_boundary: r.unadjusted.boundary,
            unadjusted_true_pwer: r.unadjusted.true_pwer,
            unadjusted_max_swer: r.unadjusted.max_swer,
            unadjusted_mean_swer: r.unadjusted.mean_swer,
            adjusted_boundary: r.adjusted.boundary,
            adjusted_true_pwer: r.adjusted.true_pwer,
            adjusted_max_swer: r.adjusted.max_swer,
            adjusted_mean_swer: r.adjusted.mean_swer,
        }
    }
}

impl From<PairedRow> for PairedRecord {
    fn from(r: PairedRow) -> Self {
        PairedRecord {
            replicate: r.replicate,
            empty_strata: r.empty_strata,
            unadjusted: BoundaryRates {
                boundary: r.unadjusted_boundary,
                true_pwer: r.unadjusted_true_pwer,
                max_swer: r.unadjusted_max_swer,
                mean_swer: r.unadjusted_mean_swer,
            },
            adjusted: BoundaryRates {
                boundary: r.adjusted_boundary,
                true_pwer: r.adjusted_true_pwer,
                max_swer: r.adjusted_max_swer,
                mean_swer: r.adjusted_mean_swer,
            },
            counts_digest: r.counts_digest,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.02501), "0.0250100");
        assert_eq!(sig6(0.000420123456), "0.000420123");
        assert_eq!(sig6(1.959963984540054), "1.95996");
        assert_eq!(sig6(123456.7), "123457");
        assert_eq!(sig6(9.9999996), "10.0000");
        assert_eq!(sig6(1.5e-9), "1.50000e-9");
        assert_eq!(sig6(0.0), "0");
    }

    fn record(method: RateMethod) -> RepRecord {
        RepRecord {
            replicate: 4,
            true_pwer: 0.1 + 0.2,
            max_swer: 1.0 / 3.0,
            mean_swer: 2.0f64.sqrt() / 50.0,
            boundary: vec![1.959963984540054, 2.2360679774997896],
            estimated_pwer: 0.025000000000000001,
            counts_digest: "abc".into(),
            had_empty_stratum: true,
            method,
        }
    }

    #[test]
    fn dump_round_trips_in_both_formats() {
        let recs = [record(RateMethod::Formula), record(RateMethod::MonteCarlo { se: 1e-5 / 3.0 })];
        let rows: Vec<DumpRow> = recs.iter().map(DumpRow::from).collect();
        for format in [Format::Csv, Format::Jsonl] {
            let mut buf = Vec::new();
            write_rows(&mut buf, format, &rows).unwrap();
            let back: Vec<DumpRow> = read_rows(std::str::from_utf8(&buf).unwrap(), format).unwrap();
            let back: Vec<RepRecord> = back.into_iter().map(|d| RepRecord::try_from(d).unwrap()).collect();
            assert_eq!(back, recs);
        }
    }

    #[test]
    fn summary_reparses_to_rounded_row() {
        let s = SummaryStats {
            n: 3,
            mean: 0.025012345,
            sd: 0.00042,
            min: 0.0231,
            q1: 0.0245,
            median: 0.025,
            q3: 0.0255,
            max: 0.027,
        };
        let rows = vec![SummaryRow::new("true_pwer", 3, 500, &s)];
        for format in [Format::Csv, Format::Jsonl] {
            let mut buf = Vec::new();
            write_summary(&mut buf, format, &rows).unwrap();
            let back: Vec<SummaryRow> = read_rows(std::str::from_utf8(&buf).unwrap(), format).unwrap();
            assert_eq!(back, rows);
        }
        assert_eq!(rows[0].mean, 0.0250123);
    }

    #[test]
    fn report_lines_round_trip() {
        let lines = vec![
            ReportLine::value("critical", "boundary", 1.959963984540054),
            ReportLine::text("critical", "mode", "equal"),
            ReportLine::value("rates", "swer", 1e-300).at("{1,2}"),
        ];
        for format in [Format::Csv, Format::Jsonl] {
            let mut buf = Vec::new();
            write_rows(&mut buf, format, &lines).unwrap();
            let back: Vec<ReportLine> = read_rows(std::str::from_utf8(&buf).unwrap(), format).unwrap();
            assert_eq!(back, lines);
        }
    }
}

//! Result files: `summary.json`, `rolling.csv` and `regions.csv`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::spci::RegionReport;

use super::metrics::{summarize, Evaluation, SummaryRecord};
use super::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;
pub const SUMMARY_FILE: &str = "summary.json";
pub const ROLLING_FILE: &str = "rolling.csv";
pub const REGIONS_FILE: &str = "regions.csv";

/// C-style `%.10g`.
pub fn format_g(x: f64) -> String {
    const DIGITS: i32 = 10;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= DIGITS {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn format_opt(x: Option<f64>) -> String {
    x.map(format_g).unwrap_or_default()
}

/// One method's result on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub method: String,
    pub p: usize,
    pub coverage: f64,
    pub size: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub schema_version: u32,
    pub per_trial: Vec<TrialRecord>,
    pub summary: Vec<SummaryRecord>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_summary(path: &Path, file: &SummaryFile) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(file).expect("summary serialises");
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn read_summary(path: &Path) -> Result<SummaryFile, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Malformed(format!("{}: {e}", path.display())))
}

/// A method's per-step results on one trial.
pub struct MethodRun<'a> {
    pub trial: usize,
    pub method: &'a str,
    pub p: usize,
    pub reports: &'a [RegionReport],
    pub evaluation: &'a Evaluation,
}

pub fn write_rolling(path: &Path, runs: &[MethodRun<'_>]) -> Result<(), HarnessError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let mut body = String::from("trial,step,method,rolling_coverage,rolling_size\n");
    for run in runs {
        for pt in &run.evaluation.rolling {
            body.push_str(&format!(
                "{},{},{},{},{}\n",
                run.trial,
                pt.step,
                run.method,
                format_g(pt.coverage),
                format_g(pt.size)
            ));
        }
    }
    w.write_all(body.as_bytes()).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub const REGIONS_HEADER: &str = "trial,method,p,step,contained,volume,beta_hat,inner_sq,outer_sq,rank";

pub fn write_regions(path: &Path, runs: &[MethodRun<'_>]) -> Result<(), HarnessError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    writeln!(w, "{REGIONS_HEADER}").map_err(io_err(path))?;
    for run in runs {
        for r in run.reports {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                run.trial,
                run.method,
                run.p,
                r.step,
                u8::from(r.contained),
                format_g(r.volume),
                format_opt(r.beta_hat),
                format_opt(r.inner_sq),
                format_opt(r.outer_sq),
                r.rank
            )
            .map_err(io_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

#[derive(Debug, Deserialize)]
struct RegionRow {
    trial: usize,
    method: String,
    p: usize,
    contained: u8,
    volume: f64,
}

/// Recomputes per-method summaries from `regions.csv`, in order of first
/// appearance.
pub fn summarize_regions(path: &Path) -> Result<Vec<SummaryRecord>, HarnessError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| HarnessError::Malformed(e.to_string()))?;
    // method -> (p, trial -> (hits, steps, volume sum))
    let mut order: Vec<String> = Vec::new();
    let mut acc: BTreeMap<String, (usize, BTreeMap<usize, (usize, usize, f64)>)> = BTreeMap::new();
    for row in reader.deserialize::<RegionRow>() {
        let row = row.map_err(|e| HarnessError::Malformed(e.to_string()))?;
        if !acc.contains_key(&row.method) {
            order.push(row.method.clone());
        }
        let entry = acc.entry(row.method).or_insert((row.p, BTreeMap::new()));
        let t = entry.1.entry(row.trial).or_insert((0, 0, 0.0));
        t.0 += usize::from(row.contained == 1);
        t.1 += 1;
        t.2 += row.volume;
    }
    Ok(order
        .iter()
        .map(|m| {
            let (p, trials) = &acc[m];
            let coverages: Vec<f64> = trials.values().map(|&(h, n, _)| h as f64 / n as f64).collect();
            let sizes: Vec<f64> = trials.values().map(|&(_, n, v)| v / n as f64).collect();
            summarize(m, *p, &coverages, &sizes)
        })
        .collect())
}

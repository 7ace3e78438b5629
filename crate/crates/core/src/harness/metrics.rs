//! Coverage, size and their trailing-window versions.

use serde::{Deserialize, Serialize};

use crate::spci::RegionReport;

use super::HarnessError;

/// Trailing-window means ending at `step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RollingPoint {
    pub step: usize,
    pub coverage: f64,
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Fraction of steps whose response was contained.
    pub coverage: f64,
    /// Mean region volume.
    pub size: f64,
    /// One point per step once the window has filled.
    pub rolling: Vec<RollingPoint>,
}

pub fn evaluate(reports: &[RegionReport], window: usize) -> Result<Evaluation, HarnessError> {
    if reports.is_empty() {
        return Err(HarnessError::EmptyReports);
    }
    let n = reports.len() as f64;
    let coverage = reports.iter().filter(|r| r.contained).count() as f64 / n;
    let size = reports.iter().map(|r| r.volume).sum::<f64>() / n;
    let rolling = if window == 0 || window > reports.len() {
        Vec::new()
    } else {
        reports
            .windows(window)
            .map(|w| RollingPoint {
                step: w[window - 1].step,
                coverage: w.iter().filter(|r| r.contained).count() as f64 / window as f64,
                size: w.iter().map(|r| r.volume).sum::<f64>() / window as f64,
            })
            .collect()
    };
    Ok(Evaluation {
        coverage,
        size,
        rolling,
    })
}

/// Aggregate over trials for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub method: String,
    pub p: usize,
    pub coverage_mean: f64,
    pub coverage_std: f64,
    pub size_mean: f64,
    pub size_std: f64,
    pub trials: usize,
}

/// Mean and sample standard deviation; the deviation is 0 for one value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn summarize(method: &str, p: usize, coverages: &[f64], sizes: &[f64]) -> SummaryRecord {
    let (coverage_mean, coverage_std) = mean_std(coverages);
    let (size_mean, size_std) = mean_std(sizes);
    SummaryRecord {
        method: method.to_string(),
        p,
        coverage_mean,
        coverage_std,
        size_mean,
        size_std,
        trials: coverages.len(),
    }
}

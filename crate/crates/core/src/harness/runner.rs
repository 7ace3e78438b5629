//! Trial orchestration.

use std::path::PathBuf;

use log::info;

use crate::baselines::{self, CoordwiseConfig, CoordwiseSpci, CopulaSpci};
use crate::datagen::{self, NoiseKind};
use crate::forecast::Forecaster;
use crate::par::Execution;
use crate::quantile::{QuantileConfig, QuantileEngine};
use crate::series::MultiSeries;
use crate::spci::{self, RegionReport, SpciEngine};

use super::config::{DataSource, ExperimentConfig, Method, ProcessKind};
use super::ingest::ingest_csv;
use super::metrics::{evaluate, summarize, Evaluation, SummaryRecord};
use super::output::{self, MethodRun, SummaryFile, TrialRecord};
use super::HarnessError;

/// Per-step reports of every configured method on one trial.
#[derive(Debug, Clone)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub p: usize,
    /// In the configured method order.
    pub methods: Vec<(Method, Vec<RegionReport>)>,
}

/// Everything an experiment produced.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub summary: SummaryFile,
    pub trials: Vec<TrialResult>,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentOutcome {
    pub fn record(&self, method: Method) -> Option<&SummaryRecord> {
        self.summary.summary.iter().find(|r| r.method == method.as_str())
    }

    pub fn trial_records(&self, method: Method) -> impl Iterator<Item = &TrialRecord> {
        self.summary.per_trial.iter().filter(move |r| r.method == method.as_str())
    }
}

/// Offsets the forest seed by the trial seed.
fn seeded(quantile: &QuantileConfig, seed: u64) -> QuantileConfig {
    let mut q = quantile.clone();
    if let QuantileEngine::Qrf(f) = &mut q.engine {
        f.rng_seed = f.rng_seed.wrapping_add(seed);
    }
    q
}

/// The series and training length for one trial.
pub fn trial_data(cfg: &ExperimentConfig, seed: u64, csv: Option<&MultiSeries>) -> Result<(MultiSeries, usize), HarnessError> {
    match &cfg.data {
        DataSource::Simulate(s) => {
            let spec = match s.process {
                ProcessKind::Ar => datagen::make_ar_spec(s.dim, s.order, seed),
                ProcessKind::Var => datagen::make_var_spec(s.dim, s.order, seed),
            };
            let spec = if s.noise == NoiseKind::Gaussian { spec } else { spec.with_noise(s.noise) };
            let series = datagen::simulate(&spec, s.n_train + s.n_test, s.burn_in)?;
            Ok((series, s.n_train))
        }
        DataSource::Csv(_) => {
            let series = csv.expect("csv series loaded before trials").clone();
            let train = (cfg.train_fraction * series.len() as f64).floor() as usize;
            Ok((series, train))
        }
    }
}

/// Runs every configured method on one series.
pub fn run_methods(
    cfg: &ExperimentConfig,
    series: &MultiSeries,
    train_len: usize,
    seed: u64,
) -> Result<Vec<(Method, Vec<RegionReport>)>, HarnessError> {
    let mut spci_cfg = cfg.engine.spci_config(cfg.alpha);
    spci_cfg.quantile = seeded(&spci_cfg.quantile, seed);
    let split = spci::prepare_split(series, train_len, &spci_cfg.forecast)?;
    let lags = spci_cfg.forecast.lags;
    let p = series.dim();
    let steps = train_len..series.len();

    let wants = |m: Method| cfg.methods.contains(&m);
    let mut multidim = Vec::new();
    let mut hull = Vec::new();
    if wants(Method::MultidimSpci) || wants(Method::Hull) {
        let mut engine = SpciEngine::new(
            spci_cfg.clone(),
            split.fit.forecaster.clone(),
            &split.fit.residuals,
            &split.fit.features,
        )?;
        for t in steps.clone() {
            let x = lags.row(series, t);
            let y = series.row(t);
            let prepared = engine.prepare(&x)?;
            if wants(Method::Hull) {
                let spec = prepared.spec().ok_or(HarnessError::DegenerateRegion { step: t })?;
                let region = baselines::hull_from_covered(engine.buffer().iter(), spec)?;
                hull.push(RegionReport {
                    step: t,
                    contained: baselines::hull_contains(&region, &(y - &prepared.prediction))?,
                    volume: region.volume(),
                    beta_hat: None,
                    inner_sq: None,
                    outer_sq: None,
                    rank: p,
                });
            }
            multidim.push(engine.observe(t, prepared, y)?);
        }
    }

    let mut out = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let reports = match method {
            Method::MultidimSpci => std::mem::take(&mut multidim),
            Method::Hull => std::mem::take(&mut hull),
            Method::CoordwiseSpci => {
                let ccfg = CoordwiseConfig {
                    alpha: cfg.alpha,
                    beta_grid: spci_cfg.beta_grid,
                    mode: cfg.engine.interval_mode,
                    quantile: spci_cfg.quantile.clone(),
                    window: spci_cfg.window,
                };
                let mut engine = CoordwiseSpci::new(&ccfg, split.fit.forecaster.clone(), &split.fit.residuals)?;
                steps
                    .clone()
                    .map(|t| engine.step(t, &lags.row(series, t), series.row(t)))
                    .collect::<Result<_, _>>()?
            }
            Method::Copula => {
                let mut engine = CopulaSpci::new(
                    cfg.alpha,
                    split.fit.forecaster.clone(),
                    &split.fit.residuals,
                    spci_cfg.window,
                )?;
                steps
                    .clone()
                    .map(|t| engine.step(t, &lags.row(series, t), series.row(t)))
                    .collect::<Result<_, _>>()?
            }
        };
        debug_assert_eq!(split.fit.forecaster.output_dim(), p);
        out.push((method, reports));
    }
    Ok(out)
}

/// Runs every trial, without writing files.
pub fn run_trials(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<TrialResult>, HarnessError> {
    cfg.validate()?;
    let csv = match &cfg.data {
        DataSource::Csv(c) => Some(ingest_csv(&c.path, &c.columns)?),
        DataSource::Simulate(_) => None,
    };
    let results = exec.map_range(cfg.trials, |trial| {
        let seed = cfg.seed.wrapping_add(trial as u64);
        let (series, train_len) = trial_data(cfg, seed, csv.as_ref())?;
        let methods = run_methods(cfg, &series, train_len, seed)?;
        info!("trial {trial} finished");
        Ok(TrialResult {
            trial,
            seed,
            p: series.dim(),
            methods,
        })
    });
    results.into_iter().collect()
}

/// Runs the experiment and writes the three result files when an output
/// directory is configured.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, HarnessError> {
    run_experiment_with(cfg, Execution::default())
}

pub fn run_experiment_with(cfg: &ExperimentConfig, exec: Execution) -> Result<ExperimentOutcome, HarnessError> {
    let trials = run_trials(cfg, exec)?;

    let mut evaluations: Vec<Vec<Evaluation>> = Vec::with_capacity(trials.len());
    let mut per_trial = Vec::new();
    for t in &trials {
        let mut evs = Vec::with_capacity(t.methods.len());
        for (method, reports) in &t.methods {
            let ev = evaluate(reports, cfg.rolling_window)?;
            per_trial.push(TrialRecord {
                trial: t.trial,
                seed: t.seed,
                method: method.as_str().to_string(),
                p: t.p,
                coverage: ev.coverage,
                size: ev.size,
                steps: reports.len(),
            });
            evs.push(ev);
        }
        evaluations.push(evs);
    }
    let summary = cfg
        .methods
        .iter()
        .map(|m| {
            let rows: Vec<&TrialRecord> = per_trial.iter().filter(|r| r.method == m.as_str()).collect();
            let cov: Vec<f64> = rows.iter().map(|r| r.coverage).collect();
            let size: Vec<f64> = rows.iter().map(|r| r.size).collect();
            summarize(m.as_str(), cfg.data.dim(), &cov, &size)
        })
        .collect();
    let summary = SummaryFile {
        schema_version: output::SCHEMA_VERSION,
        per_trial,
        summary,
    };

    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
            path: dir.clone(),
            source,
        })?;
        let runs: Vec<MethodRun<'_>> = trials
            .iter()
            .zip(&evaluations)
            .flat_map(|(t, evs)| {
                t.methods.iter().zip(evs).map(move |((m, reports), ev)| MethodRun {
                    trial: t.trial,
                    method: m.as_str(),
                    p: t.p,
                    reports,
                    evaluation: ev,
                })
            })
            .collect();
        output::write_summary(&dir.join(output::SUMMARY_FILE), &summary)?;
        output::write_rolling(&dir.join(output::ROLLING_FILE), &runs)?;
        output::write_regions(&dir.join(output::REGIONS_FILE), &runs)?;
        info!("wrote results to {}", dir.display());
    }
    Ok(ExperimentOutcome {
        summary,
        trials,
        output_dir: cfg.output_dir.clone(),
    })
}

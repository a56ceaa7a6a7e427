//! Config-driven experiment runner for the KMPE library.
//!
//! [`run`] executes one [`ExperimentConfig`]: `trials` repetitions with seeds
//! `seed, seed + 1, …`, run in parallel on a rayon pool (capped by the
//! `KMPE_THREADS` environment variable) and gathered in trial order, so the
//! written CSV files do not depend on scheduling.

pub mod config;
pub mod props;
pub mod report;
pub mod tasks;

use std::fmt::Display;
use std::fs::File;
use std::path::{Path, PathBuf};

use kmpe_core::KmpeError;
use rayon::prelude::*;

pub use config::{ExperimentConfig, Task};
use report::{mean_std, Outputs, TrialRow};
use tasks::TrialOutcome;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "KMPE_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("trial {trial} (seed {seed}) diverged at iteration {iteration}")]
    Divergence { trial: usize, seed: u64, iteration: usize },

    #[error("{failed} of {total} properties failed")]
    PropertiesFailed { failed: usize, total: usize },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Core(#[from] KmpeError),
}

impl CliError {
    pub fn config(e: impl Display) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    /// 2 for configuration and usage problems, 3 for numerical divergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Divergence { .. } | CliError::Core(KmpeError::Divergence { .. }) => 3,
            _ => 1,
        }
    }
}

/// Per-model summary of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSummary {
    pub name: String,
    pub rows: Vec<TrialRow>,
    pub train_mean: f64,
    pub train_std: f64,
    pub test_mean: f64,
    pub test_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub models: Vec<ModelSummary>,
    pub properties: Vec<props::PropertySummary>,
    pub outputs: Outputs,
}

impl RunReport {
    pub fn model(&self, name: &str) -> Option<&ModelSummary> {
        self.models.iter().find(|m| m.name == name)
    }
}

fn pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n: usize = raw
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{THREADS_ENV} must be a nonnegative integer, got '{raw}'")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| CliError::Config(e.to_string()))
}

/// Runs `trial` for every trial index; on failure reports the lowest failing trial.
fn run_trials<F>(cfg: &ExperimentConfig, trial: F) -> Result<Vec<TrialOutcome>, CliError>
where
    F: Fn(u64) -> Result<TrialOutcome, CliError> + Sync,
{
    let results: Vec<Result<TrialOutcome, CliError>> = pool()?.install(|| {
        (0..cfg.trials).into_par_iter().map(|i| trial(cfg.seed.wrapping_add(i as u64))).collect()
    });
    results
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| match e {
                CliError::Core(KmpeError::Divergence { iteration }) => {
                    CliError::Divergence { trial: i, seed: cfg.seed.wrapping_add(i as u64), iteration }
                }
                other => other,
            })
        })
        .collect()
}

/// Executes a config and writes its report files under `output_dir`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunReport, CliError> {
    cfg.validate()?;
    if cfg.task == Task::Props {
        return run_props(cfg.props.vectors, cfg.seed, &cfg.output_dir);
    }
    let csv = match (cfg.task, cfg.data.source) {
        (Task::Elm | Task::ClusterEval, config::DataSource::Csv) => Some(tasks::prepare_csv(cfg)?),
        _ => None,
    };
    let outcomes = match cfg.task {
        Task::SincBench => run_trials(cfg, |s| tasks::sinc_trial(cfg, s))?,
        Task::Elm => run_trials(cfg, |s| tasks::elm_trial(cfg, csv.as_ref(), s))?,
        Task::PcaRecon => run_trials(cfg, |s| tasks::pca_trial(cfg, s))?,
        Task::ClusterEval => run_trials(cfg, |s| tasks::cluster_trial(cfg, csv.as_ref(), s))?,
        Task::Props => unreachable!("handled above"),
    };
    let dir = &cfg.output_dir;
    let mut outputs = Outputs::default();
    let mut models = Vec::new();
    for (k, name) in tasks::model_names(cfg).into_iter().enumerate() {
        let rows = tasks::rows_for(&outcomes, cfg, k);
        let file = match name {
            None => dir.join("summary.csv"),
            Some(n) => dir.join(format!("summary_{n}.csv")),
        };
        report::write_summary(&file, &rows)?;
        outputs.files.push(file);
        let (train_mean, train_std) = mean_std(&rows.iter().map(|r| r.train_metric).collect::<Vec<_>>());
        let (test_mean, test_std) = mean_std(&rows.iter().map(|r| r.test_metric).collect::<Vec<_>>());
        let name = name.map_or_else(|| primary_name(cfg).to_string(), str::to_string);
        models.push(ModelSummary { name, rows, train_mean, train_std, test_mean, test_std });
    }
    let last = outcomes.last().expect("at least one trial");
    let trace = dir.join("trace.csv");
    report::write_trace(&trace, &last.trace)?;
    outputs.files.push(trace);
    if let Some(curve) = &last.curve {
        let path = dir.join("curve.csv");
        report::write_curve(&path, curve)?;
        outputs.files.push(path);
    }
    if let Some(model) = &last.model {
        let path = dir.join("model.json");
        model.save(File::create(&path).map_err(|e| CliError::io(&path, e))?)?;
        outputs.files.push(path);
    }
    if let Some((sub, kernel)) = &last.subspace {
        let path = dir.join("subspace.json");
        sub.save_with_kernel(File::create(&path).map_err(|e| CliError::io(&path, e))?, *kernel)?;
        outputs.files.push(path);
    }
    Ok(RunReport { models, properties: Vec::new(), outputs })
}

fn primary_name(cfg: &ExperimentConfig) -> &'static str {
    match cfg.task {
        Task::SincBench => "elm-kmpe",
        Task::Elm if cfg.trainer == config::Trainer::Ls => "elm-ls",
        Task::Elm => "elm-kmpe",
        Task::PcaRecon | Task::ClusterEval => "pca-kmpe",
        Task::Props => "props",
    }
}

/// Runs the property suite and writes `props.csv` under `dir`.
pub fn run_props(vectors: usize, seed: u64, dir: &Path) -> Result<RunReport, CliError> {
    let properties = props::run_suite(vectors, seed)?;
    let path = dir.join("props.csv");
    report::write_props(&path, &properties)?;
    Ok(RunReport { models: Vec::new(), properties, outputs: Outputs { files: vec![path] } })
}

/// Human-readable version of the report tables.
pub fn render(report: &RunReport) -> String {
    let mut out = String::new();
    if !report.models.is_empty() {
        out.push_str(&format!("{:<10} {:>6}  {:>24}  {:>24}\n", "model", "trials", "train mean ± std", "test mean ± std"));
        for m in &report.models {
            out.push_str(&format!(
                "{:<10} {:>6}  {:>11.6} ± {:<10.6}  {:>11.6} ± {:<10.6}\n",
                m.name,
                m.rows.len(),
                m.train_mean,
                m.train_std,
                m.test_mean,
                m.test_std
            ));
        }
    }
    for p in &report.properties {
        out.push_str(&format!(
            "{} {} ({} vectors, worst error {:.3e}, tolerance {:.0e})\n",
            if p.passed() { "PASS" } else { "FAIL" },
            p.property,
            p.vectors,
            p.worst.error,
            p.worst.tolerance
        ));
    }
    for f in &report.outputs.files {
        out.push_str(&format!("wrote {}\n", f.display()));
    }
    out
}

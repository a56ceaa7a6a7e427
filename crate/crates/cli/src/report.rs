//! CSV report files and their versioned schema.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::props::PropertySummary;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

const SCHEMA_V1: &str = "\
kmpe report schema, version 1
summary.csv: trial,seed,train_metric,test_metric
  one row per trial in trial order, then a row with trial=mean and one with
  trial=std (sample standard deviation, 0 for a single trial); seed is empty
  on those two rows.
  sinc_bench, elm (regression): train_metric and test_metric are RMSE.
  elm (classification): train_metric and test_metric are accuracy.
  pca_recon: train_metric is the average reconstruction error against the
  corrupted training data, test_metric against the clean data.
  cluster_eval: train_metric is clustering accuracy (ACC), test_metric is NMI.
  baselines use the same columns in summary_<model>.csv.
trace.csv: iteration,loss
  loss per iteration of the last trial's iterative fit, iteration from 1.
curve.csv: x,y_true,y_pred
  sinc_bench and sinc-sourced elm only: last trial's test inputs sorted by x,
  noise-free target and prediction.
props.csv: property,vectors,failures,lhs,rhs,error,tolerance,passed
  one row per property; lhs, rhs and error belong to the worst vector.
";

/// Schema text for `version`, if it exists.
pub fn schema(version: u32) -> Option<&'static str> {
    match version {
        1 => Some(SCHEMA_V1),
        _ => None,
    }
}

/// Per-trial metrics of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub trial: usize,
    pub seed: u64,
    pub train_metric: f64,
    pub test_metric: f64,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn write_summary(path: &Path, rows: &[TrialRow]) -> Result<(), CliError> {
    let mut out = String::from("trial,seed,train_metric,test_metric\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.trial, r.seed, r.train_metric, r.test_metric));
    }
    let train: Vec<f64> = rows.iter().map(|r| r.train_metric).collect();
    let test: Vec<f64> = rows.iter().map(|r| r.test_metric).collect();
    let (m1, s1) = mean_std(&train);
    let (m2, s2) = mean_std(&test);
    out.push_str(&format!("mean,,{m1},{m2}\nstd,,{s1},{s2}\n"));
    write_file(path, &out)
}

pub fn write_trace(path: &Path, losses: &[f64]) -> Result<(), CliError> {
    let mut out = String::from("iteration,loss\n");
    for (k, loss) in losses.iter().enumerate() {
        out.push_str(&format!("{},{loss}\n", k + 1));
    }
    write_file(path, &out)
}

/// Writes `(x, y_true, y_pred)` rows sorted by `x`.
pub fn write_curve(path: &Path, points: &[(f64, f64, f64)]) -> Result<(), CliError> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = String::from("x,y_true,y_pred\n");
    for (x, y, yhat) in sorted {
        out.push_str(&format!("{x},{y},{yhat}\n"));
    }
    write_file(path, &out)
}

pub fn write_props(path: &Path, results: &[PropertySummary]) -> Result<(), CliError> {
    let mut out = String::from("property,vectors,failures,lhs,rhs,error,tolerance,passed\n");
    for r in results {
        let w = &r.worst;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.property,
            r.vectors,
            r.failures,
            w.lhs,
            w.rhs,
            w.error,
            w.tolerance,
            r.passed()
        ));
    }
    write_file(path, &out)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| CliError::io(path, e))
}

/// Files written by one run, in the order they were written.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outputs {
    pub files: Vec<PathBuf>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn only_version_one_exists() {
        assert!(schema(1).unwrap().contains("trial,seed,train_metric,test_metric"));
        assert!(schema(0).is_none() && schema(2).is_none());
    }
}

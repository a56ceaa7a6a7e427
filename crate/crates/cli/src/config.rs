//! Experiment configuration: one TOML document per run.
//!
//! Every section has defaults, so a config only needs `task` and `output_dir`
//! plus whatever it changes. Scalar keys can be overridden from the command
//! line with `--set section.key=value`; the value is read as a TOML literal
//! and falls back to a plain string.

use std::path::{Path, PathBuf};

use kmpe_core::data::{Background, Corruption, NoiseModel};
use kmpe_core::{Activation, HiddenInit, KernelParams, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    SincBench,
    Elm,
    PcaRecon,
    ClusterEval,
    Props,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Trainer {
    #[default]
    Kmpe,
    Ls,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    #[serde(default = "defaults::trials")]
    pub trials: usize,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Output-weight trainer for the `elm` task.
    #[serde(default)]
    pub trainer: Trainer,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub hidden: HiddenSection,
    #[serde(default)]
    pub kmpe: KmpeSection,
    #[serde(default)]
    pub ls: LsSection,
    #[serde(default = "defaults::elm_baseline")]
    pub elm_baseline: LsSection,
    #[serde(default = "defaults::relm_baseline")]
    pub relm_baseline: LsSection,
    #[serde(default)]
    pub lowrank: LowRankSection,
    #[serde(default)]
    pub pca: PcaSection,
    #[serde(default)]
    pub cluster: ClusterSection,
    #[serde(default)]
    pub props: PropsSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    #[default]
    Sinc,
    Csv,
    Blobs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub source: DataSource,
    pub n_train: usize,
    pub n_test: usize,
    /// CSV file, relative paths resolve against the config file's directory.
    pub path: Option<PathBuf>,
    pub target_columns: Vec<usize>,
    pub train_frac: f64,
    pub normalize: bool,
    /// Treat the single target column as integer class labels.
    pub classification: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            source: DataSource::Sinc,
            n_train: 200,
            n_test: 200,
            path: None,
            target_columns: Vec::new(),
            train_frac: 0.7,
            normalize: true,
            classification: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub c: f64,
    pub outlier_std: f64,
    pub background: Background,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let d = NoiseModel::default();
        Self { c: d.c, outlier_std: d.outlier_std, background: d.background }
    }
}

impl NoiseSection {
    pub fn model(&self) -> Result<NoiseModel, CliError> {
        Ok(NoiseModel::new(self.c, self.background, self.outlier_std)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct HiddenSection {
    pub activation: Activation,
    /// Defaults to [`SINC_INIT`] on sinc data and to `uniform` otherwise.
    pub init: Option<HiddenInit>,
}

/// Nodes centered over the sinc input range `[−10, 10]` with gentle slopes.
pub const SINC_INIT: HiddenInit = HiddenInit::Centered { slope: 0.65, lo: -8.0, hi: 8.0 };

impl HiddenSection {
    pub fn init_for(&self, source: DataSource) -> HiddenInit {
        self.init.unwrap_or(match source {
            DataSource::Sinc => SINC_INIT,
            _ => HiddenInit::Uniform,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KmpeSection {
    pub nodes: usize,
    pub lambda_prime: f64,
    pub sigma: f64,
    pub p: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub fp_tol: f64,
    pub anderson_depth: usize,
}

impl Default for KmpeSection {
    fn default() -> Self {
        Self {
            nodes: 90,
            lambda_prime: 2e-6,
            sigma: 0.8,
            p: 4.0,
            max_iter: 100,
            tol: 1e-6,
            fp_tol: 1e-7,
            anderson_depth: 5,
        }
    }
}

impl KmpeSection {
    pub fn train_config(&self) -> Result<TrainConfig<f64>, CliError> {
        let mut cfg = TrainConfig::new(self.lambda_prime, KernelParams::new(self.sigma, self.p)?);
        cfg.max_iter = self.max_iter;
        cfg.tol = self.tol;
        cfg.fp_tol = self.fp_tol;
        cfg.anderson_depth = self.anderson_depth;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Closed-form output weights: plain ELM when `lambda = 0`, RELM otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LsSection {
    pub nodes: usize,
    pub lambda: f64,
}

impl Default for LsSection {
    fn default() -> Self {
        Self { nodes: 20, lambda: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LowRankSection {
    pub d: usize,
    pub n: usize,
    pub r: usize,
    pub outlier_frac: f64,
    pub mode: Corruption,
}

impl Default for LowRankSection {
    fn default() -> Self {
        Self { d: 20, n: 200, r: 3, outlier_frac: 0.2, mode: Corruption::Occlusion }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PcaSection {
    pub m: usize,
    pub m_r: Option<usize>,
    pub p: f64,
    /// Fixed kernel width; Silverman's rule re-estimates it every iteration when absent.
    pub sigma: Option<f64>,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for PcaSection {
    fn default() -> Self {
        Self { m: 3, m_r: None, p: 2.0, sigma: None, max_iter: 100, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterSection {
    /// Number of clusters for synthetic blobs.
    pub k: usize,
    pub per_cluster: usize,
    /// Latent dimension of the blob centers.
    pub latent: usize,
    /// Ambient dimension the latent space is embedded in.
    pub dim: usize,
    pub separation: f64,
    pub spread: f64,
    /// Dummy samples added to the training set, as a fraction of the clean count.
    pub outlier_frac: f64,
    pub kmeans_iter: usize,
    /// Also run k-means on the L2-PCA projection.
    pub baseline: bool,
}

impl Default for ClusterSection {
    fn default() -> Self {
        Self {
            k: 3,
            per_cluster: 60,
            latent: 3,
            dim: 20,
            separation: 4.0,
            spread: 1.0,
            outlier_frac: 0.2,
            kmeans_iter: 100,
            baseline: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropsSection {
    pub vectors: usize,
}

impl Default for PropsSection {
    fn default() -> Self {
        Self { vectors: 1000 }
    }
}

mod defaults {
    use super::LsSection;

    pub fn trials() -> usize {
        1
    }

    pub fn seed() -> u64 {
        1
    }

    pub fn elm_baseline() -> LsSection {
        LsSection { nodes: 20, lambda: 0.0 }
    }

    pub fn relm_baseline() -> LsSection {
        LsSection { nodes: 90, lambda: 5e-5 }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        for item in overrides {
            apply_override(&mut doc, item)?;
        }
        let cfg: Self = doc.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative data and output paths resolve against its directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text, overrides)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        if let Some(p) = cfg.data.path.as_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        let reads_files = self.task == Task::Elm || self.task == Task::ClusterEval;
        if reads_files && self.data.source == DataSource::Csv && self.data.path.is_none() {
            return bad("data.source = \"csv\" needs data.path".into());
        }
        if self.task == Task::Elm && self.data.source == DataSource::Blobs {
            return bad("the elm task reads sinc or csv data".into());
        }
        if self.task == Task::ClusterEval && self.data.source == DataSource::Sinc {
            return bad("cluster_eval reads blobs or csv data; set data.source".into());
        }
        if self.data.classification && self.data.target_columns.len() != 1 {
            return bad("classification needs exactly one target column".into());
        }
        if !(self.data.train_frac > 0.0 && self.data.train_frac < 1.0) {
            return bad(format!("data.train_frac must lie in (0, 1), got {}", self.data.train_frac));
        }
        for (name, nodes) in [
            ("kmpe", self.kmpe.nodes),
            ("ls", self.ls.nodes),
            ("elm_baseline", self.elm_baseline.nodes),
            ("relm_baseline", self.relm_baseline.nodes),
        ] {
            if nodes == 0 {
                return bad(format!("{name}.nodes must be at least 1"));
            }
        }
        if !(self.cluster.outlier_frac >= 0.0 && self.cluster.outlier_frac < 1.0) {
            return bad(format!("cluster.outlier_frac must lie in [0, 1), got {}", self.cluster.outlier_frac));
        }
        if self.props.vectors == 0 {
            return bad("props.vectors must be at least 1".into());
        }
        if let Some(init) = self.hidden.init {
            init.validate().map_err(CliError::config)?;
        }
        self.noise.model().map_err(CliError::config)?;
        if matches!(self.task, Task::SincBench | Task::Elm) && self.trainer == Trainer::Kmpe {
            self.kmpe.train_config().map_err(CliError::config)?;
        }
        Ok(())
    }
}

fn apply_override(doc: &mut toml::Table, item: &str) -> Result<(), CliError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override '{item}' is not key=value")))?;
    let value = parse_literal(raw.trim());
    let path: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = path.split_last().expect("split yields at least one element");
    let mut table = doc;
    for part in parents {
        let entry = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override '{key}': '{part}' is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_literal(raw: &str) -> toml::Value {
    let probe = format!("v = {raw}");
    match probe.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key was just parsed"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = ExperimentConfig::from_toml("task = \"sinc_bench\"\noutput_dir = \"out\"\n", &[]).unwrap();
        assert_eq!(cfg.trials, 1);
        assert_eq!(cfg.kmpe, KmpeSection::default());
        assert_eq!(cfg.relm_baseline.lambda, 5e-5);
    }

    #[test]
    fn overrides_reach_nested_scalars() {
        let sets = vec!["kmpe.p=3.4".to_string(), "trials=7".to_string(), "data.source=csv".to_string()];
        let text = "task = \"sinc_bench\"\noutput_dir = \"out\"\n[data]\npath = \"x.csv\"\n";
        let cfg = ExperimentConfig::from_toml(text, &sets).unwrap();
        assert_eq!(cfg.kmpe.p, 3.4);
        assert_eq!(cfg.trials, 7);
        assert_eq!(cfg.data.source, DataSource::Csv);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let e = ExperimentConfig::from_toml("task = \"elm\"\noutput_dir = \"o\"\nbogus = 1\n", &[]).unwrap_err();
        assert!(matches!(e, CliError::Config(_)));
        let e = ExperimentConfig::from_toml("task = \"elm\"\noutput_dir = \"o\"\n[kmpe]\nsigma = -1.0\n", &[]);
        assert!(e.is_err());
        assert!(ExperimentConfig::from_toml("task = \"nope\"\noutput_dir = \"o\"\n", &[]).is_err());
    }
}

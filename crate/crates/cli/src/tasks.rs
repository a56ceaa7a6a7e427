//! Per-task trial functions and report assembly.

use kmpe_core::data::{gen_lowrank_corrupted, gen_sinc, load_csv, split, Dataset, MinMaxScaler};
use kmpe_core::elm::{classify, hidden_matrix, init_hidden_with, one_hot, predict, train_kmpe, train_ls};
use kmpe_core::metrics::{clustering_accuracy, kmeans, nmi, rmse};
use kmpe_core::pca::{avg_reconstruction_error, fit_kmpe, fit_l2};
use kmpe_core::{Bandwidth, ElmModel, HiddenLayer, KernelParams, LabelVector, Matrix, OutputWeights, PcaConfig, Subspace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::{DataSource, ExperimentConfig, LsSection, Task, Trainer};
use crate::report::TrialRow;
use crate::CliError;

/// Metrics of one trial for every model the task evaluates; the first entry
/// is the primary model.
pub struct TrialOutcome {
    pub metrics: Vec<(f64, f64)>,
    pub trace: Vec<f64>,
    pub curve: Option<Vec<(f64, f64, f64)>>,
    pub model: Option<ElmModel<f64>>,
    pub subspace: Option<(Subspace<f64>, Option<KernelParams<f64>>)>,
}

impl TrialOutcome {
    fn new(metrics: Vec<(f64, f64)>) -> Self {
        Self { metrics, trace: Vec::new(), curve: None, model: None, subspace: None }
    }
}

/// Names of the models a task reports, primary first; `None` means `summary.csv`.
pub fn model_names(cfg: &ExperimentConfig) -> Vec<Option<&'static str>> {
    match cfg.task {
        Task::SincBench => vec![None, Some("elm"), Some("relm")],
        Task::PcaRecon => vec![None, Some("l2")],
        Task::ClusterEval if cfg.cluster.baseline => vec![None, Some("l2")],
        _ => vec![None],
    }
}

pub fn rows_for(outcomes: &[TrialOutcome], cfg: &ExperimentConfig, model: usize) -> Vec<TrialRow> {
    outcomes
        .iter()
        .enumerate()
        .map(|(i, o)| TrialRow {
            trial: i,
            seed: cfg.seed.wrapping_add(i as u64),
            train_metric: o.metrics[model].0,
            test_metric: o.metrics[model].1,
        })
        .collect()
}

fn column_rmse(y: &Matrix<f64>, t: &Matrix<f64>) -> Result<f64, CliError> {
    Ok(rmse(y.as_slice(), t.as_slice())?)
}

fn ls_fit(
    section: &LsSection,
    cfg: &ExperimentConfig,
    source: DataSource,
    seed: u64,
    x: &Matrix<f64>,
    t: &Matrix<f64>,
) -> Result<(HiddenLayer<f64>, OutputWeights<f64>), CliError> {
    let layer = init_hidden_with(x.cols(), section.nodes, cfg.hidden.activation, cfg.hidden.init_for(source), seed)?;
    let beta = train_ls(&hidden_matrix(&layer, x)?, t, section.lambda)?;
    Ok((layer, beta))
}

pub fn sinc_trial(cfg: &ExperimentConfig, seed: u64) -> Result<TrialOutcome, CliError> {
    let noise = cfg.noise.model()?;
    let (train, test) = gen_sinc::<f64>(cfg.data.n_train, cfg.data.n_test, &noise, seed)?;
    let (x, t) = (&train.features, train.targets.as_ref().expect("sinc has targets"));
    let (xt, tt) = (&test.features, test.targets.as_ref().expect("sinc has targets"));
    let init = cfg.hidden.init_for(DataSource::Sinc);
    let layer = init_hidden_with(1, cfg.kmpe.nodes, cfg.hidden.activation, init, seed)?;
    let (beta, trace) = train_kmpe(&layer, x, t, &cfg.kmpe.train_config()?)?;
    let pred_test = predict(&layer, &beta, xt)?;
    let mut metrics = vec![(column_rmse(&predict(&layer, &beta, x)?, t)?, column_rmse(&pred_test, tt)?)];
    for section in [&cfg.elm_baseline, &cfg.relm_baseline] {
        let (l, b) = ls_fit(section, cfg, DataSource::Sinc, seed, x, t)?;
        metrics.push((column_rmse(&predict(&l, &b, x)?, t)?, column_rmse(&predict(&l, &b, xt)?, tt)?));
    }
    let curve = (0..test.len()).map(|i| (xt[(i, 0)], tt[(i, 0)], pred_test[(i, 0)])).collect();
    let mut out = TrialOutcome::new(metrics);
    out.trace = trace.losses;
    out.curve = Some(curve);
    Ok(out)
}

/// A CSV dataset prepared once per run.
pub struct Prepared {
    pub data: Dataset<f64>,
    pub classes: usize,
}

pub fn prepare_csv(cfg: &ExperimentConfig) -> Result<Prepared, CliError> {
    let path = cfg.data.path.as_deref().expect("validated: csv source has a path");
    let data = load_csv::<f64>(path, &cfg.data.target_columns)?;
    let classes = if cfg.data.classification || cfg.task == Task::ClusterEval {
        labels_of(&data)?.iter().max().map_or(0, |&c| c + 1)
    } else {
        0
    };
    Ok(Prepared { data, classes })
}

fn labels_of(ds: &Dataset<f64>) -> Result<Vec<usize>, CliError> {
    let col = ds.target_column().ok_or_else(|| CliError::Config("class labels need a target column".into()))?;
    col.iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(CliError::Config(format!("class label {v} is not a nonnegative integer")))
            }
        })
        .collect()
}

pub fn elm_trial(cfg: &ExperimentConfig, csv: Option<&Prepared>, seed: u64) -> Result<TrialOutcome, CliError> {
    let (train, test) = match csv {
        None => gen_sinc::<f64>(cfg.data.n_train, cfg.data.n_test, &cfg.noise.model()?, seed)?,
        Some(p) => {
            let (train, test) = split(&p.data, cfg.data.train_frac, seed)?;
            if cfg.data.normalize {
                let scaler = MinMaxScaler::fit(&train.features);
                (scaler.transform_dataset(&train)?, scaler.transform_dataset(&test)?)
            } else {
                (train, test)
            }
        }
    };
    let classification = cfg.data.classification;
    let targets = |ds: &Dataset<f64>| -> Result<Matrix<f64>, CliError> {
        if classification {
            let classes = csv.map_or(0, |p| p.classes);
            Ok(one_hot(&labels_of(ds)?, classes)?)
        } else {
            ds.targets.clone().ok_or_else(|| CliError::Config("regression needs target columns".into()))
        }
    };
    let (t, tt) = (targets(&train)?, targets(&test)?);
    let (x, xt) = (&train.features, &test.features);
    let source = cfg.data.source;
    let (layer, beta, trace, kernel) = match cfg.trainer {
        Trainer::Kmpe => {
            let init = cfg.hidden.init_for(source);
            let layer = init_hidden_with(x.cols(), cfg.kmpe.nodes, cfg.hidden.activation, init, seed)?;
            let tc = cfg.kmpe.train_config()?;
            let (beta, trace) = train_kmpe(&layer, x, &t, &tc)?;
            (layer, beta, trace.losses, Some(tc.kernel))
        }
        Trainer::Ls => {
            let (layer, beta) = ls_fit(&cfg.ls, cfg, source, seed, x, &t)?;
            (layer, beta, Vec::new(), None)
        }
    };
    let score = |xs: &Matrix<f64>, ts: &Matrix<f64>, ds: &Dataset<f64>| -> Result<f64, CliError> {
        if classification {
            let pred = classify(&layer, &beta, xs)?;
            let truth = labels_of(ds)?;
            Ok(pred.iter().zip(&truth).filter(|(a, b)| a == b).count() as f64 / truth.len().max(1) as f64)
        } else {
            column_rmse(&predict(&layer, &beta, xs)?, ts)
        }
    };
    let metrics = vec![(score(x, &t, &train)?, score(xt, &tt, &test)?)];
    let mut out = TrialOutcome::new(metrics);
    if csv.is_none() {
        let y = predict(&layer, &beta, xt)?;
        out.curve = Some((0..test.len()).map(|i| (xt[(i, 0)], tt[(i, 0)], y[(i, 0)])).collect());
    }
    out.trace = trace;
    out.model = Some(ElmModel { layer, output: beta, kernel });
    Ok(out)
}

fn pca_config(cfg: &ExperimentConfig) -> Result<PcaConfig<f64>, CliError> {
    let s = &cfg.pca;
    let bandwidth = match s.sigma {
        Some(sigma) => Bandwidth::Fixed(KernelParams::new(sigma, s.p)?),
        None => Bandwidth::Silverman { p: s.p },
    };
    let mut pc = PcaConfig::new(s.m, bandwidth);
    pc.m_r = s.m_r;
    pc.max_iter = s.max_iter;
    pc.tol = s.tol;
    Ok(pc)
}

fn kernel_of(bandwidth: &Bandwidth<f64>) -> Option<KernelParams<f64>> {
    match bandwidth {
        Bandwidth::Fixed(k) => Some(*k),
        Bandwidth::Silverman { .. } => None,
    }
}

pub fn pca_trial(cfg: &ExperimentConfig, seed: u64) -> Result<TrialOutcome, CliError> {
    let lr = &cfg.lowrank;
    let pair = gen_lowrank_corrupted::<f64>(lr.d, lr.n, lr.r, lr.outlier_frac, lr.mode, seed)?;
    let x = pair.corrupted.samples_as_columns();
    let clean = pair.clean.samples_as_columns();
    let pc = pca_config(cfg)?;
    let (sub, trace) = fit_kmpe(&x, &pc)?;
    let l2 = fit_l2(&x, pc.m)?;
    let eval = |s: &Subspace<f64>| -> Result<(f64, f64), CliError> {
        Ok((avg_reconstruction_error(s, &x, &x)?, avg_reconstruction_error(s, &clean, &x)?))
    };
    let mut out = TrialOutcome::new(vec![eval(&sub)?, eval(&l2)?]);
    out.trace = trace.losses;
    out.subspace = Some((sub, kernel_of(&pc.bandwidth)));
    Ok(out)
}

/// Clean samples (rows) with labels.
fn cluster_data(cfg: &ExperimentConfig, csv: Option<&Prepared>, seed: u64) -> Result<(Matrix<f64>, Vec<usize>), CliError> {
    if let Some(p) = csv {
        let x = if cfg.data.normalize { MinMaxScaler::fit(&p.data.features).transform(&p.data.features)? } else { p.data.features.clone() };
        return Ok((x, labels_of(&p.data)?));
    }
    let c = &cfg.cluster;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..c.k)
        .map(|_| (0..c.latent).map(|_| c.separation * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let (z, labels) = kmpe_core::data::gen_blobs::<f64>(&centers, c.per_cluster, c.spread, rng.random())?;
    let embed: Vec<f64> = (0..c.dim * c.latent).map(|_| rng.sample(StandardNormal)).collect();
    let x = Matrix::from_fn(z.rows(), c.dim, |i, j| (0..c.latent).map(|k| z[(i, k)] * embed[j * c.latent + k]).sum());
    Ok((x, labels))
}

/// Appends `⌈frac · n⌉` dummy rows whose entries are the data's min or max.
fn with_dummies(x: &Matrix<f64>, frac: f64, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    let (n, d) = x.shape();
    let extra = (frac * n as f64).ceil() as usize;
    let lo = x.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut data = x.as_slice().to_vec();
    data.extend((0..extra * d).map(|_| if rng.random_bool(0.5) { hi } else { lo }));
    Matrix::from_vec(n + extra, d, data).expect("sizes agree")
}

pub fn cluster_trial(cfg: &ExperimentConfig, csv: Option<&Prepared>, seed: u64) -> Result<TrialOutcome, CliError> {
    let (x, labels) = cluster_data(cfg, csv, seed)?;
    let k = csv.map_or(cfg.cluster.k, |p| p.classes);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.rotate_left(32));
    let train = with_dummies(&x, cfg.cluster.outlier_frac, &mut rng).transpose();
    let clean = x.transpose();
    let truth = LabelVector::new(labels)?;
    let pc = pca_config(cfg)?;
    let score = |s: &Subspace<f64>| -> Result<(f64, f64), CliError> {
        let (w, mu) = (s.basis(), s.mean());
        let coords: Matrix<f64> = Matrix::from_fn(clean.cols(), w.cols(), |j, q| {
            (0..clean.rows()).map(|i| w[(i, q)] * (clean[(i, j)] - mu[i])).sum()
        });
        let pred = kmeans(&coords, k, seed, cfg.cluster.kmeans_iter)?;
        Ok((clustering_accuracy(&pred, &truth)?, nmi(&pred, &truth)?))
    };
    let (sub, trace) = fit_kmpe(&train, &pc)?;
    let mut metrics = vec![score(&sub)?];
    if cfg.cluster.baseline {
        metrics.push(score(&fit_l2(&train, pc.m)?)?);
    }
    let mut out = TrialOutcome::new(metrics);
    out.trace = trace.losses;
    out.subspace = Some((sub, kernel_of(&pc.bandwidth)));
    Ok(out)
}

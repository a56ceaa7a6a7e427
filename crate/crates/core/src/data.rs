//! Datasets, synthetic generators, CSV I/O and preprocessing.
//!
//! Every generator draws from [`ChaCha8Rng`] seeded with `seed_from_u64`, so
//! outputs are reproducible across platforms for a given `(parameters, seed)`.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{dimension, domain, KmpeError, Result};
use crate::numlin::Matrix;
use crate::scalar::Scalar;

/// Amplitude of the sinc regression target.
pub const SINC_SCALE: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Background {
    Uniform { lo: f64, hi: f64 },
    /// `sin(ω)` with `ω ~ U[0, 2π]`.
    SineWave,
}

impl Background {
    /// Variance of one background draw.
    pub fn variance(&self) -> f64 {
        match *self {
            Background::Uniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
            Background::SineWave => 0.5,
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Background::Uniform { lo, hi } if lo == hi => lo,
            Background::Uniform { lo, hi } => rng.random_range(lo..hi),
            Background::SineWave => rng.random_range(0.0..std::f64::consts::TAU).sin(),
        }
    }
}

/// Impulsive mixture noise `v = (1 − a) A + a B`, `a ~ Bernoulli(c)`, `B ~ N(0, outlier_std²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub c: f64,
    pub background: Background,
    pub outlier_std: f64,
}

impl NoiseModel {
    pub fn new(c: f64, background: Background, outlier_std: f64) -> Result<Self> {
        let model = Self { c, background, outlier_std };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.c) {
            return domain(format!("outlier probability must lie in [0, 1], got {}", self.c));
        }
        if !(self.outlier_std.is_finite() && self.outlier_std > 0.0) {
            return domain(format!("outlier std must be positive, got {}", self.outlier_std));
        }
        if let Background::Uniform { lo, hi } = self.background {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return domain(format!("uniform background needs lo <= hi, got [{lo}, {hi}]"));
            }
        }
        Ok(())
    }

    /// Noise-free model.
    pub fn none() -> Self {
        Self { c: 0.0, background: Background::Uniform { lo: 0.0, hi: 0.0 }, outlier_std: 3.0 }
    }

    /// Theoretical variance `(1 − c) Var(A) + c Var(B)` (both components zero-mean).
    pub fn variance(&self) -> f64 {
        (1.0 - self.c) * self.background.variance() + self.c * self.outlier_std * self.outlier_std
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let outlier = rng.random_bool(self.c);
        let a = self.background.draw(rng);
        let b: f64 = rng.sample::<f64, _>(StandardNormal) * self.outlier_std;
        if outlier {
            b
        } else {
            a
        }
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { c: 0.1, background: Background::Uniform { lo: -1.0, hi: 1.0 }, outlier_std: 3.0 }
    }
}

/// Samples as rows of `features` (`n×d`) with optional targets (`n×C`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub features: Matrix<T>,
    pub targets: Option<Matrix<T>>,
    pub feature_names: Option<Vec<String>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(features: Matrix<T>, targets: Option<Matrix<T>>) -> Result<Self> {
        if !features.is_finite() {
            return domain("features contain non-finite values");
        }
        if let Some(t) = &targets {
            if t.rows() != features.rows() {
                return dimension(format!("{} target rows for {} samples", t.rows(), features.rows()));
            }
            if !t.is_finite() {
                return domain("targets contain non-finite values");
            }
        }
        Ok(Self { features, targets, feature_names: None })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    /// Features transposed so samples are columns (`d×n`).
    pub fn samples_as_columns(&self) -> Matrix<T> {
        self.features.transpose()
    }

    /// First target column, if any.
    pub fn target_column(&self) -> Option<Vec<T>> {
        self.targets.as_ref().map(|t| t.column(0))
    }

    fn select_rows(&self, rows: &[usize]) -> Self {
        let pick = |m: &Matrix<T>| Matrix::from_fn(rows.len(), m.cols(), |i, j| m[(rows[i], j)]);
        Self {
            features: pick(&self.features),
            targets: self.targets.as_ref().map(pick),
            feature_names: self.feature_names.clone(),
        }
    }
}

/// `sin(x)/x` with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Sinc regression data: `x ~ U[−10, 10]`, `y = 8 sinc(x) + v` on the training
/// set and noise-free targets on the test set.
pub fn gen_sinc<T: Scalar>(n_train: usize, n_test: usize, noise: &NoiseModel, seed: u64) -> Result<(Dataset<T>, Dataset<T>)> {
    if n_train == 0 || n_test == 0 {
        return domain("sinc datasets need at least one sample each");
    }
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize, noisy: bool| {
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let x: f64 = rng.random_range(-10.0..=10.0);
            let v = if noisy { noise.sample(&mut rng) } else { 0.0 };
            xs.push(T::lit(x));
            ys.push(T::lit(SINC_SCALE * sinc(x) + v));
        }
        Dataset::new(Matrix::column_vector(&xs), Some(Matrix::column_vector(&ys)))
    };
    let train = draw(n_train, true)?;
    let test = draw(n_test, false)?;
    Ok((train, test))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corruption {
    /// A contiguous block of coordinates is overwritten.
    Occlusion,
    /// Every coordinate is overwritten.
    Dummy,
}

/// Clean and corrupted low-rank data, plus which samples were corrupted.
#[derive(Debug, Clone)]
pub struct CorruptedPair<T> {
    pub clean: Dataset<T>,
    pub corrupted: Dataset<T>,
    pub outliers: Vec<usize>,
}

/// Low-rank samples `U V + noise` with a fraction of samples overwritten.
///
/// `U` (`d×r`) and `V` (`r×n`) have standard normal entries and the additive
/// noise has std 0.01. `⌈outlier_frac · n⌉` samples are corrupted: each
/// overwritten coordinate takes the clean data's minimum or maximum value with
/// equal probability. Occlusion blocks have length uniform in `[⌈d/4⌉, ⌊d/2⌋]`
/// at a uniform offset. Samples are the rows of the returned datasets.
pub fn gen_lowrank_corrupted<T: Scalar>(
    d: usize,
    n: usize,
    r: usize,
    outlier_frac: f64,
    mode: Corruption,
    seed: u64,
) -> Result<CorruptedPair<T>> {
    if d == 0 || n == 0 || r == 0 || r > d.min(n) {
        return domain(format!("rank {r} must lie in 1..=min({d}, {n})"));
    }
    if !(0.0..1.0).contains(&outlier_frac) {
        return domain(format!("outlier fraction must lie in [0, 1), got {outlier_frac}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: Vec<f64> = (0..d * r).map(|_| rng.sample(StandardNormal)).collect();
    let v: Vec<f64> = (0..r * n).map(|_| rng.sample(StandardNormal)).collect();
    let noise = Normal::new(0.0, 0.01).expect("valid normal");
    let mut clean = vec![0.0f64; n * d];
    for j in 0..n {
        for i in 0..d {
            let s: f64 = (0..r).map(|k| u[i * r + k] * v[k * n + j]).sum();
            clean[j * d + i] = s + noise.sample(&mut rng);
        }
    }
    let lo = clean.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = clean.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut corrupted = clean.clone();
    let count = (outlier_frac * n as f64).ceil() as usize;
    let mut outliers: Vec<usize> = rand::seq::index::sample(&mut rng, n, count).into_vec();
    outliers.sort_unstable();
    for &j in &outliers {
        let (start, len) = match mode {
            Corruption::Dummy => (0, d),
            Corruption::Occlusion => {
                let min_len = d.div_ceil(4).max(1);
                let max_len = (d / 2).max(min_len);
                let len = rng.random_range(min_len..=max_len);
                (rng.random_range(0..=d - len), len)
            }
        };
        for i in start..start + len {
            corrupted[j * d + i] = if rng.random_bool(0.5) { hi } else { lo };
        }
    }
    let to_matrix = |v: Vec<f64>| Matrix::from_vec(n, d, v.into_iter().map(T::lit).collect());
    Ok(CorruptedPair {
        clean: Dataset::new(to_matrix(clean)?, None)?,
        corrupted: Dataset::new(to_matrix(corrupted)?, None)?,
        outliers,
    })
}

/// Isotropic Gaussian clusters (rows) with integer labels.
pub fn gen_blobs<T: Scalar>(
    centers: &[Vec<f64>],
    per_cluster: usize,
    std: f64,
    seed: u64,
) -> Result<(Matrix<T>, Vec<usize>)> {
    let q = centers.first().map_or(0, Vec::len);
    if q == 0 || centers.iter().any(|c| c.len() != q) {
        return domain("cluster centers must share a nonzero dimension");
    }
    let noise = Normal::new(0.0, std).map_err(|e| KmpeError::Domain(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(centers.len() * per_cluster);
    let mut labels = Vec::with_capacity(centers.len() * per_cluster);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per_cluster {
            rows.push(center.iter().map(|&m| T::lit(m + noise.sample(&mut rng))).collect::<Vec<T>>());
            labels.push(c);
        }
    }
    Ok((Matrix::from_rows(&rows)?, labels))
}

fn parse_error(e: csv::Error) -> KmpeError {
    let line = e.position().map_or(0, |p| p.line());
    KmpeError::Parse { line, message: e.to_string() }
}

/// Reads a numeric CSV with a header row; `target_columns` become the targets.
pub fn read_csv<T: Scalar, R: Read>(reader: R, target_columns: &[usize]) -> Result<Dataset<T>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(parse_error)?.iter().map(|s| s.trim().to_string()).collect();
    let width = header.len();
    if let Some(&bad) = target_columns.iter().find(|&&c| c >= width) {
        return domain(format!("target column {bad} outside {width} columns"));
    }
    let feature_cols: Vec<usize> = (0..width).filter(|c| !target_columns.contains(c)).collect();
    let mut feats = Vec::new();
    let mut targs = Vec::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(parse_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut values = Vec::with_capacity(width);
        for (col, cell) in rec.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| KmpeError::Parse {
                line,
                message: format!("non-numeric cell '{cell}' in column {col}"),
            })?;
            if !v.is_finite() {
                return Err(KmpeError::Parse { line, message: format!("non-finite cell in column {col}") });
            }
            values.push(T::lit(v));
        }
        feats.extend(feature_cols.iter().map(|&c| values[c]));
        targs.extend(target_columns.iter().map(|&c| values[c]));
        rows += 1;
    }
    let features = Matrix::from_vec(rows, feature_cols.len(), feats)?;
    let targets = if target_columns.is_empty() {
        None
    } else {
        Some(Matrix::from_vec(rows, target_columns.len(), targs)?)
    };
    let mut ds = Dataset::new(features, targets)?;
    ds.feature_names = Some(feature_cols.iter().map(|&c| header[c].clone()).collect());
    Ok(ds)
}

pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, target_columns: &[usize]) -> Result<Dataset<T>> {
    read_csv(std::fs::File::open(path)?, target_columns)
}

/// Writes features followed by targets, with a header row and LF line endings.
pub fn write_csv<T: Scalar, W: Write>(ds: &Dataset<T>, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let d = ds.features.cols();
    let c = ds.targets.as_ref().map_or(0, Matrix::cols);
    let mut header: Vec<String> = match &ds.feature_names {
        Some(names) if names.len() == d => names.clone(),
        _ => (0..d).map(|j| format!("x{j}")).collect(),
    };
    header.extend((0..c).map(|j| format!("t{j}")));
    w.write_record(&header).map_err(parse_error)?;
    for i in 0..ds.len() {
        let mut row: Vec<String> = ds.features.row(i).iter().map(|v| v.to_string()).collect();
        if let Some(t) = &ds.targets {
            row.extend(t.row(i).iter().map(|v| v.to_string()));
        }
        w.write_record(&row).map_err(parse_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-feature affine map onto `[0, 1]` fitted on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler<T> {
    pub min: Vec<T>,
    pub max: Vec<T>,
}

impl<T: Scalar> MinMaxScaler<T> {
    pub fn fit(features: &Matrix<T>) -> Self {
        let (n, d) = features.shape();
        let mut min = vec![T::infinity(); d];
        let mut max = vec![T::neg_infinity(); d];
        for i in 0..n {
            for (j, &v) in features.row(i).iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Self { min, max }
    }

    /// Applies the fitted map; constant columns map to 0. Values outside the
    /// fitted range are not clipped.
    pub fn transform(&self, features: &Matrix<T>) -> Result<Matrix<T>> {
        if features.cols() != self.min.len() {
            return dimension(format!("{} columns, scaler fitted on {}", features.cols(), self.min.len()));
        }
        Ok(Matrix::from_fn(features.rows(), features.cols(), |i, j| {
            let span = self.max[j] - self.min[j];
            if span > T::zero() {
                (features[(i, j)] - self.min[j]) / span
            } else {
                T::zero()
            }
        }))
    }

    pub fn transform_dataset(&self, ds: &Dataset<T>) -> Result<Dataset<T>> {
        Ok(Dataset { features: self.transform(&ds.features)?, ..ds.clone() })
    }
}

/// Scales each feature column of `ds` onto `[0, 1]` using its own min and max.
pub fn normalize01<T: Scalar>(ds: &Dataset<T>) -> Result<(Dataset<T>, MinMaxScaler<T>)> {
    let scaler = MinMaxScaler::fit(&ds.features);
    Ok((scaler.transform_dataset(ds)?, scaler))
}

/// Seeded shuffle, then the first `⌊train_frac · n⌉` rows go to the training set.
pub fn split<T: Scalar>(ds: &Dataset<T>, train_frac: f64, seed: u64) -> Result<(Dataset<T>, Dataset<T>)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return domain(format!("train fraction must lie in (0, 1), got {train_frac}"));
    }
    let n = ds.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((train_frac * n as f64).round() as usize).clamp(usize::from(n > 1), n.saturating_sub(1));
    Ok((ds.select_rows(&idx[..n_train]), ds.select_rows(&idx[n_train..])))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_free_sinc_is_exact() {
        let noise = NoiseModel::none();
        let (train, test) = gen_sinc::<f64>(50, 20, &noise, 3).unwrap();
        for ds in [&train, &test] {
            let t = ds.target_column().unwrap();
            for (i, &y) in t.iter().enumerate() {
                let x = ds.features[(i, 0)];
                assert_eq!(y, 8.0 * sinc(x));
                assert!((-10.0..=10.0).contains(&x));
            }
        }
        assert_eq!(8.0 * sinc(0.0), 8.0);
    }

    #[test]
    fn sinc_is_deterministic() {
        let noise = NoiseModel::default();
        let a = gen_sinc::<f64>(30, 30, &noise, 9).unwrap();
        let b = gen_sinc::<f64>(30, 30, &noise, 9).unwrap();
        let c = gen_sinc::<f64>(30, 30, &noise, 10).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn noise_model_validation() {
        assert!(NoiseModel::new(1.5, Background::SineWave, 3.0).is_err());
        assert!(NoiseModel::new(0.1, Background::SineWave, 0.0).is_err());
        assert!(NoiseModel::new(0.1, Background::Uniform { lo: 1.0, hi: -1.0 }, 3.0).is_err());
        assert!(NoiseModel::new(0.1, Background::SineWave, 3.0).is_ok());
    }

    #[test]
    fn lowrank_without_outliers_is_untouched() {
        let pair = gen_lowrank_corrupted::<f64>(10, 30, 2, 0.0, Corruption::Occlusion, 1).unwrap();
        assert_eq!(pair.clean, pair.corrupted);
        assert!(pair.outliers.is_empty());
    }

    #[test]
    fn dummy_mode_counts() {
        let pair = gen_lowrank_corrupted::<f64>(20, 100, 3, 0.2, Corruption::Dummy, 2).unwrap();
        let differing = (0..100).filter(|&j| pair.clean.features.row(j) != pair.corrupted.features.row(j)).count();
        assert_eq!(differing, 20);
        assert_eq!(pair.outliers.len(), 20);
    }

    #[test]
    fn occlusion_keeps_other_coordinates() {
        let d = 20;
        let pair = gen_lowrank_corrupted::<f64>(d, 50, 3, 0.3, Corruption::Occlusion, 4).unwrap();
        let lo = pair.clean.features.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
        let hi = pair.clean.features.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for j in 0..50 {
            let c = pair.clean.features.row(j);
            let k = pair.corrupted.features.row(j);
            if !pair.outliers.contains(&j) {
                assert_eq!(c, k);
                continue;
            }
            let changed: Vec<usize> = (0..d).filter(|&i| c[i] != k[i]).collect();
            // overwritten entries take the extreme values
            assert!(changed.iter().all(|&i| k[i] == lo || k[i] == hi));
            let first = *changed.first().unwrap();
            let last = *changed.last().unwrap();
            assert!(last - first < d / 2);
            assert!(changed.len() <= d / 2);
        }
        assert!(gen_lowrank_corrupted::<f64>(5, 5, 6, 0.0, Corruption::Dummy, 0).is_err());
        assert!(gen_lowrank_corrupted::<f64>(5, 5, 2, 1.0, Corruption::Dummy, 0).is_err());
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let features = Matrix::from_rows(&[vec![0.1, 2.5], vec![-3.0, 1.0 / 3.0]]).unwrap();
        let targets = Matrix::column_vector(&[1.0, 0.0]);
        let ds = Dataset::new(features, Some(targets)).unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back: Dataset<f64> = read_csv(buf.as_slice(), &[2]).unwrap();
        assert_eq!(back.features, ds.features);
        assert_eq!(back.targets, ds.targets);

        let crlf = "a,b\r\n1,2\r\n3,4\r\n";
        let parsed: Dataset<f64> = read_csv(crlf.as_bytes(), &[]).unwrap();
        assert_eq!(parsed.features.as_slice(), &[1.0, 2.0, 3.0, 4.0]);

        let bad = "a,b\n1,2\n3,oops\n";
        match read_csv::<f64, _>(bad.as_bytes(), &[]) {
            Err(KmpeError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let ragged = "a,b\n1,2\n3\n";
        assert!(matches!(read_csv::<f64, _>(ragged.as_bytes(), &[]), Err(KmpeError::Parse { .. })));
    }

    #[test]
    fn normalize_conventions() {
        let f = Matrix::from_rows(&[vec![0.0, 5.0, 2.0], vec![1.0, 5.0, 4.0], vec![0.5, 5.0, 3.0]]).unwrap();
        let ds = Dataset::new(f.clone(), None).unwrap();
        let (norm, scaler) = normalize01(&ds).unwrap();
        assert_eq!(norm.features.column(0), f.column(0));
        assert_eq!(norm.features.column(1), vec![0.0; 3]);
        assert_eq!(norm.features.column(2), vec![0.0, 1.0, 0.5]);
        let other = Matrix::from_rows(&[vec![2.0, 5.0, 6.0]]).unwrap();
        assert_eq!(scaler.transform(&other).unwrap().row(0), &[2.0, 0.0, 2.0]);
    }

    #[test]
    fn split_partitions_rows() {
        let f = Matrix::from_fn(10, 1, |i, _| i as f64);
        let ds = Dataset::new(f, None).unwrap();
        let (a, b) = split(&ds, 0.7, 5).unwrap();
        assert_eq!((a.len(), b.len()), (7, 3));
        let mut all: Vec<f64> = a.features.as_slice().iter().chain(b.features.as_slice()).copied().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..10).map(|i| i as f64).collect::<Vec<_>>());
        assert_eq!(split(&ds, 0.7, 5).unwrap().0, a);
        assert!(split(&ds, 1.0, 5).is_err());
    }
}

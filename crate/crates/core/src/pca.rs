//! L2-PCA and the KMPE-weighted IRLS subspace learner.
//!
//! Samples are the columns of a `d×n` matrix. The robust fit alternates
//! residuals, weights `Λ_ii = φ(‖e_i‖)`, a weighted mean and a weighted
//! eigenproblem on `X̃ Λ X̃ᵀ`; at `p = 2` the weights are pure Gaussians
//! (half-quadratic PCA).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::elm::{load_record, save_record, TrainTrace};
use crate::error::{dimension, domain, KmpeError, Result};
use crate::kmpe::{kmpe_weight_sq, one_minus_kernel_sq, KernelParams};
use crate::numlin::{orthonormality_error, weighted_principal_axes, DiagWeights, Matrix};
use crate::scalar::Scalar;

/// Lower bound on the Silverman bandwidth.
pub const MIN_BANDWIDTH: f64 = 1e-8;

/// Affine subspace `μ + range(W)` with orthonormal `W` (`d×m`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subspace<T> {
    w: Matrix<T>,
    mu: Vec<T>,
}

impl<T: Scalar> Subspace<T> {
    pub fn new(w: Matrix<T>, mu: Vec<T>) -> Result<Self> {
        if w.rows() != mu.len() {
            return dimension(format!("basis has {} rows, mean has {} entries", w.rows(), mu.len()));
        }
        if w.cols() > w.rows() {
            return domain(format!("{} basis vectors in dimension {}", w.cols(), w.rows()));
        }
        let err = orthonormality_error(&w);
        if !(err < T::lit(1e-8)) {
            return domain(format!("basis columns are not orthonormal (max deviation {err})"));
        }
        Ok(Self { w, mu })
    }

    pub fn basis(&self) -> &Matrix<T> {
        &self.w
    }

    pub fn mean(&self) -> &[T] {
        &self.mu
    }

    pub fn dim(&self) -> usize {
        self.w.rows()
    }

    pub fn rank(&self) -> usize {
        self.w.cols()
    }

    /// Keeps the leading `m` basis vectors.
    pub fn truncated(&self, m: usize) -> Self {
        Self { w: self.w.leading_columns(m.min(self.rank())), mu: self.mu.clone() }
    }

    /// Projection of `x − μ` onto the subspace, `W Wᵀ (x − μ)`.
    fn project_centered(&self, centered: &[T]) -> Vec<T> {
        let (d, m) = self.w.shape();
        let coords: Vec<T> = (0..m).map(|k| (0..d).map(|i| self.w[(i, k)] * centered[i]).sum()).collect();
        (0..d).map(|i| (0..m).map(|k| self.w[(i, k)] * coords[k]).sum()).collect()
    }

    pub fn save<W: Write>(&self, writer: W) -> Result<()> {
        save_record(writer, SUBSPACE_FORMAT, &SubspaceRecord { subspace: self.clone(), kernel: None })
    }

    /// Saves along with the kernel settings used to fit it.
    pub fn save_with_kernel<W: Write>(&self, writer: W, kernel: Option<KernelParams<T>>) -> Result<()> {
        save_record(writer, SUBSPACE_FORMAT, &SubspaceRecord { subspace: self.clone(), kernel })
    }

    pub fn load<R: Read>(reader: R) -> Result<(Self, Option<KernelParams<T>>)> {
        let rec: SubspaceRecord<T> = load_record(reader, SUBSPACE_FORMAT)?;
        let sub = Subspace::new(rec.subspace.w, rec.subspace.mu)
            .map_err(|e| KmpeError::Format(e.to_string()))?;
        Ok((sub, rec.kernel))
    }
}

const SUBSPACE_FORMAT: &str = "kmpe-subspace/1";

#[derive(Serialize, Deserialize)]
struct SubspaceRecord<T> {
    subspace: Subspace<T>,
    kernel: Option<KernelParams<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bandwidth<T> {
    /// Fixed kernel for the whole run.
    Fixed(KernelParams<T>),
    /// Power `p` with σ re-estimated from the residuals at every iteration.
    Silverman { p: T },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcaConfig<T> {
    pub m: usize,
    pub bandwidth: Bandwidth<T>,
    pub max_iter: usize,
    pub tol: T,
    /// Working dimension of the iteration; the result keeps the first `m` axes.
    pub m_r: Option<usize>,
}

impl<T: Scalar> PcaConfig<T> {
    pub fn new(m: usize, bandwidth: Bandwidth<T>) -> Self {
        Self { m, bandwidth, max_iter: 100, tol: T::lit(1e-6), m_r: None }
    }

    fn working_dim(&self) -> usize {
        self.m_r.unwrap_or(self.m)
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.m == 0 {
            return domain("subspace dimension must be at least 1");
        }
        if self.working_dim() < self.m {
            return domain(format!("working dimension {} below m = {}", self.working_dim(), self.m));
        }
        if self.working_dim() > d {
            return domain(format!("working dimension {} exceeds data dimension {d}", self.working_dim()));
        }
        if self.max_iter == 0 {
            return domain("max_iter must be at least 1");
        }
        if !(self.tol.is_finite() && self.tol > T::zero()) {
            return domain(format!("tolerance must be positive, got {}", self.tol));
        }
        if let Bandwidth::Silverman { p } = self.bandwidth {
            if !(p.is_finite() && p > T::zero()) {
                return domain(format!("power parameter must be positive, got {p}"));
            }
        }
        Ok(())
    }
}

fn column_mean<T: Scalar>(x: &Matrix<T>) -> Vec<T> {
    let n = T::from_usize_lossy(x.cols());
    (0..x.rows()).map(|i| x.row(i).iter().copied().sum::<T>() / n).collect()
}

fn center<T: Scalar>(x: &Matrix<T>, mu: &[T]) -> Matrix<T> {
    Matrix::from_fn(x.rows(), x.cols(), |i, j| x[(i, j)] - mu[i])
}

/// Ordinary PCA: column mean and top-`m` eigenvectors of `X̃ X̃ᵀ`.
pub fn fit_l2<T: Scalar>(x: &Matrix<T>, m: usize) -> Result<Subspace<T>> {
    let (d, n) = x.shape();
    if m == 0 || m > d.min(n) {
        return domain(format!("m = {m} outside 1..={}", d.min(n)));
    }
    let mu = column_mean(x);
    let (_, w) = weighted_principal_axes(&center(x, &mu), &DiagWeights::ones(n), m)?;
    Subspace::new(w, mu)
}

/// Residuals `e_i = (x_i − μ) − W Wᵀ (x_i − μ)` as the columns of a `d×n` matrix.
pub fn residuals<T: Scalar>(sub: &Subspace<T>, x: &Matrix<T>) -> Result<Matrix<T>> {
    if x.rows() != sub.dim() {
        return dimension(format!("samples have dimension {}, subspace {}", x.rows(), sub.dim()));
    }
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for j in 0..x.cols() {
        let centered: Vec<T> = (0..x.rows()).map(|i| x[(i, j)] - sub.mu[i]).collect();
        let proj = sub.project_centered(&centered);
        let e: Vec<T> = centered.iter().zip(&proj).map(|(&c, &p)| c - p).collect();
        out.set_column(j, &e);
    }
    Ok(out)
}

fn column_sq_norms<T: Scalar>(e: &Matrix<T>) -> Vec<T> {
    (0..e.cols()).map(|j| (0..e.rows()).map(|i| e[(i, j)] * e[(i, j)]).sum()).collect()
}

/// `Λ_ii = (1 − exp(−‖e_i‖²/2σ²))^{(p−2)/2} exp(−‖e_i‖²/2σ²)`.
pub fn irls_weights<T: Scalar>(e: &Matrix<T>, params: &KernelParams<T>) -> Result<DiagWeights<T>> {
    if !e.is_finite() {
        return domain("residual matrix has non-finite entries");
    }
    DiagWeights::new(column_sq_norms(e).into_iter().map(|s| kmpe_weight_sq(s, params)).collect())
}

/// `μ = Σ Λ_ii x_i / Σ Λ_ii`.
pub fn weighted_mean<T: Scalar>(x: &Matrix<T>, lam: &DiagWeights<T>) -> Result<Vec<T>> {
    if lam.len() != x.cols() {
        return dimension(format!("{} weights for {} samples", lam.len(), x.cols()));
    }
    let total = lam.sum();
    if !(total > T::zero()) {
        return Err(KmpeError::DegenerateWeights);
    }
    let w = lam.entries();
    Ok((0..x.rows())
        .map(|i| x.row(i).iter().zip(w).map(|(&v, &wi)| v * wi).sum::<T>() / total)
        .collect())
}

/// Bandwidth from the spread of squared residual norms `s_i = ‖e_i‖²`:
/// `σ² = 1.06 · min(std(s), IQR(s) / 1.354) · n^{−1/5}`, floored at [`MIN_BANDWIDTH`].
///
/// `std` is the sample (n − 1) standard deviation; quartiles interpolate linearly
/// between order statistics.
pub fn silverman_bandwidth<T: Scalar>(e: &Matrix<T>) -> Result<T> {
    let n = e.cols();
    if n < 2 {
        return domain(format!("bandwidth estimate needs at least 2 residuals, got {n}"));
    }
    let mut s = column_sq_norms(e);
    let nf = T::from_usize_lossy(n);
    let mean = s.iter().copied().sum::<T>() / nf;
    let var = s.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / (nf - T::one());
    let std = var.sqrt();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let iqr = quantile_sorted(&s, T::lit(0.75)) - quantile_sorted(&s, T::lit(0.25));
    let spread = std.min(iqr / T::lit(1.354));
    let sigma_sq = T::lit(1.06) * spread * nf.powf(T::lit(-0.2));
    let sigma = sigma_sq.max(T::zero()).sqrt();
    Ok(if sigma.is_nan() { T::lit(MIN_BANDWIDTH) } else { sigma.max(T::lit(MIN_BANDWIDTH)) })
}

/// Linear-interpolation quantile of sorted data (position `q (n − 1)`).
pub(crate) fn quantile_sorted<T: Scalar>(sorted: &[T], q: T) -> T {
    let pos = q * T::from_usize_lossy(sorted.len() - 1);
    let lo = pos.floor();
    let frac = pos - lo;
    let lo = lo.to_usize().unwrap_or(0).min(sorted.len() - 1);
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Mean KMPE of residual norms, `(1/n) Σ (1 − exp(−‖e_i‖²/2σ²))^{p/2}`.
pub fn kmpe_pca_objective<T: Scalar>(e: &Matrix<T>, params: &KernelParams<T>) -> T {
    let half_p = params.p() / T::lit(2.0);
    let sq = column_sq_norms(e);
    let n = T::from_usize_lossy(sq.len().max(1));
    sq.into_iter().map(|s| one_minus_kernel_sq(s, params.sigma()).powf(half_p)).sum::<T>() / n
}

/// Flips columns of `w` to agree in sign with `reference`, column by column.
fn align_signs<T: Scalar>(w: &mut Matrix<T>, reference: &Matrix<T>) {
    for k in 0..w.cols() {
        let dot: T = (0..w.rows()).map(|i| w[(i, k)] * reference[(i, k)]).sum();
        if dot < T::zero() {
            for i in 0..w.rows() {
                w[(i, k)] = -w[(i, k)];
            }
        }
    }
}

fn resolve_kernel<T: Scalar>(bandwidth: &Bandwidth<T>, e: &Matrix<T>) -> Result<KernelParams<T>> {
    match *bandwidth {
        Bandwidth::Fixed(k) => Ok(k),
        Bandwidth::Silverman { p } => KernelParams::new(silverman_bandwidth(e)?, p),
    }
}

/// Robust PCA under the KMPE loss by iteratively reweighted eigenproblems.
///
/// Starts from the ordinary PCA solution and stops when the sign-aligned basis
/// moves by at most `tol` in spectral norm, or after `max_iter` iterations. The
/// trace records the KMPE objective at the start of each iteration.
pub fn fit_kmpe<T: Scalar>(x: &Matrix<T>, cfg: &PcaConfig<T>) -> Result<(Subspace<T>, TrainTrace<T>)> {
    let (d, n) = x.shape();
    cfg.validate(d)?;
    let mr = cfg.working_dim();
    if mr > n.min(d) {
        return domain(format!("working dimension {mr} exceeds min(d, n) = {}", d.min(n)));
    }
    let mut sub = fit_l2(x, mr)?;
    let mut trace = TrainTrace::default();
    for k in 1..=cfg.max_iter {
        let e = residuals(&sub, x)?;
        let kernel = resolve_kernel(&cfg.bandwidth, &e)?;
        let objective = kmpe_pca_objective(&e, &kernel);
        if !objective.is_finite() {
            return Err(KmpeError::Divergence { iteration: k });
        }
        trace.losses.push(objective);
        trace.iterations_used = k;
        let lam = irls_weights(&e, &kernel)?;
        if lam.sum() == T::zero() && e.max_abs() == T::zero() {
            // exact fit: every residual vanished, nothing left to reweight
            trace.converged = true;
            break;
        }
        let mu = weighted_mean(x, &lam)?;
        let (_, mut w) = weighted_principal_axes(&center(x, &mu), &lam, mr)?;
        align_signs(&mut w, &sub.w);
        let shift = w.sub(&sub.w)?.spectral_norm();
        sub = Subspace::new(w, mu)?;
        if shift <= cfg.tol {
            trace.converged = true;
            break;
        }
    }
    Ok((sub.truncated(cfg.m), trace))
}

/// `(1/n) Σ ‖(x_i^clean − μ) − W Wᵀ (x_i^train − μ)‖₂`.
pub fn avg_reconstruction_error<T: Scalar>(sub: &Subspace<T>, x_clean: &Matrix<T>, x_train: &Matrix<T>) -> Result<T> {
    if x_clean.shape() != x_train.shape() {
        return dimension(format!("clean {:?} vs training {:?}", x_clean.shape(), x_train.shape()));
    }
    if x_train.rows() != sub.dim() {
        return dimension(format!("samples have dimension {}, subspace {}", x_train.rows(), sub.dim()));
    }
    let (d, n) = x_train.shape();
    if n == 0 {
        return domain("no samples");
    }
    let mut total = T::zero();
    for j in 0..n {
        let centered: Vec<T> = (0..d).map(|i| x_train[(i, j)] - sub.mu[i]).collect();
        let proj = sub.project_centered(&centered);
        let sq: T = (0..d)
            .map(|i| {
                let r = x_clean[(i, j)] - sub.mu[i] - proj[i];
                r * r
            })
            .sum();
        total = total + sq.sqrt();
    }
    Ok(total / T::from_usize_lossy(n))
}

/// Largest principal angle (radians) between the column spaces of two orthonormal bases.
pub fn max_principal_angle<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<T> {
    if a.shape() != b.shape() {
        return dimension(format!("bases {:?} and {:?} differ", a.shape(), b.shape()));
    }
    // sin of the largest angle = ‖(I − A Aᵀ) B‖₂
    let coords = a.t_matmul(b)?;
    let proj = a.matmul(&coords)?;
    let s = b.sub(&proj)?.spectral_norm();
    Ok(s.min(T::one()).asin())
}

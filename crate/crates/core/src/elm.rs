//! Extreme learning machine: a single-hidden-layer network whose hidden
//! parameters are drawn once at random and never trained.
//!
//! Output weights `β` are fitted either in closed form under the regularized
//! squared loss ([`train_ls`]) or by the KMPE fixed-point iteration
//! ([`train_kmpe`]), which repeatedly solves `β = (HᵀΛH + λ'I)⁻¹HᵀΛT` with
//! `Λ_ii = φ(e_i)` evaluated at the previous iterate.
//!
//! For `p > 2` the plain iteration tends to fall into a two-cycle: samples that
//! are fitted well receive weights near zero, drift away, and are refitted on
//! the next step. The trainer therefore mixes in Anderson extrapolation over
//! the last few fixed-point steps, keeping an extrapolated point only when its
//! objective is no worse than the plain step's. A depth of 0 gives the plain
//! iteration.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dimension, domain, KmpeError, Result};
use crate::kmpe::{kmpe_weight_sq, one_minus_kernel_sq, KernelParams};
use crate::numlin::{min_norm_lstsq, solve_regularized_weighted, DiagWeights, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Sigmoid => T::one() / (T::one() + (-z).exp()),
            Activation::Tanh => z.tanh(),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = KmpeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            other => domain(format!("unknown activation '{other}'")),
        }
    }
}

/// Random hidden layer: `L` nodes with input weights `w_j` (rows) and biases `b_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenLayer<T> {
    input_dim: usize,
    weights: Matrix<T>,
    biases: Vec<T>,
    activation: Activation,
    seed: u64,
}

impl<T: Scalar> HiddenLayer<T> {
    /// Builds a layer from explicit parameters; `weights` is `L×d`.
    pub fn from_parts(weights: Matrix<T>, biases: Vec<T>, activation: Activation, seed: u64) -> Result<Self> {
        if weights.rows() == 0 || weights.cols() == 0 {
            return domain("hidden layer needs at least one node and one input");
        }
        if biases.len() != weights.rows() {
            return dimension(format!("{} biases for {} nodes", biases.len(), weights.rows()));
        }
        if !weights.is_finite() || biases.iter().any(|b| !b.is_finite()) {
            return domain("hidden layer parameters must be finite");
        }
        Ok(Self { input_dim: weights.cols(), weights, biases, activation, seed })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn node_count(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix<T> {
        &self.weights
    }

    pub fn biases(&self) -> &[T] {
        &self.biases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Trained output weights `β` (`L×C`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputWeights<T> {
    pub beta: Matrix<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig<T> {
    /// Ridge term `λ'` added to `HᵀΛH`.
    pub lambda_prime: T,
    pub kernel: KernelParams<T>,
    pub max_iter: usize,
    /// Stop once `|J(β_k) − J(β_{k−1})|` falls below this...
    pub tol: T,
    /// ...and `β_k` moves by less than this (max-abs) under one more update.
    pub fp_tol: T,
    /// Number of past steps used for Anderson extrapolation; 0 disables it.
    pub anderson_depth: usize,
}

impl<T: Scalar> TrainConfig<T> {
    pub fn new(lambda_prime: T, kernel: KernelParams<T>) -> Self {
        Self { lambda_prime, kernel, max_iter: 100, tol: T::lit(1e-6), fp_tol: T::lit(1e-7), anderson_depth: 5 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_prime.is_finite() && self.lambda_prime >= T::zero()) {
            return domain(format!("lambda' must be nonnegative, got {}", self.lambda_prime));
        }
        if self.max_iter == 0 {
            return domain("max_iter must be at least 1");
        }
        if !(self.tol.is_finite() && self.tol > T::zero()) {
            return domain(format!("tolerance must be positive, got {}", self.tol));
        }
        if !(self.fp_tol.is_finite() && self.fp_tol > T::zero()) {
            return domain(format!("fixed-point tolerance must be positive, got {}", self.fp_tol));
        }
        Ok(())
    }
}

/// Loss history of an iterative fit.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainTrace<T> {
    /// Objective after each iteration `k = 1..`.
    pub losses: Vec<T>,
    pub iterations_used: usize,
    pub converged: bool,
}

/// Distribution of the random hidden parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HiddenInit {
    /// `w_j` and `b_j` i.i.d. uniform on `[-1, 1]`.
    #[default]
    Uniform,
    /// `w_j` uniform on `[-slope, slope]^d` and `b_j = −w_j · c_j` with the
    /// center `c_j` uniform on `[lo, hi]^d`, so every node switches inside
    /// the input region.
    Centered { slope: f64, lo: f64, hi: f64 },
}

impl HiddenInit {
    pub fn validate(&self) -> Result<()> {
        match *self {
            HiddenInit::Uniform => Ok(()),
            HiddenInit::Centered { slope, lo, hi } => {
                if !(slope.is_finite() && slope > 0.0) {
                    return domain(format!("slope must be positive, got {slope}"));
                }
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return domain(format!("center range needs lo <= hi, got [{lo}, {hi}]"));
                }
                Ok(())
            }
        }
    }
}

/// Draws a hidden layer with weights and biases i.i.d. uniform on `[-1, 1]`.
pub fn init_hidden<T: Scalar>(d: usize, l: usize, activation: Activation, seed: u64) -> Result<HiddenLayer<T>> {
    init_hidden_with(d, l, activation, HiddenInit::Uniform, seed)
}

/// Draws a hidden layer from `init`; identical seeds give identical layers.
pub fn init_hidden_with<T: Scalar>(
    d: usize,
    l: usize,
    activation: Activation,
    init: HiddenInit,
    seed: u64,
) -> Result<HiddenLayer<T>> {
    if d == 0 || l == 0 {
        return domain("input dimension and node count must be at least 1");
    }
    init.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (weights, biases) = match init {
        HiddenInit::Uniform => {
            let w = Matrix::from_fn(l, d, |_, _| T::lit(rng.random_range(-1.0..=1.0)));
            let b = (0..l).map(|_| T::lit(rng.random_range(-1.0..=1.0))).collect();
            (w, b)
        }
        HiddenInit::Centered { slope, lo, hi } => {
            let w: Vec<f64> = (0..l * d).map(|_| rng.random_range(-slope..=slope)).collect();
            let b = (0..l)
                .map(|j| {
                    let dot: f64 = w[j * d..(j + 1) * d].iter().map(|&wk| wk * rng.random_range(lo..=hi)).sum();
                    T::lit(-dot)
                })
                .collect();
            (Matrix::from_vec(l, d, w.into_iter().map(T::lit).collect())?, b)
        }
    };
    HiddenLayer::from_parts(weights, biases, activation, seed)
}

/// Hidden-layer output matrix `H[i][j] = f(w_j · x_i + b_j)` for `N×d` inputs.
pub fn hidden_matrix<T: Scalar>(layer: &HiddenLayer<T>, x: &Matrix<T>) -> Result<Matrix<T>> {
    if x.cols() != layer.input_dim {
        return dimension(format!("inputs have {} columns, layer expects {}", x.cols(), layer.input_dim));
    }
    let l = layer.node_count();
    Ok(Matrix::from_fn(x.rows(), l, |i, j| {
        let z: T = x.row(i).iter().zip(layer.weights.row(j)).map(|(&a, &w)| a * w).sum();
        layer.activation.apply(z + layer.biases[j])
    }))
}

/// Closed-form `β = (HᵀH + λI)⁻¹HᵀT` for `λ > 0` (RELM).
///
/// `λ = 0` is the plain ELM `β = H⁺T`, the minimum-norm least-squares solution,
/// which stays defined when random sigmoid features are nearly collinear.
pub fn train_ls<T: Scalar>(h: &Matrix<T>, t: &Matrix<T>, lambda: T) -> Result<OutputWeights<T>> {
    if !(lambda.is_finite() && lambda >= T::zero()) {
        return domain(format!("ridge parameter must be nonnegative, got {lambda}"));
    }
    let beta = if lambda == T::zero() {
        min_norm_lstsq(h, t)?
    } else {
        solve_regularized_weighted(h, &DiagWeights::ones(h.rows()), t, lambda)?
    };
    Ok(OutputWeights { beta })
}

/// Per-row squared residual norms `‖t_i − h_i β‖²`.
pub fn residual_sq_norms<T: Scalar>(h: &Matrix<T>, t: &Matrix<T>, beta: &Matrix<T>) -> Result<Vec<T>> {
    let y = h.matmul(beta)?;
    if y.shape() != t.shape() {
        return dimension(format!("predictions {:?} vs targets {:?}", y.shape(), t.shape()));
    }
    Ok((0..t.rows())
        .map(|i| t.row(i).iter().zip(y.row(i)).map(|(&a, &b)| (a - b) * (a - b)).sum())
        .collect())
}

/// `J = (1/N) Σ (1 − κ_σ(r_i))^{p/2} + (p / 4σ²N) λ' ‖β‖²`.
pub fn kmpe_objective<T: Scalar>(
    h: &Matrix<T>,
    t: &Matrix<T>,
    beta: &Matrix<T>,
    cfg: &TrainConfig<T>,
) -> Result<T> {
    let r2 = residual_sq_norms(h, t, beta)?;
    let n = T::from_usize_lossy(r2.len());
    let sigma = cfg.kernel.sigma();
    let half_p = cfg.kernel.p() / T::lit(2.0);
    let data: T = r2.iter().map(|&s| one_minus_kernel_sq(s, sigma).powf(half_p)).sum::<T>() / n;
    let beta_sq: T = beta.as_slice().iter().map(|&b| b * b).sum();
    let reg = cfg.kernel.p() / (T::lit(4.0) * sigma * sigma * n) * cfg.lambda_prime * beta_sq;
    Ok(data + reg)
}

/// Fixed-point weights `Λ_ii = φ(r_i)` for the current `β`.
pub fn fixed_point_weights<T: Scalar>(
    h: &Matrix<T>,
    t: &Matrix<T>,
    beta: &Matrix<T>,
    kernel: &KernelParams<T>,
) -> Result<DiagWeights<T>> {
    let r2 = residual_sq_norms(h, t, beta)?;
    DiagWeights::new(r2.into_iter().map(|s| kmpe_weight_sq(s, kernel)).collect())
}

/// One application of the fixed-point map `β ↦ (HᵀΛ(β)H + λ'I)⁻¹HᵀΛ(β)T`.
pub fn fixed_point_update<T: Scalar>(
    h: &Matrix<T>,
    t: &Matrix<T>,
    beta: &Matrix<T>,
    cfg: &TrainConfig<T>,
) -> Result<Matrix<T>> {
    let lam = fixed_point_weights(h, t, beta, &cfg.kernel)?;
    solve_regularized_weighted(h, &lam, t, cfg.lambda_prime)
}

/// KMPE fixed-point training on a precomputed hidden matrix.
///
/// Starts from `β₀ = 0` and runs at most `max_iter` updates. The run counts as
/// converged once the objective changes by less than `tol` and one further
/// update moves `β` by less than `fp_tol`, so a converged `β` is a fixed point
/// of the update to that accuracy. For multi-output targets the kernel sees
/// the Euclidean norm of each residual row.
pub fn train_kmpe_on_hidden<T: Scalar>(
    h: &Matrix<T>,
    t: &Matrix<T>,
    cfg: &TrainConfig<T>,
) -> Result<(OutputWeights<T>, TrainTrace<T>)> {
    cfg.validate()?;
    if h.rows() == 0 {
        return domain("training set is empty");
    }
    if t.rows() != h.rows() {
        return dimension(format!("{} targets for {} samples", t.rows(), h.rows()));
    }
    let (l, c) = (h.cols(), t.cols());
    let mut beta = Matrix::zeros(l, c);
    let mut loss = kmpe_objective(h, t, &beta, cfg)?;
    let mut change = T::infinity();
    let mut trace = TrainTrace::default();
    let mut mixer = Anderson::new(cfg.anderson_depth);
    let mut step = fixed_point_update(h, t, &beta, cfg)?;
    loop {
        if !step.is_finite() {
            return Err(KmpeError::Divergence { iteration: trace.iterations_used + 1 });
        }
        if change.abs() < cfg.tol && step.sub(&beta)?.max_abs() < cfg.fp_tol {
            trace.converged = true;
            break;
        }
        if trace.iterations_used == cfg.max_iter {
            break;
        }
        let k = trace.iterations_used + 1;
        let mut next = step.clone();
        let mut next_loss = kmpe_objective(h, t, &next, cfg)?;
        if let Some(cand) = mixer.extrapolate(&beta, &next)? {
            let cand_loss = kmpe_objective(h, t, &cand, cfg)?;
            if cand.is_finite() && cand_loss <= next_loss {
                next = cand;
                next_loss = cand_loss;
            } else {
                mixer.restart();
            }
        }
        if !next_loss.is_finite() || !next.is_finite() {
            return Err(KmpeError::Divergence { iteration: k });
        }
        let slack = T::lit(1e-12).max(T::lit(16.0) * T::epsilon() * loss.abs());
        if next_loss > loss + slack {
            // the update direction is a descent direction; shorten it
            let full = step.sub(&beta)?;
            let mut eta = T::one();
            for _ in 0..MAX_HALVINGS {
                eta = eta / T::lit(2.0);
                let trial = Matrix::from_fn(l, c, |i, j| beta[(i, j)] + eta * full[(i, j)]);
                let trial_loss = kmpe_objective(h, t, &trial, cfg)?;
                if trial_loss <= loss + slack {
                    next = trial;
                    next_loss = trial_loss;
                    break;
                }
            }
            if next_loss > loss + slack {
                next = beta.clone();
                next_loss = loss;
            }
            mixer.restart();
        }
        change = next_loss - loss;
        loss = next_loss;
        beta = next;
        trace.losses.push(loss);
        trace.iterations_used = k;
        step = fixed_point_update(h, t, &beta, cfg)?;
    }
    Ok((OutputWeights { beta }, trace))
}

const MAX_HALVINGS: usize = 30;

/// Anderson mixing over the residuals `f = G(β) − β` of the last few steps.
struct Anderson<T> {
    depth: usize,
    /// `(β, G(β))` pairs, oldest first.
    history: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Scalar> Anderson<T> {
    fn new(depth: usize) -> Self {
        Self { depth, history: Vec::new() }
    }

    fn restart(&mut self) {
        let last = self.history.pop();
        self.history.clear();
        self.history.extend(last);
    }

    /// Records `(β, G(β))` and returns the extrapolated point, if any.
    fn extrapolate(&mut self, beta: &Matrix<T>, mapped: &Matrix<T>) -> Result<Option<Matrix<T>>> {
        if self.depth == 0 {
            return Ok(None);
        }
        self.history.push((beta.as_slice().to_vec(), mapped.as_slice().to_vec()));
        if self.history.len() > self.depth + 1 {
            self.history.remove(0);
        }
        let m = self.history.len() - 1;
        if m == 0 {
            return Ok(None);
        }
        let n = beta.as_slice().len();
        let resid = |k: usize, i: usize| self.history[k].1[i] - self.history[k].0[i];
        let df = Matrix::from_fn(n, m, |i, j| resid(j + 1, i) - resid(j, i));
        let f = Matrix::from_fn(n, 1, |i, _| resid(m, i));
        let gamma = min_norm_lstsq(&df, &f)?;
        let g = &self.history[m].1;
        let out: Vec<T> = (0..n)
            .map(|i| {
                let corr: T = (0..m).map(|j| (self.history[j + 1].1[i] - self.history[j].1[i]) * gamma[(j, 0)]).sum();
                g[i] - corr
            })
            .collect();
        Ok(Some(Matrix::from_vec(beta.rows(), beta.cols(), out)?))
    }
}

/// ELM-KMPE training: hidden matrix of `x` followed by [`train_kmpe_on_hidden`].
pub fn train_kmpe<T: Scalar>(
    layer: &HiddenLayer<T>,
    x: &Matrix<T>,
    t: &Matrix<T>,
    cfg: &TrainConfig<T>,
) -> Result<(OutputWeights<T>, TrainTrace<T>)> {
    let h = hidden_matrix(layer, x)?;
    train_kmpe_on_hidden(&h, t, cfg)
}

/// Network output `Y = H β`.
pub fn predict<T: Scalar>(layer: &HiddenLayer<T>, beta: &OutputWeights<T>, x: &Matrix<T>) -> Result<Matrix<T>> {
    let h = hidden_matrix(layer, x)?;
    if beta.beta.rows() != h.cols() {
        return dimension(format!("β has {} rows, layer has {} nodes", beta.beta.rows(), h.cols()));
    }
    h.matmul(&beta.beta)
}

/// Index of the largest output per row; ties go to the lowest index.
pub fn classify<T: Scalar>(layer: &HiddenLayer<T>, beta: &OutputWeights<T>, x: &Matrix<T>) -> Result<Vec<usize>> {
    let y = predict(layer, beta, x)?;
    Ok((0..y.rows()).map(|i| argmax(y.row(i))).collect())
}

pub(crate) fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// `{0, 1}` one-hot encoding of class labels into an `N×classes` matrix.
pub fn one_hot<T: Scalar>(labels: &[usize], classes: usize) -> Result<Matrix<T>> {
    if let Some(&bad) = labels.iter().find(|&&c| c >= classes) {
        return domain(format!("label {bad} outside 0..{classes}"));
    }
    Ok(Matrix::from_fn(labels.len(), classes, |i, j| if labels[i] == j { T::one() } else { T::zero() }))
}

/// Everything needed to reproduce predictions of a trained network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElmModel<T> {
    pub layer: HiddenLayer<T>,
    pub output: OutputWeights<T>,
    pub kernel: Option<KernelParams<T>>,
}

const ELM_FORMAT: &str = "kmpe-elm/1";

#[derive(Serialize, Deserialize)]
struct Record<M> {
    format: String,
    model: M,
}

impl<T: Scalar> ElmModel<T> {
    pub fn predict(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        predict(&self.layer, &self.output, x)
    }

    pub fn save<W: Write>(&self, writer: W) -> Result<()> {
        save_record(writer, ELM_FORMAT, self)
    }

    pub fn load<R: Read>(reader: R) -> Result<Self> {
        let model: Self = load_record(reader, ELM_FORMAT)?;
        let layer = &model.layer;
        HiddenLayer::from_parts(layer.weights.clone(), layer.biases.clone(), layer.activation, layer.seed)?;
        if model.output.beta.rows() != layer.node_count() {
            return Err(KmpeError::Format("β row count does not match node count".into()));
        }
        Ok(model)
    }
}

pub(crate) fn save_record<W: Write, M: Serialize>(writer: W, format: &str, model: &M) -> Result<()> {
    serde_json::to_writer_pretty(writer, &Record { format: format.to_string(), model })
        .map_err(|e| KmpeError::Format(e.to_string()))
}

pub(crate) fn load_record<R: Read, M: serde::de::DeserializeOwned>(reader: R, format: &str) -> Result<M> {
    let rec: Record<M> = serde_json::from_reader(reader).map_err(|e| KmpeError::Format(e.to_string()))?;
    if rec.format != format {
        return Err(KmpeError::Format(format!("expected format '{format}', found '{}'", rec.format)));
    }
    Ok(rec.model)
}

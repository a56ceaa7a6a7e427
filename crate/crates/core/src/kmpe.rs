//! Kernel mean p-power error (KMPE) and the correntropy family it generalizes.
//!
//! With a Gaussian kernel `κ_σ(u) = exp(-u² / 2σ²)`, the empirical KMPE of a
//! residual vector `e` is
//!
//! ```text
//! Ĉ_p(e) = (1/N) Σ (1 - κ_σ(e_i))^{p/2}
//! ```
//!
//! At `p = 2` this is the correntropic loss (C-Loss), `1 - V̂` where `V̂` is the
//! sample correntropy. The per-sample weight [`kmpe_weight`] is the factor that
//! turns a stationary point of the KMPE objective into a weighted least-squares
//! fixed point; both the ELM and PCA trainers are driven by it.

use crate::error::{domain, dimension, Result};
use crate::scalar::Scalar;

/// Floor applied to `1 - κ` before raising it to a negative power.
pub const WEIGHT_CLAMP: f64 = 1e-12;

/// Kernel bandwidth `sigma` and power `p`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KernelParams<T> {
    sigma: T,
    p: T,
}

impl<T: Scalar> KernelParams<T> {
    pub fn new(sigma: T, p: T) -> Result<Self> {
        if !(sigma.is_finite() && sigma > T::zero()) {
            return domain(format!("kernel bandwidth must be positive and finite, got {sigma}"));
        }
        if !(p.is_finite() && p > T::zero()) {
            return domain(format!("power parameter must be positive and finite, got {p}"));
        }
        Ok(Self { sigma, p })
    }

    #[inline]
    pub fn sigma(&self) -> T {
        self.sigma
    }

    #[inline]
    pub fn p(&self) -> T {
        self.p
    }

    /// Same power with a different bandwidth.
    pub fn with_sigma(&self, sigma: T) -> Result<Self> {
        Self::new(sigma, self.p)
    }
}

/// Non-empty vector of finite residuals `e = x - y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorVector<T>(Vec<T>);

impl<T: Scalar> ErrorVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return domain("error vector must be non-empty");
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return domain(format!("error vector entry {i} is not finite"));
        }
        Ok(Self(values))
    }

    /// Residuals `x - y` of two equal-length sequences.
    pub fn from_difference(x: &[T], y: &[T]) -> Result<Self> {
        if x.len() != y.len() {
            return dimension(format!("sequence lengths differ: {} vs {}", x.len(), y.len()));
        }
        Self::new(x.iter().zip(y).map(|(&a, &b)| a - b).collect())
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|&v| -v).collect())
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T> AsRef<[T]> for ErrorVector<T> {
    fn as_ref(&self) -> &[T] {
        &self.0
    }
}

/// `exp(-u² / 2σ²)`.
pub fn gaussian_kernel<T: Scalar>(u: T, sigma: T) -> Result<T> {
    if !u.is_finite() {
        return domain(format!("kernel argument must be finite, got {u}"));
    }
    if !(sigma.is_finite() && sigma > T::zero()) {
        return domain(format!("kernel bandwidth must be positive, got {sigma}"));
    }
    Ok(kernel(u, sigma))
}

// Scalar and squared-norm paths share one expression so that a one-column
// residual produces bit-identical weights either way.
#[inline]
fn neg_exponent<T: Scalar>(norm_sq: T, sigma: T) -> T {
    -norm_sq / (T::lit(2.0) * sigma * sigma)
}

#[inline]
pub(crate) fn kernel<T: Scalar>(u: T, sigma: T) -> T {
    kernel_sq(u * u, sigma)
}

#[inline]
pub(crate) fn kernel_sq<T: Scalar>(norm_sq: T, sigma: T) -> T {
    neg_exponent(norm_sq, sigma).exp()
}

/// `1 - κ_σ(u)`, evaluated without cancellation for small `u / σ`.
#[inline]
pub(crate) fn one_minus_kernel<T: Scalar>(u: T, sigma: T) -> T {
    one_minus_kernel_sq(u * u, sigma)
}

/// Same as [`one_minus_kernel`] but in terms of a squared norm `‖e‖²`.
#[inline]
pub(crate) fn one_minus_kernel_sq<T: Scalar>(norm_sq: T, sigma: T) -> T {
    -neg_exponent(norm_sq, sigma).exp_m1()
}

/// Single-sample KMPE term `(1 - κ_σ(u))^{p/2}`.
#[inline]
pub fn kmpe_term<T: Scalar>(u: T, params: &KernelParams<T>) -> T {
    one_minus_kernel(u, params.sigma).powf(params.p / T::lit(2.0))
}

/// Empirical KMPE `(1/N) Σ (1 - κ_σ(e_i))^{p/2}`, always in `[0, 1)`.
pub fn empirical_kmpe<T: Scalar>(e: &ErrorVector<T>, params: &KernelParams<T>) -> T {
    let sum: T = e.values().iter().map(|&u| kmpe_term(u, params)).sum();
    sum / T::from_usize_lossy(e.len())
}

/// Sample correntropy `(1/N) Σ κ_σ(x_i - y_i)`.
pub fn empirical_correntropy<T: Scalar>(x: &[T], y: &[T], sigma: T) -> Result<T> {
    let e = ErrorVector::from_difference(x, y)?;
    gaussian_kernel(T::zero(), sigma)?;
    let sum: T = e.values().iter().map(|&u| kernel(u, sigma)).sum();
    Ok(sum / T::from_usize_lossy(e.len()))
}

/// Correntropic loss `1 - V̂(x, y)`; equals [`empirical_kmpe`] at `p = 2`.
pub fn c_loss<T: Scalar>(x: &[T], y: &[T], sigma: T) -> Result<T> {
    let e = ErrorVector::from_difference(x, y)?;
    gaussian_kernel(T::zero(), sigma)?;
    let sum: T = e.values().iter().map(|&u| one_minus_kernel(u, sigma)).sum();
    Ok(sum / T::from_usize_lossy(e.len()))
}

/// `base^exponent`, flooring `base` at [`WEIGHT_CLAMP`] when the exponent is negative.
#[inline]
pub(crate) fn clamped_pow<T: Scalar>(base: T, exponent: T) -> T {
    if exponent < T::zero() {
        base.max(T::lit(WEIGHT_CLAMP)).powf(exponent)
    } else {
        base.powf(exponent)
    }
}

/// Fixed-point weight `φ(e) = (1 - κ_σ(e))^{(p-2)/2} κ_σ(e)`.
///
/// For `p < 2` the exponent is negative and `φ` is unbounded near `e = 0`;
/// the base is floored at [`WEIGHT_CLAMP`] in that regime so weights stay finite.
pub fn kmpe_weight<T: Scalar>(e: T, params: &KernelParams<T>) -> T {
    weight_from_parts(kernel(e, params.sigma), one_minus_kernel(e, params.sigma), params.p)
}

/// Weight for a vector residual given its squared Euclidean norm.
pub fn kmpe_weight_sq<T: Scalar>(norm_sq: T, params: &KernelParams<T>) -> T {
    weight_from_parts(
        kernel_sq(norm_sq, params.sigma),
        one_minus_kernel_sq(norm_sq, params.sigma),
        params.p,
    )
}

#[inline]
fn weight_from_parts<T: Scalar>(k: T, one_minus: T, p: T) -> T {
    if k == T::zero() {
        return T::zero();
    }
    clamped_pow(one_minus, (p - T::lit(2.0)) / T::lit(2.0)) * k
}

/// Diagonal of the Hessian of [`empirical_kmpe`] with respect to `e`.
pub fn kmpe_hessian_diag<T: Scalar>(e: &ErrorVector<T>, params: &KernelParams<T>) -> Vec<T> {
    let n = T::from_usize_lossy(e.len());
    let p = params.p;
    let s2 = params.sigma * params.sigma;
    let two = T::lit(2.0);
    let scale = p / (T::lit(4.0) * n * s2 * s2);
    e.values()
        .iter()
        .map(|&u| {
            let k = kernel(u, params.sigma);
            let om = one_minus_kernel(u, params.sigma);
            let u2 = u * u;
            let bracket = (p - two) * u2 * k - two * u2 * om + two * s2 * om;
            if bracket == T::zero() || k == T::zero() {
                return T::zero();
            }
            scale * clamped_pow(om, (p - T::lit(4.0)) / two) * k * bracket
        })
        .collect()
}

/// Smallest power `p ≥ 2` for which every Hessian diagonal entry is nonnegative.
pub fn convexity_min_p<T: Scalar>(e: &ErrorVector<T>, sigma: T) -> T {
    let two = T::lit(2.0);
    e.values()
        .iter()
        .filter(|u| u.abs() > sigma)
        .map(|&u| {
            let u2 = u * u;
            let k = kernel(u, sigma);
            let om = one_minus_kernel(u, sigma);
            two * (u2 - sigma * sigma) * om / (u2 * k) + two
        })
        .fold(two, T::max)
}

/// Outcome of one executable property check.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyCheck {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    /// Discrepancy measure compared against `tolerance`; relative unless the
    /// check documents otherwise.
    pub error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl PropertyCheck {
    fn new(name: &'static str, lhs: f64, rhs: f64, error: f64, tolerance: f64) -> Self {
        Self { name, lhs, rhs, error, tolerance, passed: error.is_finite() && error <= tolerance }
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs());
    if denom == 0.0 {
        0.0
    } else {
        (a - b).abs() / denom
    }
}

/// Symmetry: `Ĉ_p(e) = Ĉ_p(-e)`.
pub fn check_symmetry<T: Scalar>(e: &ErrorVector<T>, params: &KernelParams<T>) -> PropertyCheck {
    let a = empirical_kmpe(e, params).as_f64();
    let b = empirical_kmpe(&e.negated(), params).as_f64();
    PropertyCheck::new("symmetry", a, b, rel_err(a, b), 1e-15)
}

/// Bounds: `0 ≤ Ĉ_p < 1`, with zero exactly when `e = 0`.
///
/// `error` is 0 when all conditions hold and 1 otherwise. In double precision
/// `1 - κ` rounds to 1 once `|e_i|` exceeds about 8.6σ, so a vector made only of
/// such errors evaluates to exactly 1.
pub fn check_bounds<T: Scalar>(e: &ErrorVector<T>, params: &KernelParams<T>) -> PropertyCheck {
    let v = empirical_kmpe(e, params).as_f64();
    let all_zero = e.values().iter().all(|u| *u == T::zero());
    let ok = (0.0..1.0).contains(&v) && ((v == 0.0) == all_zero);
    PropertyCheck::new("bounds", v, if all_zero { 0.0 } else { 1.0 }, if ok { 0.0 } else { 1.0 }, 0.0)
}

/// Small-`p` limit: `Ĉ_p ≈ 1 + (p/2) mean(log(1 - κ_σ(e_i)))`, absolute error.
pub fn check_small_p<T: Scalar>(e: &ErrorVector<T>, params: &KernelParams<T>) -> PropertyCheck {
    let lhs = empirical_kmpe(e, params).as_f64();
    let n = e.len() as f64;
    let sigma = params.sigma.as_f64();
    let mean_log: f64 =
        e.values().iter().map(|u| one_minus_kernel(u.as_f64(), sigma).ln()).sum::<f64>() / n;
    let rhs = 1.0 + 0.5 * params.p.as_f64() * mean_log;
    PropertyCheck::new("small_p_limit", lhs, rhs, (lhs - rhs).abs(), 1e-6)
}

/// Large-bandwidth limit: `Ĉ_p ≈ (2σ²)^{-p/2} mean(|e_i|^p)`, relative error.
pub fn check_mpe_limit<T: Scalar>(e: &ErrorVector<T>, params: &KernelParams<T>) -> PropertyCheck {
    let lhs = empirical_kmpe(e, params).as_f64();
    let p = params.p.as_f64();
    let s = params.sigma.as_f64();
    let n = e.len() as f64;
    let mpe = e.values().iter().map(|u| u.as_f64().abs().powf(p)).sum::<f64>() / n;
    let rhs = (2.0 * s * s).powf(-p / 2.0) * mpe;
    PropertyCheck::new("mpe_limit", lhs, rhs, rel_err(lhs, rhs), 1e-3)
}

/// `L_p` behaviour at large bandwidth: `N (√2 σ)^p Ĉ_p(x - 0) ≈ ‖x‖_p^p`.
pub fn check_lp_limit<T: Scalar>(x: &ErrorVector<T>, params: &KernelParams<T>) -> PropertyCheck {
    let p = params.p.as_f64();
    let s = params.sigma.as_f64();
    let n = x.len() as f64;
    let lhs = n * (2f64.sqrt() * s).powf(p) * empirical_kmpe(x, params).as_f64();
    let rhs: f64 = x.values().iter().map(|u| u.as_f64().abs().powf(p)).sum();
    let err = if rhs == 0.0 { lhs.abs() } else { (lhs - rhs).abs() / rhs };
    PropertyCheck::new("lp_norm_limit", lhs, rhs, err, 1e-3)
}

/// `L_0` behaviour at small bandwidth: `N Ĉ_p(x - 0) ≈ ‖x‖_0`, absolute error.
pub fn check_l0_limit<T: Scalar>(x: &ErrorVector<T>, params: &KernelParams<T>) -> PropertyCheck {
    let lhs = x.len() as f64 * empirical_kmpe(x, params).as_f64();
    let rhs = x.values().iter().filter(|u| **u != T::zero()).count() as f64;
    PropertyCheck::new("l0_norm_limit", lhs, rhs, (lhs - rhs).abs(), 1e-6)
}

/// Hessian diagonal against central second differences of the loss, max-abs error.
///
/// The finite difference is taken on each sample's term divided by `N`, which is
/// the exact second partial of the mean since the terms are separable.
pub fn check_hessian_fd<T: Scalar>(e: &ErrorVector<T>, params: &KernelParams<T>) -> PropertyCheck {
    let analytic = kmpe_hessian_diag(e, params);
    let n = e.len() as f64;
    let h = 1e-4;
    let sigma = params.sigma.as_f64();
    let p = params.p.as_f64();
    let f = |u: f64| one_minus_kernel(u, sigma).powf(p / 2.0) / n;
    let mut worst = 0.0f64;
    let mut worst_pair = (0.0, 0.0);
    for (u, xi) in e.values().iter().zip(&analytic) {
        let u = u.as_f64();
        let fd = (f(u + h) - 2.0 * f(u) + f(u - h)) / (h * h);
        let d = (fd - xi.as_f64()).abs();
        if d >= worst {
            worst = d;
            worst_pair = (xi.as_f64(), fd);
        }
    }
    PropertyCheck::new("hessian_finite_difference", worst_pair.0, worst_pair.1, worst, 1e-5)
}

/// The power returned by [`convexity_min_p`] yields a nonnegative Hessian diagonal.
///
/// `error` is the magnitude of the most negative diagonal entry (0 when none).
pub fn check_convexity_threshold<T: Scalar>(e: &ErrorVector<T>, sigma: T) -> Result<PropertyCheck> {
    let p_star = convexity_min_p(e, sigma);
    let params = KernelParams::new(sigma, p_star)?;
    let min = kmpe_hessian_diag(e, &params)
        .into_iter()
        .map(|v| v.as_f64())
        .fold(f64::INFINITY, f64::min);
    Ok(PropertyCheck::new("convexity_threshold", p_star.as_f64(), min, (-min).max(0.0), 1e-12))
}

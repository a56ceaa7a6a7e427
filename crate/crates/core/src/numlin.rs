//! Dense linear algebra used by the trainers.
//!
//! Only what the fixed-point and IRLS loops need: a row-major matrix, a
//! pivoted QR solve of regularized weighted least squares, a one-sided Jacobi
//! minimum-norm solve and a cyclic Jacobi symmetric eigensolver.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{dimension, domain, KmpeError, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != cols) {
            return dimension(format!("row {i} has {} entries, expected {cols}", rows[i].len()));
        }
        Ok(Self { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Single-column matrix.
    pub fn column_vector(values: &[T]) -> Self {
        Self { rows: values.len(), cols: 1, data: values.to_vec() }
    }

    pub fn diag(values: &[T]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[T]) {
        for (i, &v) in values.iter().enumerate() {
            self[(i, j)] = v;
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Keeps the first `k` columns.
    pub fn leading_columns(&self, k: usize) -> Self {
        Self::from_fn(self.rows, k, |i, j| self[(i, j)])
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            ));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in a_row.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o = *o + a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · rhs` without materializing the transpose.
    pub fn t_matmul(&self, rhs: &Self) -> Result<Self> {
        if self.rows != rhs.rows {
            return dimension(format!(
                "cannot multiply ({}x{})ᵀ by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            ));
        }
        let mut out = Self::zeros(self.cols, rhs.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = rhs.row(k);
            for (i, &a) in a_row.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o = *o + a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        if self.shape() != rhs.shape() {
            return dimension(format!("shapes {:?} and {:?} differ", self.shape(), rhs.shape()));
        }
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    pub fn scale(&self, s: T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| v * s).collect() }
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Spectral norm, from the largest eigenvalue of the smaller Gram matrix.
    pub fn spectral_norm(&self) -> T {
        if self.rows == 0 || self.cols == 0 {
            return T::zero();
        }
        let gram = if self.cols <= self.rows {
            self.t_matmul(self)
        } else {
            self.matmul(&self.transpose())
        }
        .expect("gram dimensions agree");
        let (values, _) = jacobi_eigen(&gram);
        values.into_iter().fold(T::zero(), T::max).max(T::zero()).sqrt()
    }

    pub fn map(&self, mut f: impl FnMut(T) -> T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Diagonal of a nonnegative per-sample weight matrix Λ.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagWeights<T>(Vec<T>);

impl<T: Scalar> DiagWeights<T> {
    pub fn new(entries: Vec<T>) -> Result<Self> {
        if let Some(i) = entries.iter().position(|w| !(w.is_finite() && *w >= T::zero())) {
            return domain(format!("weight {i} must be finite and nonnegative, got {}", entries[i]));
        }
        Ok(Self(entries))
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![T::one(); n])
    }

    pub fn entries(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> T {
        self.0.iter().copied().sum()
    }
}

/// Solves `(HᵀΛH + λ'I) β = HᵀΛT`.
///
/// The minimizer of `Σ Λ_ii ‖t_i − h_i β‖² + λ'‖β‖²`, computed from the stacked
/// least-squares problem `[Λ^{1/2} H; √λ' I] β ≈ [Λ^{1/2} T; 0]` so the
/// conditioning is that of the design rather than its square. With `λ' = 0`
/// and a rank-deficient weighted design the call fails with
/// [`KmpeError::Singular`].
pub fn solve_regularized_weighted<T: Scalar>(
    h: &Matrix<T>,
    lam: &DiagWeights<T>,
    t: &Matrix<T>,
    lambda_prime: T,
) -> Result<Matrix<T>> {
    let (n, l) = h.shape();
    if lam.len() != n {
        return dimension(format!("{} weights for {n} rows", lam.len()));
    }
    if t.rows() != n {
        return dimension(format!("targets have {} rows, design has {n}", t.rows()));
    }
    if !(lambda_prime.is_finite() && lambda_prime >= T::zero()) {
        return domain(format!("regularization must be nonnegative, got {lambda_prime}"));
    }
    let rows: Vec<(usize, T)> = lam
        .entries()
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > T::zero())
        .map(|(i, &w)| (i, w.sqrt()))
        .collect();
    let ridge = lambda_prime.sqrt();
    let extra = if lambda_prime > T::zero() { l } else { 0 };
    let stack = |col: &dyn Fn(usize) -> T, ridge_entry: &dyn Fn(usize) -> T| -> Vec<T> {
        let mut v: Vec<T> = rows.iter().map(|&(i, s)| s * col(i)).collect();
        v.extend((0..extra).map(ridge_entry));
        v
    };
    let cols = (0..l)
        .map(|j| stack(&|i| h[(i, j)], &|r| if r == j { ridge } else { T::zero() }))
        .collect();
    let rhs = (0..t.cols()).map(|c| stack(&|i| t[(i, c)], &|_| T::zero())).collect();
    pivoted_qr_lstsq(cols, rhs)
}

/// Assembles `(HᵀΛH + λ'I, HᵀΛT)`.
pub fn weighted_normal_equations<T: Scalar>(
    h: &Matrix<T>,
    lam: &DiagWeights<T>,
    t: &Matrix<T>,
    lambda_prime: T,
) -> Result<(Matrix<T>, Matrix<T>)> {
    let (n, l) = h.shape();
    if lam.len() != n {
        return dimension(format!("{} weights for {n} rows", lam.len()));
    }
    if t.rows() != n {
        return dimension(format!("targets have {} rows, design has {n}", t.rows()));
    }
    if !(lambda_prime.is_finite() && lambda_prime >= T::zero()) {
        return domain(format!("regularization must be nonnegative, got {lambda_prime}"));
    }
    let c = t.cols();
    let mut a = Matrix::zeros(l, l);
    let mut b = Matrix::zeros(l, c);
    for (k, &w) in lam.entries().iter().enumerate() {
        if w == T::zero() {
            continue;
        }
        let hk = h.row(k);
        let tk = t.row(k);
        for i in 0..l {
            let whi = w * hk[i];
            if whi == T::zero() {
                continue;
            }
            let a_row = &mut a.data[i * l..(i + 1) * l];
            // upper triangle only, mirrored below
            for j in i..l {
                a_row[j] = a_row[j] + whi * hk[j];
            }
            let b_row = &mut b.data[i * c..(i + 1) * c];
            for (o, &tv) in b_row.iter_mut().zip(tk) {
                *o = *o + whi * tv;
            }
        }
    }
    for i in 0..l {
        a[(i, i)] = a[(i, i)] + lambda_prime;
        for j in 0..i {
            a[(i, j)] = a[(j, i)];
        }
    }
    Ok((a, b))
}

/// Minimum-norm least-squares solution `H⁺ T`.
///
/// Uses a one-sided Jacobi SVD of `H` itself, so the condition number is not
/// squared; singular values below `max(N, L) · eps · s_max` are treated as zero.
pub fn min_norm_lstsq<T: Scalar>(h: &Matrix<T>, t: &Matrix<T>) -> Result<Matrix<T>> {
    if t.rows() != h.rows() {
        return dimension(format!("targets have {} rows, design has {}", t.rows(), h.rows()));
    }
    let (n, l) = h.shape();
    let c = t.cols();
    if n >= l {
        let (u, v) = one_sided_jacobi(h);
        let norms: Vec<T> = u.iter().map(|col| col.iter().map(|&x| x * x).sum::<T>().sqrt()).collect();
        let smax = norms.iter().copied().fold(T::zero(), T::max);
        let tol = T::from_usize_lossy(n.max(l)) * T::epsilon() * smax;
        let mut beta = Matrix::zeros(l, c);
        for (k, col) in u.iter().enumerate() {
            if !(norms[k] > tol) {
                continue;
            }
            let s2 = norms[k] * norms[k];
            for j in 0..c {
                let proj: T = col.iter().enumerate().map(|(i, &x)| x * t[(i, j)]).sum::<T>() / s2;
                for r in 0..l {
                    beta[(r, j)] = beta[(r, j)] + v[k][r] * proj;
                }
            }
        }
        Ok(beta)
    } else {
        // underdetermined: β = Hᵀ (H Hᵀ)⁺ T
        let ht = h.transpose();
        let z = min_norm_lstsq(&ht, &Matrix::identity(l))?;
        // z = (Hᵀ)⁺, and H⁺ = ((Hᵀ)⁺)ᵀ
        z.transpose().matmul(t)
    }
}

/// Hestenes one-sided Jacobi on an `N×L` matrix with `N ≥ L`.
///
/// Returns the orthogonalized columns `A V` (norms are the singular values)
/// and the columns of `V`.
fn one_sided_jacobi<T: Scalar>(a: &Matrix<T>) -> (Vec<Vec<T>>, Vec<Vec<T>>) {
    let l = a.cols();
    let mut u: Vec<Vec<T>> = (0..l).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<T>> = (0..l).map(|j| (0..l).map(|i| if i == j { T::one() } else { T::zero() }).collect()).collect();
    let eps = T::epsilon();
    for _sweep in 0..60 {
        let mut rotated = false;
        for i in 0..l {
            for j in i + 1..l {
                let alpha: T = u[i].iter().map(|&x| x * x).sum();
                let beta: T = u[j].iter().map(|&x| x * x).sum();
                let gamma: T = u[i].iter().zip(&u[j]).map(|(&x, &y)| x * y).sum();
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let tan = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let cos = T::one() / (T::one() + tan * tan).sqrt();
                let sin = cos * tan;
                for cols in [&mut u, &mut v] {
                    let (lo, hi) = cols.split_at_mut(j);
                    for (x, y) in lo[i].iter_mut().zip(hi[0].iter_mut()) {
                        let (xi, yj) = (*x, *y);
                        *x = cos * xi - sin * yj;
                        *y = sin * xi + cos * yj;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    (u, v)
}

/// Least-squares solve of a tall system by Householder QR with column pivoting.
///
/// `cols` holds the columns of the `m×L` design, `rhs` the columns of the
/// `m×C` right-hand side. Fails with [`KmpeError::Singular`] when the numerical
/// rank is below `L`.
fn pivoted_qr_lstsq<T: Scalar>(mut cols: Vec<Vec<T>>, mut rhs: Vec<Vec<T>>) -> Result<Matrix<T>> {
    let l = cols.len();
    let m = cols.first().map_or(0, Vec::len);
    let mut perm: Vec<usize> = (0..l).collect();
    let mut r00 = T::zero();
    for k in 0..l {
        let tail_sq = |c: &Vec<T>| c[k..].iter().map(|&x| x * x).sum::<T>();
        let (piv, piv_sq) = (k..l)
            .map(|j| (j, tail_sq(&cols[j])))
            .fold((k, T::neg_infinity()), |best, cur| if cur.1 > best.1 { cur } else { best });
        let alpha = if k < m { piv_sq.sqrt() } else { T::zero() };
        if k == 0 {
            r00 = alpha;
        }
        if !(alpha > T::from_usize_lossy(m.max(l)) * T::epsilon() * r00) || r00 == T::zero() {
            return Err(KmpeError::Singular { rank: k, dim: l });
        }
        cols.swap(k, piv);
        perm.swap(k, piv);
        let diag = if cols[k][k] >= T::zero() { -alpha } else { alpha };
        let mut v: Vec<T> = cols[k][k..].to_vec();
        v[0] = v[0] - diag;
        let v_sq: T = v.iter().map(|&x| x * x).sum();
        cols[k][k] = diag;
        for x in &mut cols[k][k + 1..] {
            *x = T::zero();
        }
        if v_sq == T::zero() {
            continue;
        }
        let reflect = |c: &mut [T]| {
            let dot: T = c.iter().zip(&v).map(|(&a, &b)| a * b).sum();
            let f = T::lit(2.0) * dot / v_sq;
            for (x, &vi) in c.iter_mut().zip(&v) {
                *x = *x - f * vi;
            }
        };
        for c in cols[k + 1..].iter_mut() {
            reflect(&mut c[k..]);
        }
        for c in rhs.iter_mut() {
            reflect(&mut c[k..]);
        }
    }
    let mut out = Matrix::zeros(l, rhs.len());
    for (c, y) in rhs.iter().enumerate() {
        let mut x = vec![T::zero(); l];
        for k in (0..l).rev() {
            let mut s = y[k];
            for j in k + 1..l {
                s = s - cols[j][k] * x[j];
            }
            x[k] = s / cols[k][k];
        }
        for (k, &p) in perm.iter().enumerate() {
            out[(p, c)] = x[k];
        }
    }
    Ok(out)
}

fn symmetry_tolerance<T: Scalar>() -> T {
    T::lit(1e-10).max(T::lit(64.0) * T::epsilon())
}

/// Top-`m` eigenpairs of a symmetric matrix, eigenvalues descending.
///
/// Each eigenvector is signed so that its largest-magnitude entry is nonnegative.
pub fn sym_eig_top<T: Scalar>(s: &Matrix<T>, m: usize) -> Result<(Vec<T>, Matrix<T>)> {
    let d = s.rows();
    if s.cols() != d {
        return dimension(format!("eigenproblem needs a square matrix, got {}x{}", d, s.cols()));
    }
    if m > d {
        return domain(format!("requested {m} eigenpairs of a {d}x{d} matrix"));
    }
    if !s.is_finite() {
        return domain("matrix has non-finite entries");
    }
    let scale = s.max_abs();
    let tol = symmetry_tolerance::<T>() * scale;
    for i in 0..d {
        for j in 0..i {
            if (s[(i, j)] - s[(j, i)]).abs() > tol {
                return domain(format!("matrix is not symmetric at ({i}, {j})"));
            }
        }
    }
    let (values, vectors) = jacobi_eigen(s);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap_or(std::cmp::Ordering::Equal));
    let mut out = Matrix::zeros(d, m);
    let mut top = Vec::with_capacity(m);
    for (k, &idx) in order.iter().take(m).enumerate() {
        top.push(values[idx]);
        let mut v = vectors.column(idx);
        canonical_sign(&mut v);
        out.set_column(k, &v);
    }
    Ok((top, out))
}

/// Flips `v` so its entry of largest magnitude is nonnegative (first such entry on ties).
pub fn canonical_sign<T: Scalar>(v: &mut [T]) {
    let mut best = T::zero();
    let mut sign = T::one();
    for &x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = if x < T::zero() { -T::one() } else { T::one() };
        }
    }
    if sign < T::zero() {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Returns unsorted eigenvalues and the matrix whose columns are eigenvectors.
fn jacobi_eigen<T: Scalar>(s: &Matrix<T>) -> (Vec<T>, Matrix<T>) {
    let n = s.rows();
    let mut a = s.clone();
    // symmetrize exactly so rotations see one consistent matrix
    for i in 0..n {
        for j in 0..i {
            let v = (a[(i, j)] + a[(j, i)]) / T::lit(2.0);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let mut v = Matrix::identity(n);
    let total: T = a.as_slice().iter().map(|&x| x * x).sum();
    let eps = T::epsilon();
    for _sweep in 0..100 {
        let mut off = T::zero();
        for i in 0..n {
            for j in i + 1..n {
                off = off + a[(i, j)] * a[(i, j)];
            }
        }
        if off <= eps * eps * total || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let t = if theta == T::zero() { T::one() } else { t };
                let c = T::one() / (t * t + T::one()).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                a[(p, q)] = T::zero();
                a[(q, p)] = T::zero();
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

/// Weighted scatter `X̃ Λ X̃ᵀ` of a `d×n` sample matrix.
pub fn weighted_scatter<T: Scalar>(xc: &Matrix<T>, lam: &DiagWeights<T>) -> Result<Matrix<T>> {
    let (d, n) = xc.shape();
    if lam.len() != n {
        return dimension(format!("{} weights for {n} samples", lam.len()));
    }
    let w = lam.entries();
    let mut s = Matrix::zeros(d, d);
    for i in 0..d {
        let xi = xc.row(i);
        for j in i..d {
            let xj = xc.row(j);
            let v: T = (0..n).map(|k| xi[k] * w[k] * xj[k]).sum();
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    Ok(s)
}

/// Top-`m` eigenvectors of `X̃ Λ X̃ᵀ` as orthonormal columns of a `d×m` matrix.
///
/// When `n < d` the `n×n` matrix `Λ^{1/2} X̃ᵀ X̃ Λ^{1/2}` is decomposed instead
/// and mapped back; directions beyond the weighted rank are completed
/// orthonormally from the canonical basis.
pub fn weighted_principal_axes<T: Scalar>(
    xc: &Matrix<T>,
    lam: &DiagWeights<T>,
    m: usize,
) -> Result<(Vec<T>, Matrix<T>)> {
    let (d, n) = xc.shape();
    if lam.len() != n {
        return dimension(format!("{} weights for {n} samples", lam.len()));
    }
    if m > d {
        return domain(format!("requested {m} axes in dimension {d}"));
    }
    if n >= d {
        return sym_eig_top(&weighted_scatter(xc, lam)?, m);
    }
    let root: Vec<T> = lam.entries().iter().map(|w| w.sqrt()).collect();
    let scaled = Matrix::from_fn(d, n, |i, k| xc[(i, k)] * root[k]);
    let gram = scaled.t_matmul(&scaled)?;
    let (vals, u) = sym_eig_top(&gram, m.min(n))?;
    let floor = vals.first().copied().unwrap_or(T::zero()).max(T::zero())
        * T::from_usize_lossy(n)
        * T::epsilon()
        * T::lit(16.0);
    let mut basis: Vec<Vec<T>> = Vec::with_capacity(m);
    let mut values = Vec::with_capacity(m);
    for (k, &val) in vals.iter().enumerate() {
        if !(val > floor) {
            break;
        }
        let uk = u.column(k);
        let mut v: Vec<T> = (0..d)
            .map(|i| (0..n).map(|j| scaled[(i, j)] * uk[j]).sum::<T>() / val.sqrt())
            .collect();
        if !orthonormalize_against(&mut v, &basis) {
            break;
        }
        canonical_sign(&mut v);
        basis.push(v);
        values.push(val);
    }
    let mut e = 0;
    while basis.len() < m && e < d {
        let mut v = vec![T::zero(); d];
        v[e] = T::one();
        e += 1;
        if orthonormalize_against(&mut v, &basis) {
            canonical_sign(&mut v);
            basis.push(v);
            values.push(T::zero());
        }
    }
    let mut out = Matrix::zeros(d, m);
    for (k, v) in basis.iter().enumerate() {
        out.set_column(k, v);
    }
    Ok((values, out))
}

/// Two-pass Gram-Schmidt; returns false when `v` is (numerically) in the span.
fn orthonormalize_against<T: Scalar>(v: &mut [T], basis: &[Vec<T>]) -> bool {
    let norm0 = v.iter().map(|&x| x * x).sum::<T>().sqrt();
    for _ in 0..2 {
        for b in basis {
            let dot: T = v.iter().zip(b).map(|(&x, &y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, &y)| *x = *x - dot * y);
        }
    }
    let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
    if !(norm > T::lit(1e-6) * norm0) || norm == T::zero() {
        return false;
    }
    v.iter_mut().for_each(|x| *x = *x / norm);
    true
}

/// `max |VᵀV − I|` for a matrix with (intended) orthonormal columns.
pub fn orthonormality_error<T: Scalar>(v: &Matrix<T>) -> T {
    let g = v.t_matmul(v).expect("square gram");
    let mut worst = T::zero();
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            let target = if i == j { T::one() } else { T::zero() };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

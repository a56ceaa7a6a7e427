//! Evaluation metrics: RMSE, clustering accuracy under the optimal label
//! mapping, normalized mutual information, and a seeded Lloyd k-means.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{dimension, domain, Result};
use crate::numlin::Matrix;
use crate::scalar::Scalar;

/// Cluster or class labels in `0..k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelVector(Vec<usize>);

impl LabelVector {
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return domain("label vector must be non-empty");
        }
        Ok(Self(labels))
    }

    pub fn labels(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// One past the largest label.
    pub fn class_count(&self) -> usize {
        self.0.iter().max().map_or(0, |&m| m + 1)
    }
}

pub fn rmse<T: Scalar>(y: &[T], yhat: &[T]) -> Result<T> {
    if y.len() != yhat.len() {
        return dimension(format!("lengths differ: {} vs {}", y.len(), yhat.len()));
    }
    if y.is_empty() {
        return domain("rmse of empty sequences");
    }
    let sse: T = y.iter().zip(yhat).map(|(&a, &b)| (a - b) * (a - b)).sum();
    Ok((sse / T::from_usize_lossy(y.len())).sqrt())
}

/// Minimum-cost assignment on a square cost matrix (Kuhn-Munkres).
///
/// Returns `assignment` with row `i` assigned to column `assignment[i]`.
/// Shortest augmenting path with row/column potentials, `O(K³)`.
pub fn hungarian_map<T: Scalar>(cost: &Matrix<T>) -> Result<Vec<usize>> {
    let k = cost.rows();
    if cost.cols() != k {
        return dimension(format!("cost matrix must be square, got {}x{}", k, cost.cols()));
    }
    if !cost.is_finite() {
        return domain("cost matrix has non-finite entries");
    }
    // 1-based arrays; index 0 is the virtual unmatched column
    let inf = T::infinity();
    let mut u = vec![T::zero(); k + 1];
    let mut v = vec![T::zero(); k + 1];
    let mut col_owner = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    for row in 1..=k {
        col_owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![inf; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=k {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=k {
                if used[j] {
                    u[col_owner[j]] = u[col_owner[j]] + delta;
                    v[j] = v[j] - delta;
                } else {
                    minv[j] = minv[j] - delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; k];
    for j in 1..=k {
        if col_owner[j] > 0 {
            assignment[col_owner[j] - 1] = j - 1;
        }
    }
    Ok(assignment)
}

/// `K×K` co-occurrence counts `[pred][target]`, zero-padded to square.
pub fn contingency(pred: &LabelVector, target: &LabelVector) -> Result<Vec<Vec<usize>>> {
    if pred.len() != target.len() {
        return dimension(format!("{} predictions for {} targets", pred.len(), target.len()));
    }
    let k = pred.class_count().max(target.class_count());
    let mut table = vec![vec![0usize; k]; k];
    for (&a, &b) in pred.labels().iter().zip(target.labels()) {
        table[a][b] += 1;
    }
    Ok(table)
}

/// Fraction of samples whose predicted label, after the best one-to-one
/// relabeling, equals the target.
pub fn clustering_accuracy(pred: &LabelVector, target: &LabelVector) -> Result<f64> {
    let table = contingency(pred, target)?;
    let k = table.len();
    let cost = Matrix::from_fn(k, k, |a, b| -(table[a][b] as f64));
    let map = hungarian_map(&cost)?;
    let hits: usize = (0..k).map(|a| table[a][map[a]]).sum();
    Ok(hits as f64 / pred.len() as f64)
}

/// `I(p, t) / sqrt(H(p) H(t))` with natural-log entropies.
///
/// When either labeling has zero entropy the score is 1 if the two
/// partitions coincide and 0 otherwise.
pub fn nmi(pred: &LabelVector, target: &LabelVector) -> Result<f64> {
    let table = contingency(pred, target)?;
    let n = pred.len() as f64;
    let k = table.len();
    let row: Vec<f64> = table.iter().map(|r| r.iter().sum::<usize>() as f64).collect();
    let col: Vec<f64> = (0..k).map(|b| table.iter().map(|r| r[b]).sum::<usize>() as f64).collect();
    let entropy = |counts: &[f64]| -> f64 {
        counts.iter().filter(|&&c| c > 0.0).map(|&c| -(c / n) * (c / n).ln()).sum()
    };
    let hp = entropy(&row);
    let ht = entropy(&col);
    if hp == 0.0 || ht == 0.0 {
        return Ok(if same_partition(pred, target) { 1.0 } else { 0.0 });
    }
    let mut mi = 0.0;
    for a in 0..k {
        for b in 0..k {
            let c = table[a][b] as f64;
            if c > 0.0 {
                mi += (c / n) * ((c * n) / (row[a] * col[b])).ln();
            }
        }
    }
    Ok((mi / (hp * ht).sqrt()).clamp(0.0, 1.0))
}

fn same_partition(a: &LabelVector, b: &LabelVector) -> bool {
    let mut fwd = std::collections::HashMap::new();
    let mut back = std::collections::HashMap::new();
    a.labels().iter().zip(b.labels()).all(|(&x, &y)| {
        *fwd.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x
    })
}

/// Outcome of a k-means run.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult<T> {
    pub labels: LabelVector,
    pub centers: Matrix<T>,
    /// Within-cluster sum of squares after each assignment step.
    pub sse_history: Vec<T>,
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm on the rows of an `n×q` matrix.
///
/// Centers start at `k` distinct samples chosen by the seeded generator. An
/// empty cluster is reseeded at the sample farthest from its current center.
pub fn kmeans_detailed<T: Scalar>(x: &Matrix<T>, k: usize, seed: u64, max_iter: usize) -> Result<KMeansResult<T>> {
    let (n, q) = x.shape();
    if k == 0 || k > n {
        return domain(format!("k = {k} must lie in 1..={n}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = Matrix::zeros(k, q);
    for (c, idx) in sample(&mut rng, n, k).into_iter().enumerate() {
        centers.row_mut(c).copy_from_slice(x.row(idx));
    }
    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        let mut sse = T::zero();
        for i in 0..n {
            let (best, d) = (0..k)
                .map(|c| (c, sq_dist(x.row(i), centers.row(c))))
                .fold((0, T::infinity()), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
            sse = sse + d;
        }
        history.push(sse);
        if !changed {
            break;
        }
        let mut counts = vec![0usize; k];
        let mut sums: Matrix<T> = Matrix::zeros(k, q);
        for i in 0..n {
            counts[labels[i]] += 1;
            for (s, &v) in sums.row_mut(labels[i]).iter_mut().zip(x.row(i)) {
                *s = *s + v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let cnt = T::from_usize_lossy(counts[c]);
                for (dst, &s) in centers.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s / cnt;
                }
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .map(|i| (i, sq_dist(x.row(i), centers.row(labels[i]))))
                    .fold((0, T::neg_infinity()), |acc, cur| if cur.1 > acc.1 { cur } else { acc })
                    .0;
                counts[labels[far]] -= 1;
                counts[c] = 1;
                labels[far] = c;
                centers.row_mut(c).copy_from_slice(x.row(far));
            }
        }
    }
    Ok(KMeansResult { labels: LabelVector::new(labels)?, centers, sse_history: history })
}

pub fn kmeans<T: Scalar>(x: &Matrix<T>, k: usize, seed: u64, max_iter: usize) -> Result<LabelVector> {
    Ok(kmeans_detailed(x, k, seed, max_iter)?.labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lv(v: &[usize]) -> LabelVector {
        LabelVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn rmse_cases() {
        let y = [1.0, -2.0, 3.5];
        assert_eq!(rmse(&y, &y).unwrap(), 0.0);
        let shifted: Vec<f64> = y.iter().map(|v| v + 0.5).collect();
        assert!((rmse(&y, &shifted).unwrap() - 0.5).abs() < 1e-15);
        assert!(rmse(&y, &y[..2]).is_err());
        assert!(rmse::<f64>(&[], &[]).is_err());
    }

    #[test]
    fn hungarian_identity_and_permutation() {
        let neg_eye = Matrix::from_fn(4, 4, |i, j| if i == j { -1.0 } else { 0.0 });
        assert_eq!(hungarian_map(&neg_eye).unwrap(), vec![0, 1, 2, 3]);
        let perm = [2, 0, 3, 1];
        let reward = Matrix::from_fn(4, 4, |i, j| if perm[i] == j { -1.0 } else { 0.0 });
        assert_eq!(hungarian_map(&reward).unwrap(), perm.to_vec());
        assert!(hungarian_map(&Matrix::<f64>::zeros(2, 3)).is_err());
    }

    #[test]
    fn accuracy_and_nmi_trivial_cases() {
        let t = lv(&[0, 0, 1, 1, 2, 2]);
        assert_eq!(clustering_accuracy(&t, &t).unwrap(), 1.0);
        assert!((nmi(&t, &t).unwrap() - 1.0).abs() < 1e-12);
        let renamed = lv(&[2, 2, 0, 0, 1, 1]);
        assert_eq!(clustering_accuracy(&renamed, &t).unwrap(), 1.0);
        assert!((nmi(&renamed, &t).unwrap() - 1.0).abs() < 1e-12);
        assert!(clustering_accuracy(&t, &lv(&[0])).is_err());
    }

    #[test]
    fn nmi_zero_for_product_partition() {
        // pred splits by parity, target by half: every cell has the same count
        let pred = lv(&[0, 1, 0, 1, 0, 1, 0, 1]);
        let target = lv(&[0, 0, 0, 0, 1, 1, 1, 1]);
        assert!(nmi(&pred, &target).unwrap().abs() < 1e-12);
    }

    #[test]
    fn nmi_degenerate_single_cluster() {
        let one = lv(&[0, 0, 0]);
        assert_eq!(nmi(&one, &one).unwrap(), 1.0);
        assert_eq!(nmi(&one, &lv(&[0, 1, 1])).unwrap(), 0.0);
    }

    #[test]
    fn accuracy_with_unequal_class_counts() {
        let pred = lv(&[0, 0, 0, 0]);
        let target = lv(&[0, 1, 2, 2]);
        assert_eq!(clustering_accuracy(&pred, &target).unwrap(), 0.5);
    }

    #[test]
    fn kmeans_trivial_cases() {
        let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![0.1, 0.0], vec![10.0, 10.0], vec![10.0, 10.1]]).unwrap();
        let r = kmeans_detailed(&x, 4, 1, 10).unwrap();
        assert_eq!(*r.sse_history.last().unwrap(), 0.0);
        let mut seen = r.labels.labels().to_vec();
        seen.sort();
        assert_eq!(seen, vec![0, 1, 2, 3]);
        let l = kmeans(&x, 2, 3, 50).unwrap();
        assert_eq!(l.labels()[0], l.labels()[1]);
        assert_eq!(l.labels()[2], l.labels()[3]);
        assert_ne!(l.labels()[0], l.labels()[2]);
        assert!(kmeans(&x, 5, 0, 10).is_err());
    }
}

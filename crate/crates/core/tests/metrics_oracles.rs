use std::collections::HashMap;

use kmpe_core::data::gen_blobs;
use kmpe_core::metrics::{clustering_accuracy, hungarian_map, kmeans, kmeans_detailed, nmi, rmse};
use kmpe_core::{LabelVector, Matrix};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

fn naive_accuracy(pred: &[usize], target: &[usize]) -> f64 {
    let k = pred.iter().chain(target).max().unwrap() + 1;
    let best = permutations(k)
        .into_iter()
        .map(|perm| pred.iter().zip(target).filter(|(&p, &t)| perm[p] == t).count())
        .max()
        .unwrap();
    best as f64 / pred.len() as f64
}

// base-2 entropies and I = H(p) + H(t) − H(p, t); the ratio does not depend on the base
fn naive_nmi(pred: &[usize], target: &[usize]) -> f64 {
    let n = pred.len() as f64;
    let h = |keys: Vec<(usize, usize)>| -> f64 {
        let mut counts: HashMap<(usize, usize), f64> = HashMap::new();
        for key in keys {
            *counts.entry(key).or_default() += 1.0;
        }
        counts.values().map(|c| -(c / n) * (c / n).log2()).sum()
    };
    let hp = h(pred.iter().map(|&p| (p, 0)).collect());
    let ht = h(target.iter().map(|&t| (t, 0)).collect());
    let hj = h(pred.iter().copied().zip(target.iter().copied()).collect());
    (hp + ht - hj) / (hp * ht).sqrt()
}

fn random_labels(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..k)).collect()
}

fn labels(v: &[usize]) -> LabelVector {
    LabelVector::new(v.to_vec()).unwrap()
}

#[test]
fn hungarian_equals_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let perms = permutations(6);
    for _ in 0..200 {
        let cost: Matrix<f64> = Matrix::from_fn(6, 6, |_, _| rng.random_range(0.0..10.0));
        let map = hungarian_map(&cost).unwrap();
        let mut seen = map.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..6).collect::<Vec<_>>());
        let total = |p: &[usize]| (0..6).map(|i| cost[(i, p[i])]).sum::<f64>();
        let best = perms.iter().map(|p| total(p)).fold(f64::INFINITY, f64::min);
        assert!((total(&map) - best).abs() < 1e-12, "{} vs {best}", total(&map));
    }
}

#[test]
fn accuracy_and_nmi_match_naive_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..100 {
        let k = 2 + trial % 4;
        let target = random_labels(&mut rng, 60, k);
        // mostly-correct predictions under a hidden relabeling
        let perm: Vec<usize> = {
            let mut p: Vec<usize> = (0..k).collect();
            p.shuffle(&mut rng);
            p
        };
        let pred: Vec<usize> =
            target.iter().map(|&t| if rng.random_bool(0.7) { perm[t] } else { rng.random_range(0..k) }).collect();
        let acc = clustering_accuracy(&labels(&pred), &labels(&target)).unwrap();
        assert!((acc - naive_accuracy(&pred, &target)).abs() < 1e-10);
        let score = nmi(&labels(&pred), &labels(&target)).unwrap();
        assert!((score - naive_nmi(&pred, &target)).abs() < 1e-10);
    }
}

#[test]
fn scores_ignore_relabeling() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let k = rng.random_range(2..6);
        let pred = random_labels(&mut rng, 40, k);
        let target = random_labels(&mut rng, 40, k);
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut rng);
        let relabeled: Vec<usize> = pred.iter().map(|&p| perm[p]).collect();
        let (a, b) = (labels(&pred), labels(&relabeled));
        let t = labels(&target);
        assert!((clustering_accuracy(&a, &t).unwrap() - clustering_accuracy(&b, &t).unwrap()).abs() < 1e-12);
        assert!((nmi(&a, &t).unwrap() - nmi(&b, &t).unwrap()).abs() < 1e-12);
        assert!((nmi(&a, &t).unwrap() - nmi(&t, &a).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn rmse_of_constant_offset() {
    let y = [1.0, -2.0, 3.5];
    let yhat: Vec<f64> = y.iter().map(|v| v + 0.25).collect();
    assert!((rmse(&y, &yhat).unwrap() - 0.25).abs() < 1e-15);
}

#[test]
fn kmeans_recovers_separated_blobs() {
    let centers = vec![vec![0.0, 0.0], vec![6.0, 0.0], vec![0.0, 6.0]];
    for seed in 0..5 {
        let (x, target) = gen_blobs::<f64>(&centers, 50, 0.7, seed).unwrap();
        let result = kmeans_detailed(&x, 3, seed, 100).unwrap();
        for w in result.sse_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "SSE rose: {} -> {}", w[0], w[1]);
        }
        let acc = clustering_accuracy(&result.labels, &labels(&target)).unwrap();
        assert!(acc > 0.95, "seed {seed}: {acc}");
        assert_eq!(kmeans(&x, 3, seed, 100).unwrap(), result.labels);
    }
}

use kmpe_core::data::{gen_lowrank_corrupted, Corruption};
use kmpe_core::numlin::orthonormality_error;
use kmpe_core::pca::{
    avg_reconstruction_error, fit_kmpe, fit_l2, irls_weights, max_principal_angle, residuals, silverman_bandwidth,
    weighted_mean,
};
use kmpe_core::{Bandwidth, KernelParams, Matrix, PcaConfig, Subspace};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

// Exactly rank-r samples (columns) around a nonzero offset.
fn exact_low_rank(d: usize, n: usize, r: usize, seed: u64) -> Matrix<f64> {
    let u = random(d, r, seed);
    let v = random(r, n, seed + 1).scale(3.0);
    let uv = u.matmul(&v).unwrap();
    Matrix::from_fn(d, n, |i, j| uv[(i, j)] + 0.5 * i as f64)
}

#[test]
fn silverman_on_integer_spread() {
    // s_i = i for i in 0..100; value from an independent statistics package
    let e = Matrix::from_fn(1, 100, |_, j| (j as f64).sqrt());
    let sigma = silverman_bandwidth(&e).unwrap();
    assert!((sigma * sigma - 12.242663963097112).abs() < 1e-10, "{}", sigma * sigma);
}

#[test]
fn silverman_is_homogeneous() {
    let e = random(4, 60, 5);
    let c = 3.7;
    let a = silverman_bandwidth(&e).unwrap();
    let b = silverman_bandwidth(&e.scale(c)).unwrap();
    assert!((b * b - c * c * a * a).abs() < 1e-12 * b * b);
    let flat = Matrix::from_fn(2, 10, |_, _| 1.0);
    assert_eq!(silverman_bandwidth(&flat).unwrap(), 1e-8);
}

#[test]
fn reconstruction_error_matches_direct_sum() {
    let x = random(6, 25, 7);
    let clean = random(6, 25, 8);
    let sub = fit_l2(&x, 2).unwrap();
    let (w, mu) = (sub.basis(), sub.mean());
    let mut total = 0.0;
    for j in 0..25 {
        let c: Vec<f64> = (0..6).map(|i| x[(i, j)] - mu[i]).collect();
        let mut sq = 0.0;
        for i in 0..6 {
            let proj: f64 = (0..2).map(|k| w[(i, k)] * (0..6).map(|q| w[(q, k)] * c[q]).sum::<f64>()).sum();
            sq += (clean[(i, j)] - mu[i] - proj).powi(2);
        }
        total += sq.sqrt();
    }
    let got = avg_reconstruction_error(&sub, &clean, &x).unwrap();
    assert!((got - total / 25.0).abs() < 1e-13);
}

#[test]
fn weights_and_mean_follow_residual_norms() {
    let e = random(3, 8, 9);
    let params = KernelParams::new(0.9, 4.0).unwrap();
    let lam = irls_weights(&e, &params).unwrap();
    for j in 0..8 {
        let s: f64 = (0..3).map(|i| e[(i, j)] * e[(i, j)]).sum();
        let k = (-s / (2.0 * 0.81)).exp();
        assert!((lam.entries()[j] - (1.0 - k) * k).abs() < 1e-15);
    }
    let x = random(3, 8, 10);
    let mu = weighted_mean(&x, &lam).unwrap();
    for (i, &m) in mu.iter().enumerate() {
        let num: f64 = (0..8).map(|j| lam.entries()[j] * x[(i, j)]).sum();
        assert!((m - num / lam.sum()).abs() < 1e-14);
    }
}

#[test]
fn l2_axes_maximize_captured_variance() {
    // the first axis must capture at least as much scatter as any random unit direction
    let x = random(5, 80, 12);
    let sub = fit_l2(&x, 1).unwrap();
    let captured = |dir: &[f64]| -> f64 {
        (0..80)
            .map(|j| (0..5).map(|i| dir[i] * (x[(i, j)] - sub.mean()[i])).sum::<f64>().powi(2))
            .sum()
    };
    let best = captured(&sub.basis().column(0));
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let v: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let u: Vec<f64> = v.iter().map(|a| a / n).collect();
        assert!(captured(&u) <= best * (1.0 + 1e-12));
    }
}

#[test]
fn clean_low_rank_data_gives_the_l2_subspace() {
    let x = exact_low_rank(10, 60, 3, 14);
    let l2 = fit_l2(&x, 3).unwrap();
    for bandwidth in [
        Bandwidth::Silverman { p: 2.0 },
        Bandwidth::Silverman { p: 10.0 },
        Bandwidth::Fixed(KernelParams::new(1.0, 4.0).unwrap()),
    ] {
        let (sub, _) = fit_kmpe(&x, &PcaConfig::new(3, bandwidth)).unwrap();
        let angle = max_principal_angle(sub.basis(), l2.basis()).unwrap();
        assert!(angle < 1e-6, "{bandwidth:?}: angle {angle}");
    }
}

#[test]
fn corrupted_data_favours_the_robust_fit() {
    for (mode, seed) in [(Corruption::Dummy, 1), (Corruption::Occlusion, 2)] {
        let pair = gen_lowrank_corrupted::<f64>(20, 200, 3, 0.2, mode, seed).unwrap();
        let x = pair.corrupted.samples_as_columns();
        let clean = pair.clean.samples_as_columns();
        let l2 = avg_reconstruction_error(&fit_l2(&x, 3).unwrap(), &clean, &x).unwrap();
        let (sub, trace) = fit_kmpe(&x, &PcaConfig::new(3, Bandwidth::Silverman { p: 2.0 })).unwrap();
        let robust = avg_reconstruction_error(&sub, &clean, &x).unwrap();
        assert!(robust < 0.8 * l2, "{mode:?}: {robust} vs {l2}");
        assert!(orthonormality_error(sub.basis()) < 1e-8);
        assert!(!trace.losses.is_empty());
    }
}

#[test]
fn working_dimension_is_truncated() {
    let x = exact_low_rank(8, 40, 3, 15);
    let mut cfg = PcaConfig::new(2, Bandwidth::Silverman { p: 2.0 });
    cfg.m_r = Some(4);
    let (sub, _) = fit_kmpe(&x, &cfg).unwrap();
    assert_eq!(sub.rank(), 2);
    cfg.m_r = Some(1);
    assert!(fit_kmpe(&x, &cfg).is_err());
}

#[test]
fn subspace_file_round_trip() {
    let sub = fit_l2(&random(7, 30, 16), 3).unwrap();
    let kernel = KernelParams::new(1.5, 2.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sub.json");
    sub.save_with_kernel(std::fs::File::create(&path).unwrap(), Some(kernel)).unwrap();
    let (back, k) = Subspace::<f64>::load(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(back, sub);
    assert_eq!(k, Some(kernel));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn residuals_are_orthogonal_to_the_basis(d in 2usize..9, n in 10usize..40, seed in any::<u64>()) {
        let x = random(d, n, seed);
        let m = 1 + (seed as usize) % (d - 1);
        let sub = fit_l2(&x, m).unwrap();
        prop_assert!(orthonormality_error(sub.basis()) < 1e-10);
        let e = residuals(&sub, &x).unwrap();
        prop_assert!(sub.basis().t_matmul(&e).unwrap().max_abs() < 1e-10);
        // projecting a residual again removes nothing
        let shifted = Matrix::from_fn(d, n, |i, j| e[(i, j)] + sub.mean()[i]);
        let again = residuals(&sub, &shifted).unwrap();
        prop_assert!(again.sub(&e).unwrap().max_abs() < 1e-12);
    }
}

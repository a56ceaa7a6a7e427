//! Randomized property suite over the KMPE loss.
//!
//! Each property is checked on `vectors` random error vectors drawn from a
//! generator seeded per property, and summarized by its worst case.

use kmpe_core::kmpe::{
    check_bounds, check_convexity_threshold, check_hessian_fd, check_l0_limit, check_lp_limit, check_mpe_limit,
    check_small_p, check_symmetry,
};
use kmpe_core::{ErrorVector, KernelParams, PropertyCheck, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Worst case of one property over the sampled vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertySummary {
    pub property: &'static str,
    pub vectors: usize,
    pub failures: usize,
    /// The check with the largest error.
    pub worst: PropertyCheck,
}

impl PropertySummary {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

const MAX_LEN: usize = 50;

fn length(rng: &mut ChaCha8Rng) -> usize {
    rng.random_range(1..=MAX_LEN)
}

fn signed(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let m = rng.random_range(lo..=hi);
    if rng.random_bool(0.5) {
        m
    } else {
        -m
    }
}

fn kernel(sigma: f64, p: f64) -> Result<KernelParams<f64>> {
    KernelParams::new(sigma, p)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, b| a.max(b.abs()))
}

type Sampler = fn(&mut ChaCha8Rng, usize) -> Result<PropertyCheck>;

fn symmetry(rng: &mut ChaCha8Rng, _: usize) -> Result<PropertyCheck> {
    let sigma = rng.random_range(0.1..5.0);
    let e: Vec<f64> = (0..length(rng)).map(|_| rng.random_range(-8.0..8.0) * sigma).collect();
    Ok(check_symmetry(&ErrorVector::new(e)?, &kernel(sigma, rng.random_range(0.1..10.0))?))
}

fn bounds(rng: &mut ChaCha8Rng, i: usize) -> Result<PropertyCheck> {
    let sigma = rng.random_range(0.1..5.0);
    let n = length(rng);
    // every 50th vector is all zeros so the equality case is exercised
    let e: Vec<f64> = if i.is_multiple_of(50) {
        vec![0.0; n]
    } else {
        (0..n).map(|_| rng.random_range(-8.0..8.0) * sigma).collect()
    };
    Ok(check_bounds(&ErrorVector::new(e)?, &kernel(sigma, rng.random_range(0.1..10.0))?))
}

fn small_p(rng: &mut ChaCha8Rng, _: usize) -> Result<PropertyCheck> {
    let sigma = rng.random_range(0.1..5.0);
    let e: Vec<f64> = (0..length(rng)).map(|_| signed(rng, 0.5, 4.0) * sigma).collect();
    Ok(check_small_p(&ErrorVector::new(e)?, &kernel(sigma, 1e-4)?))
}

fn mpe_limit(rng: &mut ChaCha8Rng, _: usize) -> Result<PropertyCheck> {
    let e: Vec<f64> = (0..length(rng)).map(|_| signed(rng, 0.01, 10.0)).collect();
    let sigma = 100.0 * max_abs(&e);
    Ok(check_mpe_limit(&ErrorVector::new(e)?, &kernel(sigma, rng.random_range(0.5..8.0))?))
}

fn hessian(rng: &mut ChaCha8Rng, i: usize) -> Result<PropertyCheck> {
    let sigma = rng.random_range(0.5..3.0);
    let p = [2.0, 2.5, 4.0][i % 3];
    let e: Vec<f64> = (0..length(rng)).map(|_| signed(rng, 0.1, 2.0) * sigma).collect();
    Ok(check_hessian_fd(&ErrorVector::new(e)?, &kernel(sigma, p)?))
}

fn convexity(rng: &mut ChaCha8Rng, _: usize) -> Result<PropertyCheck> {
    let sigma = rng.random_range(0.5..3.0);
    let e: Vec<f64> = (0..length(rng)).map(|_| signed(rng, 0.0, 4.0) * sigma).collect();
    check_convexity_threshold(&ErrorVector::new(e)?, sigma)
}

fn lp_limit(rng: &mut ChaCha8Rng, _: usize) -> Result<PropertyCheck> {
    let x: Vec<f64> = (0..length(rng)).map(|_| signed(rng, 0.01, 10.0)).collect();
    let sigma = 1000.0 * max_abs(&x);
    Ok(check_lp_limit(&ErrorVector::new(x)?, &kernel(sigma, rng.random_range(0.5..8.0))?))
}

fn l0_limit(rng: &mut ChaCha8Rng, _: usize) -> Result<PropertyCheck> {
    let x: Vec<f64> =
        (0..length(rng)).map(|_| if rng.random_bool(0.5) { 0.0 } else { signed(rng, 0.5001, 10.0) }).collect();
    Ok(check_l0_limit(&ErrorVector::new(x)?, &kernel(1e-3, rng.random_range(0.5..8.0))?))
}

const SUITE: [(&str, Sampler); 8] = [
    ("P1 symmetry", symmetry),
    ("P2 bounds", bounds),
    ("P3 small-p limit", small_p),
    ("P4 MPE limit", mpe_limit),
    ("P5 Hessian vs finite differences", hessian),
    ("P6 convexity threshold", convexity),
    ("P7 Lp-norm limit", lp_limit),
    ("P8 L0-norm limit", l0_limit),
];

/// Runs all eight property checks on `vectors` random vectors each.
pub fn run_suite(vectors: usize, seed: u64) -> Result<Vec<PropertySummary>> {
    SUITE
        .iter()
        .enumerate()
        .map(|(k, &(property, sampler))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
            let mut failures = 0;
            let mut worst: Option<PropertyCheck> = None;
            for i in 0..vectors {
                let check = sampler(&mut rng, i)?;
                failures += usize::from(!check.passed);
                let worse = match &worst {
                    None => true,
                    Some(w) => !check.passed && w.passed || check.error > w.error,
                };
                if worse {
                    worst = Some(check);
                }
            }
            let worst = worst.expect("at least one vector");
            Ok(PropertySummary { property, vectors, failures, worst })
        })
        .collect()
}

//! Latin hypercube sampling on a box.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` points with exactly one per stratum on every axis.
pub fn lhs_sample(n: usize, bounds: [(f64, f64); 3], seed: u64) -> Vec<[f64; 3]> {
    lhs_with(&mut ChaCha8Rng::seed_from_u64(seed), n, bounds)
}

pub fn lhs_with<R: Rng + ?Sized>(rng: &mut R, n: usize, bounds: [(f64, f64); 3]) -> Vec<[f64; 3]> {
    let mut points = alloc::vec![[0.0; 3]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    for (axis, &(lo, hi)) in bounds.iter().enumerate() {
        strata.shuffle(rng);
        for (p, &s) in points.iter_mut().zip(&strata) {
            let u: f64 = rng.random();
            p[axis] = lo + (hi - lo) * (s as f64 + u) / n as f64;
        }
    }
    points
}

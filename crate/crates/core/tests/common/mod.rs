#![allow(dead_code)]

use biascrowd_core::{LabelDataset, Observation, PropensityMatrix};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random instance: sizes within the given maxima, each cell observed with
/// probability `density`, and every task labeled at least once.
pub fn random_instance(seed: u64, max_workers: usize, max_tasks: usize, max_classes: usize, density: f64) -> LabelDataset {
    let mut r = rng(seed);
    let n = r.random_range(2..=max_workers);
    let m = r.random_range(2..=max_tasks);
    let k = r.random_range(2..=max_classes);
    let truth: Vec<usize> = (0..m).map(|_| r.random_range(0..k)).collect();
    let skill: Vec<f64> = (0..n).map(|_| r.random_range(0.3..0.95)).collect();
    let mut obs = Vec::new();
    for (j, &z) in truth.iter().enumerate() {
        let forced = r.random_range(0..n);
        for (i, &s) in skill.iter().enumerate() {
            if i == forced || r.random_bool(density) {
                let label = if r.random_bool(s) { z } else { r.random_range(0..k) };
                obs.push(Observation { worker: i, task: j, label });
            }
        }
    }
    LabelDataset::new(n, m, k, obs, Some(truth.into_iter().map(Some).collect())).unwrap()
}

/// Random propensities in `[low, 1]`.
pub fn random_propensity(seed: u64, n: usize, m: usize, low: f64) -> PropensityMatrix {
    let mut r = rng(seed ^ 0x9e37_79b9);
    PropensityMatrix::new(DMatrix::from_fn(n, m, |_, _| r.random_range(low..=1.0))).unwrap()
}

pub fn random_matrix(seed: u64, n: usize, m: usize, scale: f64) -> DMatrix<f64> {
    let mut r = rng(seed);
    DMatrix::from_fn(n, m, |_, _| r.random_range(-scale..scale))
}

/// Largest drop between consecutive trace entries (0 if none).
pub fn worst_decrease(trace: &[f64]) -> f64 {
    trace.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
}

/// Largest rise between consecutive trace entries (0 if none).
pub fn worst_increase(trace: &[f64]) -> f64 {
    trace.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

//! Shared inputs for the benchmarks.

use fealm::{build_knn_graph, KnnGraph};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Gaussian points with per-attribute scales `1..=dim`.
pub fn gaussian_points(n: usize, dim: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, dim, |_, j| rng.sample::<f64, _>(StandardNormal) * (1 + j) as f64)
}

pub fn knn_pair(n: usize, k: usize) -> (KnnGraph, KnnGraph) {
    let a = build_knn_graph(&gaussian_points(n, 6, 1), k).expect("valid k");
    let b = build_knn_graph(&gaussian_points(n, 6, 2), k).expect("valid k");
    (a, b)
}

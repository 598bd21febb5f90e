#![allow(dead_code)]

use gausspid::empirical_data::rng;
use gausspid::{BlockLayout, JointCovariance};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// Random layout with the given source count, target and source block
/// dimensions in `1..=max_dim`, and a random covariance for it.
pub fn random_cov(seed: u64, n: usize, max_dim: usize) -> JointCovariance {
    let mut r = rng(seed ^ 0x5eed_0f_1a70u64);
    let t = r.random_range(1..=max_dim);
    let dims = (0..n).map(|_| r.random_range(1..=max_dim)).collect();
    let layout = BlockLayout::new(t, dims).unwrap();
    gausspid::benchmarks::random_system(&layout, r.random()).unwrap()
}

/// Invertible `d × d` matrix `Q·diag(s)` with `Q` orthogonal and
/// `s ∈ [0.1, 10]` log-uniform, so its condition number is at most 100.
pub fn random_transform(d: usize, r: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| r.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    let s = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(d, |_, _| 10f64.powf(r.random_range(-1.0..=1.0))));
    q * s
}

/// Uniformly random permutation of `0..n`.
pub fn random_permutation(n: usize, r: &mut impl Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        p.swap(i, r.random_range(0..=i));
    }
    p
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

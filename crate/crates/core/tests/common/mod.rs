#![allow(dead_code)]

pub mod oracle;

use bcopt_core::linalg::{CMat, C64};
use bcopt_core::problem::{normalize_constraints, random_instance};
use bcopt_core::{ChannelSet, ConstraintSet, WeightVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `M` antennas, `K` users, `dirs` forbidden directions with budget 2.5 and
/// sum power 10.
pub fn instance(seed: u64, m: usize, k: usize, dirs: usize) -> (ChannelSet, ConstraintSet) {
    let (ch, d) = random_instance(seed, m, k, dirs, 2.5).unwrap();
    (ch, normalize_constraints(&d, m, 10.0).unwrap())
}

pub fn random_weights(seed: u64, k: usize) -> WeightVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    WeightVector::new((0..k).map(|_| rng.random_range(0.5..2.0)).collect()).unwrap()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

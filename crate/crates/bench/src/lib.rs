//! Fixed inputs shared by the benchmarks.

use lowdeg_core::marginal::{CollisionRule, MarginalOracle};
use lowdeg_core::unitary::{ginibre, haar_unitary};
use lowdeg_core::{ComplexMatrix, RescaledInputMatrix, RngStream};

pub fn square_gaussian(n: usize, seed: u64) -> ComplexMatrix {
    ginibre(n, n, 1.0, &RngStream::new(seed)).expect("valid size")
}

/// Rescaled input block of a Haar unitary with `M = N²` modes.
pub fn rescaled(n: usize, seed: u64) -> RescaledInputMatrix {
    haar_unitary(n * n, &RngStream::new(seed)).and_then(|u| u.rescaled_rows(n)).expect("valid size")
}

/// `n` distinct modes spread across `[0, N²)`.
pub fn spread_prefix(n: usize) -> Vec<usize> {
    (0..n).map(|i| i * n + i % n).collect()
}

pub fn oracle(n: usize, l: usize, x: f64, seed: u64) -> MarginalOracle {
    MarginalOracle::new(rescaled(n, seed), x, l, CollisionRule::Leftover).expect("valid oracle")
}

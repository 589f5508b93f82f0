//! Shared fixtures for the benchmarks.

use ntg_core::harness::{synth_pair, PairOptions, SyntheticPair};
use ntg_core::AffineParams;

/// Seeded synthetic pair with a mild affine offset.
pub fn pair(side: usize) -> SyntheticPair {
    let truth = AffineParams::new([1.01, 0.005, 2.5, -0.004, 0.99, -1.5]);
    synth_pair(side, side, &truth, &PairOptions { noise_sigma: 0.005, ..PairOptions::default() }, 1).expect("pair")
}

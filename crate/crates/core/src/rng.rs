//! Deterministic seed derivation.
//!
//! Every stochastic component (simulators, surrogates, permutation tests,
//! forests) consumes a seed derived from a master seed and a path of integer
//! tags. Derivation is a counter-free SplitMix64 chain, so any cell of a run
//! can be recomputed in isolation and parallel schedules cannot perturb the
//! stream.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 output function.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `base` and a tag path.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut s = splitmix64(base ^ 0x6a09_e667_f3bc_c909);
    for &p in path {
        s = splitmix64(s ^ splitmix64(p));
    }
    s
}

/// Deterministic RNG for a derived seed.
pub fn rng_from(base: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, path))
}

/// Tags naming the independent random streams of a run.
pub mod stream {
    pub const SIMULATE: u64 = 1;
    pub const SURROGATE: u64 = 2;
    pub const ASSOCIATION: u64 = 4;
    pub const FOREST: u64 = 5;
    pub const JITTER: u64 = 6;
    /// Per-(length, realization) analysis cell of a Monte Carlo run.
    pub const CELL: u64 = 7;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_deterministic() {
        assert_eq!(derive_seed(7, &[1, 2, 3]), derive_seed(7, &[1, 2, 3]));
    }

    #[test]
    fn paths_are_distinguished() {
        let a = derive_seed(7, &[1, 2]);
        let b = derive_seed(7, &[2, 1]);
        let c = derive_seed(7, &[1, 2, 0]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(derive_seed(7, &[]), derive_seed(8, &[]));
    }
}

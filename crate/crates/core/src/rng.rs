//! Seed derivation and the deterministic generator used everywhere.
//!
//! Task seeds are derived from a master seed and a (stream, index) counter with
//! the SplitMix64 finalizer, so results never depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of task `index` in stream `stream` under `master`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
    let a = mix(master.wrapping_add(GOLDEN));
    let b = mix(a ^ stream.wrapping_mul(GOLDEN).wrapping_add(1));
    mix(b ^ index.wrapping_mul(GOLDEN).wrapping_add(2))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Well-known stream identifiers.
pub mod stream {
    pub const START: u64 = 1;
    pub const DYNAMICS: u64 = 2;
    pub const DIAGNOSE: u64 = 3;
    pub const VARIATIONAL: u64 = 4;
    pub const TRIALS: u64 = 5;
    pub const FOLK: u64 = 6;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_stable_and_spread() {
        assert_eq!(derive_seed(7, 1, 3), derive_seed(7, 1, 3));
        assert_ne!(derive_seed(7, 1, 3), derive_seed(7, 1, 4));
        assert_ne!(derive_seed(7, 1, 3), derive_seed(7, 2, 3));
        assert_ne!(derive_seed(7, 1, 3), derive_seed(8, 1, 3));
    }
}

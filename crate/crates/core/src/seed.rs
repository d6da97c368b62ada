//! Deterministic seed derivation.
//!
//! Every random stream in a sweep is keyed by a tuple such as
//! `(global_seed, i, j)` or `(point_seed, run)`. The tuple is folded through
//! SplitMix64 so neighbouring keys land on unrelated streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One SplitMix64 output for the given state.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a key tuple into a single 64-bit seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(parts.len() as u64), |acc, &p| {
        splitmix64(acc ^ splitmix64(p.wrapping_add(acc.rotate_left(17))))
    })
}

/// Platform-independent generator used for every stochastic step.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Domain tags keep seeds for different purposes apart even when the
/// numeric keys coincide.
pub(crate) mod tag {
    pub const RUN: u64 = 0x5255_4E00;
    pub const PROFILE: u64 = 0x5052_4F46;
    pub const VALIDATION: u64 = 0x5641_4C44;
    pub const SPLIT: u64 = 0x5350_4C54;
    pub const MODEL: u64 = 0x4D4F_444C;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // Reference stream for seed 0 from the original SplitMix64 generator:
        // state advances by the golden gamma before each mix.
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(splitmix64(GOLDEN_GAMMA), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn derivation_separates_neighbouring_keys() {
        let a = derive_seed(&[7, 0, 1]);
        let b = derive_seed(&[7, 1, 0]);
        let c = derive_seed(&[7, 0, 1]);
        assert_ne!(a, b);
        assert_eq!(a, c);
        assert_ne!(derive_seed(&[1]), derive_seed(&[1, 0]));
    }
}

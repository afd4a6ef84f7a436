//! Deterministic seed derivation and the crate-wide RNG stream type.
//!
//! All randomness flows through [`Stream`] instances created from explicit
//! 64-bit seeds. Sub-seeds are derived by hashing `(base, domain, index)`
//! with SHA-256, so derivation is stable across platforms and independent of
//! call order elsewhere in the program.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// The RNG stream used throughout the crate.
pub type Stream = ChaCha8Rng;

/// Create a stream from a bare 64-bit seed.
pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive a child seed from `(base, domain, index)`.
///
/// Different domain tags never collide, so independent subsystems can each
/// take their own stream from one global seed.
pub fn derive_seed(base: u64, domain: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    hasher.update(domain.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Stream for a derived `(base, domain, index)` seed.
pub fn derived_stream(base: u64, domain: &str, index: u64) -> Stream {
    stream(derive_seed(base, domain, index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derivation_is_stable() {
        assert_eq!(derive_seed(1, "scene", 0), derive_seed(1, "scene", 0));
        assert_ne!(derive_seed(1, "scene", 0), derive_seed(1, "scene", 1));
        assert_ne!(derive_seed(1, "scene", 0), derive_seed(1, "camera", 0));
        assert_ne!(derive_seed(1, "scene", 0), derive_seed(2, "scene", 0));
    }

    #[test]
    fn streams_replay() {
        let mut s1 = stream(7);
        let mut s2 = stream(7);
        let x: [u64; 4] = [s1.gen(), s1.gen(), s1.gen(), s1.gen()];
        let y: [u64; 4] = [s2.gen(), s2.gen(), s2.gen(), s2.gen()];
        assert_eq!(x, y);
    }
}

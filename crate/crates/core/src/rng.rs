//! Counter-based random substreams.
//!
//! Every realization draws from its own ChaCha8 stream keyed on
//! `(seed, domain)` with the realization index as stream id, so the numbers
//! a realization sees never depend on which worker produced it or in what
//! order realizations were scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Source-plane speckle amplitudes.
pub const DOMAIN_SOURCE: u64 = 0;
/// Shot noise on the first detector.
pub const DOMAIN_NOISE_1: u64 = 1;
/// Shot noise on the second detector.
pub const DOMAIN_NOISE_2: u64 = 2;

const KEY_TAG: &[u8; 16] = b"g2scan substream";

pub fn substream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    key[16..].copy_from_slice(KEY_TAG);
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

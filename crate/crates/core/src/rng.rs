//! Deterministic RNG stream derivation.
//!
//! Everything randomized in this crate draws from ChaCha streams derived from
//! a single master seed plus a stream index, so runs are reproducible under
//! any parallel schedule.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent RNG for (master seed, stream index).
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut z = splitmix64(seed ^ 0xa076_1d64_78bd_642f);
    z = splitmix64(z ^ stream.wrapping_mul(0x2545_f491_4f6c_dd1d));
    let mut bytes = [0u8; 32];
    for chunk in bytes.chunks_mut(8) {
        z = splitmix64(z);
        chunk.copy_from_slice(&z.to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

/// Samples an index from a pmf slice.
pub fn sample_pmf(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let r: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if r < acc {
            return i;
        }
    }
    probs.len() - 1
}

//! Seeded random sub-streams.
//!
//! Every consumer of randomness derives its own ChaCha stream from the
//! master seed and a list of labels, so results do not depend on the order
//! in which independent cells run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes the master seed with the labels into a 64-bit sub-stream key.
pub fn substream_key(master_seed: u64, labels: &[&str]) -> u64 {
    let mut h = splitmix64(master_seed);
    for label in labels {
        for &b in label.as_bytes() {
            h = splitmix64(h ^ u64::from(b));
        }
        // separator so ["ab","c"] != ["a","bc"]
        h = splitmix64(h ^ 0xFF);
    }
    h
}

/// A fresh generator for the sub-stream `(master_seed, labels...)`.
pub fn substream(master_seed: u64, labels: &[&str]) -> StreamRng {
    let key = substream_key(master_seed, labels);
    let mut seed = [0u8; 32];
    let mut k = key;
    for chunk in seed.chunks_mut(8) {
        k = splitmix64(k);
        chunk.copy_from_slice(&k.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

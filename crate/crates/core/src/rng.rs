//! Counter-based random streams.
//!
//! A stream is a ChaCha8 generator whose 256-bit key is fixed by the engine
//! (and, for the walkers, by level and attempt) and whose 64-bit stream id is
//! `seed + index`. Sample `i` of a run seeded with `seed` therefore draws from
//! the same numbers no matter how the samples are split across workers, and
//! runs with disjoint `[seed, seed + n)` ranges use disjoint streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Engine tag mixed into the key, so engines sharing a seed stay independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Engine {
    Loewner = 0x4c4f_4557,
    Diffusion = 0x5344_4546,
    Walker = 0x5741_4c4b,
    Resample = 0x5245_5341,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn key(engine: Engine, sub: u64) -> [u8; 32] {
    let mut k = [0u8; 32];
    let mut h = splitmix64(engine as u64) ^ splitmix64(sub.wrapping_add(0x5eed));
    for chunk in k.chunks_exact_mut(8) {
        h = splitmix64(h);
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    k
}

/// Stream for sample `index` of a run seeded with `seed`.
pub fn stream(engine: Engine, seed: u64, index: u64) -> StreamRng {
    stream_with(engine, 0, seed, index)
}

/// As [`stream`], with an extra key component (level, attempt, ...).
pub fn stream_with(engine: Engine, sub: u64, seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::from_seed(key(engine, sub));
    rng.set_stream(seed.wrapping_add(index));
    rng
}

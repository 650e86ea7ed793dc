//! Seeded generators. Every randomized method draws from ChaCha8 keyed by
//! the user seed, with a distinct stream per purpose so methods sharing a
//! seed do not share draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_KMEANS: u64 = 1;
pub const STREAM_ROUND_ROBIN: u64 = 2;
pub const STREAM_RANDOM: u64 = 3;
pub const STREAM_KCENTER: u64 = 4;

pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

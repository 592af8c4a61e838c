//! Seeded random sources.
//!
//! Every random draw in a session comes from ChaCha8 keyed by the 64-bit
//! session seed. Round `r` reads from ChaCha stream `r`, so its outcomes do not
//! depend on which other rounds ran or in what order. Post-processing draws
//! (the disclosed subset) use [`DISCLOSURE_STREAM`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream reserved for choosing which sifted bits are disclosed.
pub const DISCLOSURE_STREAM: u64 = u64::MAX;

/// Independent random source for `(seed, stream)`.
pub fn substream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

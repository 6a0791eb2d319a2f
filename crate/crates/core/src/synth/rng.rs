//! Counter-based random streams keyed by `(seed, stream, individual index)`.
//!
//! Every individual owns a disjoint window of the ChaCha8 keystream, so draws
//! do not depend on iteration order or on how work is split across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub(crate) enum Stream {
    Attributes = 1,
    RandomEffect = 2,
    Bernoulli = 3,
}

/// 32-bit keystream words reserved per individual (128 `u64` draws).
const WORDS_PER_INDIVIDUAL: u128 = 256;

/// Upper bound on draws any single individual may consume from one stream.
pub(crate) const MAX_DRAWS_PER_INDIVIDUAL: usize = 128;

#[derive(Clone)]
pub(crate) struct StreamKey {
    base: ChaCha8Rng,
}

impl StreamKey {
    pub(crate) fn new(seed: u64, stream: Stream) -> Self {
        let mut base = ChaCha8Rng::seed_from_u64(seed);
        base.set_stream(stream as u64);
        StreamKey { base }
    }

    pub(crate) fn at(&self, index: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_word_pos(index as u128 * WORDS_PER_INDIVIDUAL);
        rng
    }
}

/// Uniform draw on the half-open interval `[0, 1)`.
pub(crate) fn unit(rng: &mut ChaCha8Rng) -> f64 {
    rng.random::<f64>()
}

/// Standard normal draw via Box-Muller; consumes exactly two uniforms.
pub(crate) fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = 1.0 - unit(rng); // (0, 1]
    let u2 = unit(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

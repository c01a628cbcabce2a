//! Deterministic random streams.
//!
//! Every stochastic routine takes an explicit generator. Independent workers
//! get independent ChaCha streams derived from one master seed, so a parallel
//! Monte-Carlo run produces the same numbers as a sequential one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Generator for `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Folds a path of indices (trial number, grid index, ...) into one stream id.
pub fn stream_id(path: &[u64]) -> u64 {
    path.iter()
        .fold(0x243f_6a88_85a3_08d3, |acc, &x| splitmix64(acc ^ splitmix64(x)))
}

/// Generator for a nested stream path, e.g. `[theta_index, repeat, group]`.
pub fn path_rng(seed: u64, path: &[u64]) -> SimRng {
    stream_rng(seed, stream_id(path))
}

/// Draws an index from a discrete distribution. Probabilities need not be
/// normalized exactly; the last nonzero index absorbs rounding.
pub fn categorical<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        last = i;
        if u < p {
            return i;
        }
        u -= p;
    }
    last
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

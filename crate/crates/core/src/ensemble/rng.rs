//! Counter-based random streams keyed by `(master seed, run, stage)`.
//!
//! Each run owns its own ChaCha stream and each stage a fixed window of that
//! stream, so draws do not depend on how runs are scheduled across workers.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// 64-bit words reserved per stage within a run's stream.
const WORDS_PER_STAGE: u128 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamKey {
    pub seed: u64,
    pub run: u64,
    pub stage: u64,
}

/// Uniform draws in `[0, 1)` for one `(seed, run, stage)` key.
pub struct StageStream {
    rng: ChaCha8Rng,
}

impl StageStream {
    pub fn new(key: StreamKey) -> Self {
        let mut bytes = [0u8; 32];
        bytes[..8].copy_from_slice(&key.seed.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(bytes);
        rng.set_stream(key.run);
        // word_pos counts 32-bit words
        rng.set_word_pos(u128::from(key.stage) * WORDS_PER_STAGE * 2);
        Self { rng }
    }

    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Inverse-CDF pick over `weights` in order, with half-open intervals.
///
/// Returns `None` when all weights are zero. Labels with zero weight are
/// never selected.
pub fn pick(weights: impl IntoIterator<Item = f64>, u: f64) -> Option<usize> {
    let mut hi = 0.0;
    let mut last_positive = None;
    for (i, w) in weights.into_iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let lo = hi;
        hi += w;
        last_positive = Some(i);
        if u >= lo && u < hi {
            return Some(i);
        }
    }
    last_positive
}

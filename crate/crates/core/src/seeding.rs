//! Deterministic seed derivation.
//!
//! Every stage of the pipeline draws its randomness from one master seed.
//! Stage seeds are derived with a splitmix64 step so that stages are
//! statistically independent, and per-sample generators use independent
//! ChaCha streams keyed by the sample counter, which makes parallel
//! generation order-independent.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Pipeline stages with a fixed seed-derivation tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Dataset,
    Split,
    Train,
    Design,
}

impl Stage {
    fn tag(self) -> u64 {
        match self {
            Stage::Dataset => 1,
            Stage::Split => 2,
            Stage::Train => 3,
            Stage::Design => 4,
        }
    }
}

/// splitmix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the seed for a pipeline stage from the master seed.
pub fn stage_seed(master_seed: u64, stage: Stage) -> u64 {
    splitmix64(master_seed ^ splitmix64(stage.tag()))
}

/// Independent generator for stream `index` under `seed`.
///
/// Streams with distinct indices never overlap, so work items may be
/// processed in any order (or in parallel) without changing the result.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

//! Deterministic random streams.
//!
//! Replication `r` of a study with master seed `s` draws from the ChaCha8
//! stream `r` of key `s`, so distinct `(s, r)` pairs never share a stream and
//! adding replications leaves earlier ones untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn master_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn replication_rng(seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

/// Independent sub-stream for an auxiliary task within one replication
/// (fold assignment, bootstrap draws) keyed by a small tag.
pub fn auxiliary_rng(seed: u64, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream(tag);
    rng
}

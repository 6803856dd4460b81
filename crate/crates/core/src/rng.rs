//! Counter-based random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 stream whose key
//! is the user seed and whose 64-bit stream id is a hash of a small tuple
//! (domain tag plus indices). Streams are independent of the order in which
//! they are consumed, so results do not depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Gaussian draws for the Monte-Carlo estimators, keyed by chunk index.
pub const TAG_MC: u64 = 0x6d63_5f67_6175_7373;
/// Recovery trials, keyed by (m, s, trial, attempt).
pub const TAG_TRIAL: u64 = 0x7472_6961_6c5f_7631;
/// Random test instances used by the verification suite.
pub const TAG_VERIFY: u64 = 0x7665_7269_6679_5f31;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a key tuple into a stream id.
pub fn stream_id(key: &[u64]) -> u64 {
    key.iter()
        .fold(0x243f_6a88_85a3_08d3, |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

/// Returns the stream for `key` under `seed`.
pub fn stream(seed: u64, key: &[u64]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(key));
    rng
}

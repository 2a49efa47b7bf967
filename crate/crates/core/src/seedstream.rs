//! Deterministic derivation of per-purpose RNG substreams from one master seed.
//!
//! Every stochastic decision in the crate draws from a substream identified by
//! a string label and an index: `substream(seed, "edge_drop", step)`,
//! `substream(seed, "shuffle", epoch)`, and so on. Replaying any step of a run
//! therefore needs only the master seed and the step number — checkpoints do
//! not carry RNG state.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over the label bytes; stable across platforms.
fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// SplitMix64 finalizer; decorrelates nearby (seed, label, index) triples.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derived seed for the substream `(label, index)` of `seed`.
pub fn substream_seed(seed: u64, label: &str, index: u64) -> u64 {
    mix(mix(seed ^ label_hash(label)).wrapping_add(mix(index)))
}

/// Seeded generator for the substream `(label, index)`.
pub fn substream_rng(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream_seed(seed, label, index))
}

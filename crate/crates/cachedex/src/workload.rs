//! Deterministic workload generation: index keys and query streams.
//!
//! Every experiment in this crate is keyed by a single 64-bit seed, and
//! correctness checks routinely compare answer streams produced by different
//! strategies, transports, and even separate OS processes. That only works if
//! key generation is bit-reproducible everywhere, so instead of a library RNG
//! we use a fixed, documented mixing function: **splitmix64** (the 64-bit
//! finalizer with constants `0x9E3779B97F4A7C15`, `0xBF58476D1CE4E5B9`,
//! `0x94D049BB133111EB` and shifts 30/27/31). Any re-implementation in any
//! language reproduces identical streams from the same seed.
//!
//! One user seed yields independent **substreams**: substream 0 drives index
//! construction, substream 1 the query stream. Substream `k` starts from
//! state `seed ^ (k · 0xA0761D6478BD642F)`; the multiplier is odd, so distinct
//! `k` map to distinct starting states.
//!
//! A 32-bit key is the high half of one splitmix64 output (the high bits are
//! the best-mixed).

use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Odd multiplier deriving substream start states from the user seed.
const SUBSTREAM_MULTIPLIER: u64 = 0xA076_1D64_78BD_642F;

/// Substream index for keys that build the index structures.
const INDEX_SUBSTREAM: u64 = 0;
/// Substream index for the query key stream.
const QUERY_SUBSTREAM: u64 = 1;

/// The splitmix64 sequence: a counter stepped by the golden-gamma increment,
/// finalized by two xor-multiply rounds.
///
/// This is the only randomness source in the product code paths.
#[derive(Debug, Clone)]
pub struct Splitmix64 {
    state: u64,
}

impl Splitmix64 {
    /// Starts the sequence at `state`.
    pub fn new(state: u64) -> Self {
        Self { state }
    }

    /// Starts substream `k` of `seed`. Substreams with different `k` have
    /// distinct starting states for every seed.
    pub fn substream(seed: u64, k: u64) -> Self {
        Self::new(seed ^ k.wrapping_mul(SUBSTREAM_MULTIPLIER))
    }

    /// Next 64-bit output.
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Next 32-bit key: the high half of one 64-bit output.
    pub fn next_key(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }
}

/// A reproducible workload: which keys build the index and which keys are
/// looked up.
///
/// The distribution is uniform over the full 32-bit key space. `seed` fully
/// determines both streams; `index_keys` counts *distinct* keys (the index
/// is duplicate-free by construction), while the query stream may repeat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    /// Seed shared by both substreams.
    pub seed: u64,
    /// Number of distinct keys the index is built from.
    pub index_keys: usize,
    /// Number of keys in the query stream.
    pub query_keys: usize,
}

impl WorkloadSpec {
    /// Convenience constructor.
    pub fn new(seed: u64, index_keys: usize, query_keys: usize) -> Self {
        Self { seed, index_keys, query_keys }
    }

    /// Generates exactly `index_keys` *distinct* uniform keys, in first-draw
    /// order (unsorted; the index builder sorts).
    ///
    /// Panics if more distinct keys are requested than the 32-bit key space
    /// holds; that is a configuration error, not a runtime condition.
    pub fn gen_index_keys(&self) -> Vec<u32> {
        assert!(
            (self.index_keys as u128) <= (1u128 << 32),
            "cannot draw {} distinct 32-bit keys",
            self.index_keys
        );
        let mut gen = Splitmix64::substream(self.seed, INDEX_SUBSTREAM);
        let mut seen = HashSet::with_capacity(self.index_keys * 2);
        let mut keys = Vec::with_capacity(self.index_keys);
        while keys.len() < self.index_keys {
            let k = gen.next_key();
            if seen.insert(k) {
                keys.push(k);
            }
        }
        keys
    }

    /// Generates the query stream eagerly. Duplicates are expected and fine.
    pub fn gen_query_keys(&self) -> Vec<u32> {
        self.query_stream().collect()
    }

    /// The query stream as a lazy iterator, for callers that feed a runtime
    /// without materializing the whole stream.
    pub fn query_stream(&self) -> QueryStream {
        QueryStream {
            gen: Splitmix64::substream(self.seed, QUERY_SUBSTREAM),
            remaining: self.query_keys,
        }
    }
}

/// Lazy query-key iterator; see [`WorkloadSpec::query_stream`].
#[derive(Debug, Clone)]
pub struct QueryStream {
    gen: Splitmix64,
    remaining: usize,
}

impl Iterator for QueryStream {
    type Item = u32;

    fn next(&mut self) -> Option<u32> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        Some(self.gen.next_key())
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

impl ExactSizeIterator for QueryStream {}

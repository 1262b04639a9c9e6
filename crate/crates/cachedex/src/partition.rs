//! Range partitioning of an index with a delimiter table for routing.
//!
//! A partitioned deployment splits the sorted index into contiguous key
//! ranges of near-equal size, one per worker node. The master keeps only the
//! small [`DelimiterTable`]: the partition boundary keys plus each
//! partition's starting global rank. Routing a query is a binary search over
//! the boundaries; combining an answer is one addition — because partitions
//! are contiguous ranges, a key's global rank is its local rank within the
//! partition plus the number of keys in all partitions before it.

use crate::index::{Key, SortedIndex};
use thiserror::Error;

/// Errors from partitioning.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum PartitionError {
    /// Zero partitions requested.
    #[error("cannot split an index into zero partitions")]
    ZeroParts,
    /// More partitions than keys: some partition would be empty.
    #[error("cannot split {keys} keys into {parts} non-empty partitions")]
    TooManyParts { parts: usize, keys: usize },
}

/// Partition boundaries and rank offsets: everything a router needs.
///
/// For P partitions the table holds P+1 ascending bounds: a low sentinel, the
/// first key of each partition after the zeroth, and a high sentinel.
/// Partition i covers keys in `[bounds[i], bounds[i+1])`. Bounds are stored
/// one bit wider than keys so the exclusive high sentinel 2³² keeps the
/// sequence strictly ascending even when the top partition starts at the
/// maximum 32-bit key — the final partition is thereby closed on the right.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelimiterTable {
    bounds: Vec<u64>,
    rank_offsets: Vec<u64>,
}

impl DelimiterTable {
    /// The partition whose key range contains `key`.
    pub fn route(&self, key: Key) -> usize {
        let internal = &self.bounds[1..self.bounds.len() - 1];
        internal.partition_point(|&b| b <= key as u64)
    }

    /// Number of partitions routed over.
    pub fn partition_count(&self) -> usize {
        self.rank_offsets.len()
    }

    /// Global rank of the first key of partition `id`; equivalently, the
    /// total key count of all partitions before it.
    pub fn rank_offset(&self, id: usize) -> u64 {
        self.rank_offsets[id]
    }

    /// All P+1 bounds, low sentinel first.
    pub fn bounds(&self) -> &[u64] {
        &self.bounds
    }
}

/// One contiguous key range of the index, destined for one worker.
#[derive(Debug, Clone)]
pub struct Partition {
    id: usize,
    index: SortedIndex,
    rank_offset: u64,
}

impl Partition {
    /// Partition ordinal (also its position in the delimiter table).
    pub fn id(&self) -> usize {
        self.id
    }

    /// The partition's own sorted index.
    pub fn index(&self) -> &SortedIndex {
        &self.index
    }

    /// Global rank of this partition's first key.
    pub fn rank_offset(&self) -> u64 {
        self.rank_offset
    }

    /// Global rank of `key` using only this partition's data — valid when
    /// the delimiter table routed `key` here.
    pub fn global_rank(&self, key: Key) -> u64 {
        self.rank_offset + self.index.rank(key)
    }

    /// Consumes the partition, yielding its index and rank offset (for
    /// handing the data to a worker).
    pub fn into_parts(self) -> (usize, SortedIndex, u64) {
        (self.id, self.index, self.rank_offset)
    }
}

/// Splits an index into `parts` contiguous partitions whose sizes differ by
/// at most one key, together with the routing table.
pub fn partition_index(
    index: &SortedIndex,
    parts: usize,
) -> Result<(DelimiterTable, Vec<Partition>), PartitionError> {
    if parts == 0 {
        return Err(PartitionError::ZeroParts);
    }
    let m = index.len();
    if parts > m {
        return Err(PartitionError::TooManyParts { parts, keys: m });
    }

    let base = m / parts;
    let remainder = m % parts;
    let mut bounds = Vec::with_capacity(parts + 1);
    let mut rank_offsets = Vec::with_capacity(parts);
    let mut partitions = Vec::with_capacity(parts);
    bounds.push(0u64);

    let mut start = 0usize;
    for id in 0..parts {
        let len = base + usize::from(id < remainder);
        let slice = &index.keys()[start..start + len];
        if id > 0 {
            bounds.push(slice[0] as u64);
        }
        rank_offsets.push(start as u64);
        partitions.push(Partition {
            id,
            index: SortedIndex::from_sorted_unchecked(slice.to_vec()),
            rank_offset: start as u64,
        });
        start += len;
    }
    bounds.push(1u64 << 32);

    Ok((DelimiterTable { bounds, rank_offsets }, partitions))
}

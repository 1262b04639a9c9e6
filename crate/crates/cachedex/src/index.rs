//! The sorted key index: source of truth for every lookup strategy.
//!
//! A [`SortedIndex`] is a strictly ascending, duplicate-free array of 32-bit
//! keys. The canonical answer to a lookup is the key's **rank**: the number
//! of index keys ≤ the query key, so a query below the minimum answers 0 and
//! a query at or above the maximum answers the full key count. Rank is
//! payload-agnostic — any satellite data can be attached externally by rank —
//! and it makes answers from different strategies directly comparable.
//!
//! # Snapshot file
//!
//! To share one index across processes (e.g. the multi-process TCP cluster),
//! the index serializes to a small binary snapshot:
//!
//! ```text
//! +---------+----------+-------------+----------------------+
//! | "CSIX"  | version  | key count   | keys                 |
//! | 4 bytes | u16 LE   | u64 LE      | count × u32 LE, asc. |
//! +---------+----------+-------------+----------------------+
//! ```
//!
//! The reader validates magic, version, count, and strict key order, so a
//! corrupt or truncated snapshot fails loudly rather than producing wrong
//! ranks.

use std::io::{self, Read, Write};
use thiserror::Error;

/// A search key. The whole pipeline — trees, wire frames, snapshots — is
/// built around 4-byte unsigned keys ordered by unsigned comparison.
pub type Key = u32;

/// Snapshot file magic: "CSIX".
const SNAPSHOT_MAGIC: [u8; 4] = *b"CSIX";
/// Current (and only) snapshot format version.
const SNAPSHOT_VERSION: u16 = 1;

/// Errors from building a [`SortedIndex`].
#[derive(Debug, Error, PartialEq, Eq)]
pub enum BuildError {
    /// The raw key set was empty; an index must hold at least one key.
    #[error("cannot build an index from zero keys")]
    EmptyInput,
}

/// Errors from reading a snapshot file.
#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("I/O error reading snapshot: {0}")]
    Io(#[from] io::Error),

    #[error("bad snapshot magic {found:02x?} (expected {SNAPSHOT_MAGIC:02x?})")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported snapshot version {found} (expected {SNAPSHOT_VERSION})")]
    UnsupportedVersion { found: u16 },

    #[error("snapshot declares zero keys")]
    Empty,

    #[error("snapshot key order violated at position {position}: {prev} >= {next}")]
    KeyOrder { position: u64, prev: Key, next: Key },

    #[error("snapshot declares {declared} keys but the stream ended after {read}")]
    Truncated { declared: u64, read: u64 },
}

/// The immutable global sorted key array.
///
/// Invariants, enforced at construction and on snapshot load:
/// - keys strictly ascending (duplicates removed at build);
/// - non-empty.
///
/// The structure is immutable after build and safe to share read-only across
/// threads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SortedIndex {
    keys: Vec<Key>,
}

impl SortedIndex {
    /// Builds the index from raw keys: sort, deduplicate, validate.
    ///
    /// Returns the index together with the number of duplicate keys removed.
    pub fn build(raw_keys: &[Key]) -> Result<(Self, usize), BuildError> {
        if raw_keys.is_empty() {
            return Err(BuildError::EmptyInput);
        }
        let mut keys = raw_keys.to_vec();
        keys.sort_unstable();
        let before = keys.len();
        keys.dedup();
        let removed = before - keys.len();
        Ok((Self { keys }, removed))
    }

    /// Wraps keys that are already strictly ascending and non-empty.
    ///
    /// Used by partitioning, which slices an existing index and must not pay
    /// for a re-sort. Panics (debug) if the invariant does not hold.
    pub(crate) fn from_sorted_unchecked(keys: Vec<Key>) -> Self {
        debug_assert!(!keys.is_empty());
        debug_assert!(keys.windows(2).all(|w| w[0] < w[1]));
        Self { keys }
    }

    /// The keys, strictly ascending.
    pub fn keys(&self) -> &[Key] {
        &self.keys
    }

    /// Number of keys (always ≥ 1).
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    /// An index is never empty; this exists for clippy-idiomatic callers.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Smallest key.
    pub fn min_key(&self) -> Key {
        self.keys[0]
    }

    /// Largest key.
    pub fn max_key(&self) -> Key {
        *self.keys.last().expect("index is never empty")
    }

    /// Rank by binary search: the number of keys ≤ `key`, in at most
    /// ⌈log2(len + 1)⌉ comparisons.
    pub fn rank(&self, key: Key) -> u64 {
        self.keys.partition_point(|&k| k <= key) as u64
    }

    /// Ranks for a whole query slice via one linear scan of the index.
    ///
    /// This is the crate's reference evaluator: it sorts the queries (keeping
    /// original positions) and walks index and queries together in a single
    /// merge pass, so the cost is one scan of the index plus `q log q` for
    /// the sort — independent of how many strategies it is checking. The
    /// experiment harness uses it to verify a sample of every timed run
    /// before trusting the clock.
    pub fn scan_ranks(&self, queries: &[Key]) -> Vec<u64> {
        let mut order: Vec<u32> = (0..queries.len() as u32).collect();
        order.sort_unstable_by_key(|&i| queries[i as usize]);

        let mut ranks = vec![0u64; queries.len()];
        let mut covered = 0usize; // index keys known to be <= current query
        for &qi in &order {
            let q = queries[qi as usize];
            while covered < self.keys.len() && self.keys[covered] <= q {
                covered += 1;
            }
            ranks[qi as usize] = covered as u64;
        }
        ranks
    }

    /// Writes the snapshot format described in the module docs.
    pub fn write_snapshot(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(&SNAPSHOT_MAGIC)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        w.write_all(&(self.keys.len() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(4096);
        for chunk in self.keys.chunks(1024) {
            buf.clear();
            for &k in chunk {
                buf.extend_from_slice(&k.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    /// Reads and validates a snapshot.
    pub fn read_snapshot(r: &mut impl Read) -> Result<Self, SnapshotError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != SNAPSHOT_MAGIC {
            return Err(SnapshotError::BadMagic { found: magic });
        }
        let mut v = [0u8; 2];
        r.read_exact(&mut v)?;
        let version = u16::from_le_bytes(v);
        if version != SNAPSHOT_VERSION {
            return Err(SnapshotError::UnsupportedVersion { found: version });
        }
        let mut c = [0u8; 8];
        r.read_exact(&mut c)?;
        let count = u64::from_le_bytes(c);
        if count == 0 {
            return Err(SnapshotError::Empty);
        }

        let mut keys = Vec::with_capacity(count.min(1 << 28) as usize);
        let mut kb = [0u8; 4];
        for i in 0..count {
            if let Err(e) = r.read_exact(&mut kb) {
                if e.kind() == io::ErrorKind::UnexpectedEof {
                    return Err(SnapshotError::Truncated { declared: count, read: i });
                }
                return Err(SnapshotError::Io(e));
            }
            let key = u32::from_le_bytes(kb);
            if let Some(&prev) = keys.last() {
                if prev >= key {
                    return Err(SnapshotError::KeyOrder { position: i, prev, next: key });
                }
            }
            keys.push(key);
        }
        Ok(Self { keys })
    }
}

//! Uniform lookup driver over the five strategy kernels.
//!
//! | kind | structure            | deployment            | kernel                      |
//! |------|----------------------|------------------------|-----------------------------|
//! | a    | n-ary tree           | one node, whole index  | one-at-a-time descent       |
//! | b    | buffered tree        | one node, whole index  | buffered batch traversal    |
//! | c1   | n-ary tree           | one partition per node | one-at-a-time descent       |
//! | c2   | buffered tree (L1)   | one partition per node | buffered batch traversal    |
//! | c3   | sorted array         | one partition per node | binary search               |
//!
//! An engine owns one structure plus the partition's global rank offset
//! (zero for whole-index deployments), so every engine answers in *global*
//! ranks and the caller never needs to know which kind it holds. All five
//! kinds are pure functions of their input after construction; engines are
//! freely shareable across threads.

use crate::buffered::{BufferError, BufferedTree};
use crate::index::{Key, SortedIndex};
use crate::partition::Partition;
use crate::tree::{LayoutVariant, NaryTree, NodeLayout, TreeError};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// A batch of query keys. Order is significant: `ResultBatch.ranks[j]`
/// answers `keys[j]`, whatever reordering happens internally.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryBatch {
    /// Caller-chosen id, echoed in the result batch.
    pub batch_id: u32,
    /// Query keys; must be non-empty.
    pub keys: Vec<Key>,
}

/// Global ranks answering one [`QueryBatch`], in query order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResultBatch {
    /// The id of the batch these ranks answer.
    pub batch_id: u32,
    /// `ranks[j]` = number of index keys ≤ `keys[j]`, plus the engine's
    /// rank offset.
    pub ranks: Vec<u64>,
}

/// The five lookup strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    /// Whole-index n-ary tree, one descent per query.
    A,
    /// Whole-index buffered tree sized to the outer cache, batch traversal.
    B,
    /// Partitioned n-ary tree, one descent per query.
    C1,
    /// Partitioned buffered tree sized to half the inner cache.
    C2,
    /// Partitioned sorted array, binary search.
    C3,
}

impl EngineKind {
    /// All kinds, in presentation order.
    pub const ALL: [EngineKind; 5] =
        [EngineKind::A, EngineKind::B, EngineKind::C1, EngineKind::C2, EngineKind::C3];

    /// True for the kinds deployed one-partition-per-worker.
    pub fn is_partitioned(self) -> bool {
        matches!(self, EngineKind::C1 | EngineKind::C2 | EngineKind::C3)
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EngineKind::A => "a",
            EngineKind::B => "b",
            EngineKind::C1 => "c1",
            EngineKind::C2 => "c2",
            EngineKind::C3 => "c3",
        };
        f.write_str(s)
    }
}

impl FromStr for EngineKind {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "a" | "a-tree" => Ok(EngineKind::A),
            "b" | "b-buffered" => Ok(EngineKind::B),
            "c1" | "c-1" | "c1-tree" => Ok(EngineKind::C1),
            "c2" | "c-2" | "c2-buffered-l1" => Ok(EngineKind::C2),
            "c3" | "c-3" | "c3-binary" => Ok(EngineKind::C3),
            other => Err(EngineError::UnknownKind(other.to_string())),
        }
    }
}

/// Errors from building or driving an engine.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("engine kind {0:?} is not one of a, b, c1, c2, c3")]
    UnknownKind(String),
    #[error("a query batch must contain at least one key")]
    EmptyBatch,
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Buffer(#[from] BufferError),
}

/// Construction parameters for an engine.
///
/// [`EngineSpec::for_kind`] fills the defaults that mirror the reference
/// machine: tree strategies over the whole index use 64-byte
/// keys-plus-pointers nodes (two 32-byte cache lines); partitioned tree
/// strategies use 32-byte single-pointer nodes (one line). The buffered
/// strategies size their subtrees to the outer cache (512 KiB) and to half
/// the 16 KiB inner cache respectively.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EngineSpec {
    pub kind: EngineKind,
    /// Bytes per tree node (ignored by c3).
    pub node_bytes: usize,
    /// Node layout variant (ignored by c3).
    pub variant: LayoutVariant,
    /// Subtree cache budget for the buffered kinds (ignored by others).
    pub cache_budget_bytes: usize,
    /// Per-buffer key capacity for the buffered kinds; None derives
    /// 4 × expected_batch_keys / subtree_count.
    pub buffer_capacity: Option<usize>,
    /// Expected keys per batch, used only to derive the buffer capacity.
    pub expected_batch_keys: usize,
}

impl EngineSpec {
    /// The reference configuration for a strategy kind.
    pub fn for_kind(kind: EngineKind) -> Self {
        let (node_bytes, variant, cache_budget_bytes) = match kind {
            EngineKind::A | EngineKind::B => {
                (64, LayoutVariant::KeysPlusChildPointers, 512 * 1024)
            }
            EngineKind::C1 | EngineKind::C2 | EngineKind::C3 => {
                (32, LayoutVariant::SingleChildPointer, 8 * 1024)
            }
        };
        Self {
            kind,
            node_bytes,
            variant,
            cache_budget_bytes,
            buffer_capacity: None,
            expected_batch_keys: 32 * 1024,
        }
    }

    /// The node layout this spec describes.
    pub fn layout(&self) -> NodeLayout {
        NodeLayout { node_bytes: self.node_bytes, key_bytes: 4, variant: self.variant }
    }
}

/// The structure an engine searches.
#[derive(Debug, Clone)]
enum Structure {
    Tree(NaryTree),
    Buffered(BufferedTree),
    Array(SortedIndex),
}

/// One lookup strategy bound to one structure and rank offset.
#[derive(Debug, Clone)]
pub struct LookupEngine {
    kind: EngineKind,
    structure: Structure,
    rank_offset: u64,
}

impl LookupEngine {
    /// Builds an engine of `spec.kind` over `index`, answering with
    /// `rank_offset` added (pass 0 for a whole-index deployment).
    pub fn build(
        index: &SortedIndex,
        rank_offset: u64,
        spec: &EngineSpec,
    ) -> Result<Self, EngineError> {
        let structure = match spec.kind {
            EngineKind::A | EngineKind::C1 => {
                Structure::Tree(NaryTree::build(index, spec.layout())?)
            }
            EngineKind::B | EngineKind::C2 => {
                let tree = NaryTree::build(index, spec.layout())?;
                let buffered = BufferedTree::build(tree, spec.cache_budget_bytes, 0)?;
                let capacity = spec.buffer_capacity.unwrap_or_else(|| {
                    match buffered.subtree_count() {
                        0 => 0,
                        n => (spec.expected_batch_keys as u64 * 4 / n).max(16) as usize,
                    }
                });
                Structure::Buffered(buffered.with_buffer_capacity(capacity))
            }
            EngineKind::C3 => Structure::Array(index.clone()),
        };
        Ok(Self { kind: spec.kind, structure, rank_offset })
    }

    /// Builds the reference-configured engine for a whole index.
    pub fn for_index(kind: EngineKind, index: &SortedIndex) -> Result<Self, EngineError> {
        Self::build(index, 0, &EngineSpec::for_kind(kind))
    }

    /// Builds the reference-configured engine for one partition, wiring in
    /// its rank offset.
    pub fn for_partition(kind: EngineKind, part: &Partition) -> Result<Self, EngineError> {
        Self::build(part.index(), part.rank_offset(), &EngineSpec::for_kind(kind))
    }

    /// The strategy this engine implements.
    pub fn kind(&self) -> EngineKind {
        self.kind
    }

    /// The global rank of this engine's first key.
    pub fn rank_offset(&self) -> u64 {
        self.rank_offset
    }

    /// Keys in this engine's structure.
    pub fn key_count(&self) -> u64 {
        match &self.structure {
            Structure::Tree(t) => t.key_count(),
            Structure::Buffered(b) => b.tree().key_count(),
            Structure::Array(a) => a.len() as u64,
        }
    }

    /// Bytes the structure occupies (key payload only for the array).
    pub fn structure_bytes(&self) -> u64 {
        match &self.structure {
            Structure::Tree(t) => t.tree_bytes(),
            Structure::Buffered(b) => b.tree().tree_bytes(),
            Structure::Array(a) => a.len() as u64 * 4,
        }
    }

    /// Global rank of one key: rank offset + count of structure keys ≤ key.
    pub fn lookup_one(&self, key: Key) -> u64 {
        let local = match &self.structure {
            Structure::Tree(t) => t.rank(key),
            // Answering single keys through a buffered tree descends its
            // underlying tree directly; buffering exists for batches.
            Structure::Buffered(b) => b.tree().rank(key),
            Structure::Array(a) => a.rank(key),
        };
        self.rank_offset + local
    }

    /// Answers a whole batch with the kind-appropriate kernel. Ranks come
    /// back in query order regardless of internal routing.
    pub fn lookup_batch(&self, batch: &QueryBatch) -> Result<ResultBatch, EngineError> {
        if batch.keys.is_empty() {
            return Err(EngineError::EmptyBatch);
        }
        match &self.structure {
            Structure::Buffered(b) => {
                let mut out = b.lookup_batch(batch);
                if self.rank_offset != 0 {
                    for r in &mut out.ranks {
                        *r += self.rank_offset;
                    }
                }
                Ok(out)
            }
            _ => Ok(ResultBatch {
                batch_id: batch.batch_id,
                ranks: batch.keys.iter().map(|&k| self.lookup_one(k)).collect(),
            }),
        }
    }

    /// Order-sensitive checksum of the structure's keys; lookups must never
    /// change it.
    pub fn key_checksum(&self) -> u64 {
        let fold = |acc: u64, k: Key| acc.wrapping_mul(0x100000001B3).wrapping_add(k as u64);
        match &self.structure {
            Structure::Tree(t) => t.iter_keys().fold(0, fold),
            Structure::Buffered(b) => b.tree().iter_keys().fold(0, fold),
            Structure::Array(a) => a.keys().iter().copied().fold(0, fold),
        }
    }
}

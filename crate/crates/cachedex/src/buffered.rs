//! Buffered batch traversal: the cache-resident-subtree lookup strategy.
//!
//! A deep tree thrashes the cache when queries are answered one at a time:
//! every descent touches T nodes scattered over megabytes. The buffered
//! strategy decomposes the tree logically into layers of subtrees, each small
//! enough to fit the configured cache budget, and answers a whole batch of
//! queries layer by layer: one pass over the root subtree routes every key
//! into the buffer of the subtree it descends into; then each subtree with a
//! non-empty buffer is processed the same way, recursively, until the bottom
//! layer yields the ranks. Each subtree is loaded into cache once per batch
//! instead of once per query, so the per-query miss count drops from one miss
//! per level to roughly one miss per *layer*.
//!
//! The decomposition is purely logical — no nodes are copied. A subtree of
//! the layer rooted at node `n` is just the node-index range `n·F^j ..
//! (n+1)·F^j` at each of its levels, and the routing buffers carry
//! `(key, original position, partial descent state)` entries so the result
//! batch comes back in input order.
//!
//! Buffers are per-invocation state: a lookup allocates its own, so one
//! `BufferedTree` can serve concurrent batch lookups from multiple workers.

use crate::engine::{QueryBatch, ResultBatch};
use crate::index::Key;
use crate::tree::{DescentCursor, NaryTree};
use thiserror::Error;

/// Errors from building a buffered tree.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum BufferError {
    /// The cache budget cannot hold even a single tree node.
    #[error("cache budget of {budget} bytes is below the {node_bytes}-byte node size")]
    BudgetBelowNode { budget: usize, node_bytes: usize },
}

/// Counters from one buffered batch lookup.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BufferStats {
    /// Subtree-processing passes: one root pass plus one per subtree whose
    /// buffer received at least one key.
    pub passes: u64,
    /// Passes excluding the root pass.
    pub subtree_passes: u64,
    /// Entries pushed through buffers, summed over all layer boundaries.
    pub buffered_keys: u64,
    /// Buffers that outgrew the configured per-buffer capacity. Overflow
    /// spills to a larger allocation — keys are never dropped — so this
    /// only signals that the capacity hint was undersized.
    pub spilled_buffers: u64,
}

/// A search tree decomposed into cache-budget-sized subtree layers, plus the
/// routing machinery for batch traversal.
#[derive(Debug, Clone)]
pub struct BufferedTree {
    tree: NaryTree,
    /// Levels per full (non-root) subtree: the maximal depth whose complete
    /// subtree fits the cache budget.
    subtree_levels: u32,
    /// The byte budget each subtree must fit.
    cache_budget_bytes: usize,
    /// Per-buffer key capacity hint; exceeding it counts as a spill.
    buffer_capacity: usize,
    /// Inclusive (first, last) tree levels of each layer, root layer first.
    /// A single entry means the whole tree fits one subtree and lookups need
    /// no buffering at all.
    layers: Vec<(u32, u32)>,
}

impl BufferedTree {
    /// Decomposes `tree` into subtrees of at most `cache_budget_bytes` each.
    ///
    /// The subtree depth k is maximal subject to the budget: a complete
    /// k-level subtree (the worst case among the fragments) must fit. The
    /// root layer takes the T mod k remainder levels so every lower subtree
    /// is full depth. A tree that already fits the budget whole stays a
    /// single subtree with no buffers.
    ///
    /// `buffer_capacity` is the per-buffer key capacity hint (buffers beyond
    /// it spill to larger allocations and are counted in the stats).
    pub fn build(
        tree: NaryTree,
        cache_budget_bytes: usize,
        buffer_capacity: usize,
    ) -> Result<Self, BufferError> {
        let node_bytes = tree.layout().node_bytes;
        if cache_budget_bytes < node_bytes {
            return Err(BufferError::BudgetBelowNode {
                budget: cache_budget_bytes,
                node_bytes,
            });
        }
        let t = tree.levels();
        let f = tree.fanout() as u128;

        // Deepest k whose complete subtree — (F^k − 1)/(F − 1) nodes — fits.
        let mut k = 1u32;
        while k < t {
            let nodes = (f.pow(k + 1) - 1) / (f - 1);
            if nodes * node_bytes as u128 > cache_budget_bytes as u128 {
                break;
            }
            k += 1;
        }

        let layers = if tree.tree_bytes() <= cache_budget_bytes as u64 || k >= t {
            vec![(1, t)]
        } else {
            let count = t.div_ceil(k);
            let root_levels = t - k * (count - 1);
            let mut bounds = Vec::with_capacity(count as usize);
            let mut first = 1;
            bounds.push((first, root_levels));
            first = root_levels + 1;
            while first <= t {
                bounds.push((first, first + k - 1));
                first += k;
            }
            bounds
        };

        Ok(Self {
            tree,
            subtree_levels: k,
            cache_budget_bytes,
            buffer_capacity,
            layers,
        })
    }

    /// Replaces the per-buffer capacity hint (useful once the batch size the
    /// tree will serve is known).
    pub fn with_buffer_capacity(mut self, buffer_capacity: usize) -> Self {
        self.buffer_capacity = buffer_capacity;
        self
    }

    /// Answers a batch; equivalent to ranking each key independently, with
    /// results in input order.
    pub fn lookup_batch(&self, batch: &QueryBatch) -> ResultBatch {
        self.lookup_batch_with_stats(batch).0
    }

    /// [`lookup_batch`](Self::lookup_batch) plus traversal counters.
    pub fn lookup_batch_with_stats(&self, batch: &QueryBatch) -> (ResultBatch, BufferStats) {
        assert!(
            batch.keys.len() <= u32::MAX as usize,
            "batch exceeds the 32-bit position tag"
        );
        let mut stats = BufferStats::default();
        let mut ranks = vec![0u64; batch.keys.len()];

        // Buffer entry: key, original batch position, descent state so far.
        struct Entry {
            key: Key,
            pos: u32,
            cursor: DescentCursor,
        }

        // Pending work, one group per subtree pass: the root layer gets the
        // whole batch as a single group; each later layer gets the buffers
        // the previous layer filled, in subtree order.
        let mut groups: Vec<Vec<Entry>> = vec![batch
            .keys
            .iter()
            .enumerate()
            .map(|(pos, &key)| Entry { key, pos: pos as u32, cursor: DescentCursor::root() })
            .collect()];

        let last_layer = self.layers.len() - 1;
        for (layer_idx, &(first, last)) in self.layers.iter().enumerate() {
            let is_last = layer_idx == last_layer;
            // Buffers for the next boundary, indexed by subtree root node.
            // Allocated empty; a buffer reserves the capacity hint when it
            // receives its first key.
            let mut buffers: Vec<Vec<Entry>> = if is_last {
                Vec::new()
            } else {
                let reachable = self.tree.reachable_nodes_at_level(last + 1);
                (0..reachable).map(|_| Vec::new()).collect()
            };

            for group in std::mem::take(&mut groups) {
                if group.is_empty() {
                    continue;
                }
                stats.passes += 1;
                if layer_idx > 0 {
                    stats.subtree_passes += 1;
                }
                for mut entry in group {
                    entry.cursor =
                        self.tree.descend_levels(entry.key, entry.cursor, first, last);
                    if is_last || entry.cursor.done {
                        ranks[entry.pos as usize] = self.tree.finish_rank(&entry.cursor);
                    } else {
                        debug_assert!((entry.cursor.node as usize) < buffers.len());
                        let buf = &mut buffers[entry.cursor.node as usize];
                        if buf.capacity() == 0 {
                            buf.reserve(self.buffer_capacity);
                        }
                        buf.push(entry);
                        stats.buffered_keys += 1;
                    }
                }
            }

            stats.spilled_buffers += buffers
                .iter()
                .filter(|b| b.len() > self.buffer_capacity)
                .count() as u64;
            groups = buffers;
        }

        (ResultBatch { batch_id: batch.batch_id, ranks }, stats)
    }

    /// The underlying search tree.
    pub fn tree(&self) -> &NaryTree {
        &self.tree
    }

    /// Levels per full non-root subtree (k).
    pub fn subtree_levels(&self) -> u32 {
        self.subtree_levels
    }

    /// Levels in the root subtree.
    pub fn root_levels(&self) -> u32 {
        self.layers[0].1
    }

    /// Number of subtree layers; 1 means the tree fits the budget whole.
    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    /// Inclusive (first, last) tree levels per layer, root layer first.
    pub fn layer_bounds(&self) -> &[(u32, u32)] {
        &self.layers
    }

    /// Subtrees below the root subtree (reachable ones at the first layer
    /// boundary); 0 when the tree is a single subtree.
    pub fn subtree_count(&self) -> u64 {
        if self.layers.len() == 1 {
            0
        } else {
            self.tree.reachable_nodes_at_level(self.layers[0].1 + 1)
        }
    }

    /// Bytes of a complete (fully populated) non-root subtree — the size the
    /// budget check is made against.
    pub fn full_subtree_bytes(&self) -> u64 {
        let f = self.tree.fanout() as u64;
        let nodes = (f.pow(self.subtree_levels) - 1) / (f - 1);
        nodes * self.tree.layout().node_bytes as u64
    }

    /// The configured cache budget.
    pub fn cache_budget_bytes(&self) -> usize {
        self.cache_budget_bytes
    }

    /// The per-buffer key capacity hint.
    pub fn buffer_capacity(&self) -> usize {
        self.buffer_capacity
    }
}

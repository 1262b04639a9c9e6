//! Cache-line-node n-ary search tree with implicit child addressing.
//!
//! The tree packs K keys per fixed-size node so one node fills a whole number
//! of cache lines, and it lays the nodes of each level out contiguously with
//! all children of a node adjacent. That adjacency is what lets a node get by
//! with a single child pointer — and in this implementation the pointer
//! disappears entirely: a node's child block address is arithmetic on its own
//! index (`child = node * fanout + branch`), so no pointers are materialized
//! at all. The configured [`NodeLayout`] still accounts for pointer slots in
//! the byte model, because tree size in cache lines is an input to the
//! analytical cost model and must reflect the layout being modeled.
//!
//! # Shape and fill
//!
//! Conceptually the tree is a *perfect* (K+1)-ary search tree of T levels,
//! the minimal T whose (K+1)^T − 1 key slots hold all M keys. Keys fill the
//! slots in symmetric (in-order) order; the unused trailing slots hold the
//! maximum 32-bit value as a sentinel, so comparison loops need no length
//! checks. Whole nodes whose every slot is a sentinel are not materialized:
//! per level only the leading nodes that contain at least one real key are
//! stored, and the descent treats any node index beyond that as an implicit
//! all-sentinel node. A descent that enters a subtree lying entirely past the
//! last real key can stop immediately: reaching it means the query is ≥ the
//! maximum key, so the answer is the full key count.
//!
//! # Rank semantics
//!
//! `rank(q)` = number of index keys ≤ q. At each level the descent counts the
//! node keys ≤ q (call it b), accumulates `b * (K+1)^(T-i)` — the b passed
//! keys plus their left subtrees — and steps into child b. After T levels the
//! accumulator, clamped to M, is the rank. The clamp also keeps an index that
//! legitimately contains the sentinel value correct.

use crate::index::{Key, SortedIndex};
use thiserror::Error;

/// Sentinel filling unused key slots: the maximum key value.
const SENTINEL: Key = Key::MAX;

/// How a node's bytes are split between keys and child pointers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayoutVariant {
    /// K keys plus K+1 child pointers per node: the classic B+-tree node.
    /// A 64-byte node holds 7 keys and 8 pointers.
    KeysPlusChildPointers,
    /// K keys plus one pointer to the contiguous child block, trading pointer
    /// slots for fanout. A 32-byte node holds 7 keys.
    SingleChildPointer,
}

/// Node geometry: byte budget per node and how it is spent.
///
/// Invariants: `node_bytes` is a positive multiple of `key_bytes`, and the
/// derived fanout is ≥ 2 (checked when a tree is built).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeLayout {
    /// Bytes per tree node (typically one or two cache lines).
    pub node_bytes: usize,
    /// Bytes per key; the key type is `u32`, so this is 4. Pointer slots are
    /// accounted at the same width.
    pub key_bytes: usize,
    /// Keys-plus-pointers or single-child-pointer.
    pub variant: LayoutVariant,
}

impl NodeLayout {
    /// Single-child-pointer layout (the default): `node_bytes / 4 − 1` keys
    /// per node. 32 bytes → 7 keys, fanout 8.
    pub fn single_pointer(node_bytes: usize) -> Self {
        Self { node_bytes, key_bytes: 4, variant: LayoutVariant::SingleChildPointer }
    }

    /// Keys-plus-child-pointers layout: K keys and K+1 pointers must fit, so
    /// K = (node_bytes/4 − 1) / 2. 64 bytes → 7 keys, fanout 8; 32 bytes →
    /// 3 keys, fanout 4.
    pub fn keys_plus_pointers(node_bytes: usize) -> Self {
        Self { node_bytes, key_bytes: 4, variant: LayoutVariant::KeysPlusChildPointers }
    }

    /// Keys stored per node under this layout (0 if the node is too small,
    /// which the tree builder rejects).
    pub fn keys_per_node(&self) -> usize {
        if self.key_bytes == 0 || self.node_bytes % self.key_bytes != 0 {
            return 0;
        }
        let slots = self.node_bytes / self.key_bytes;
        match self.variant {
            LayoutVariant::SingleChildPointer => slots.saturating_sub(1),
            LayoutVariant::KeysPlusChildPointers => slots.saturating_sub(1) / 2,
        }
    }

    /// Derived fanout: children per node.
    pub fn fanout(&self) -> usize {
        self.keys_per_node() + 1
    }
}

/// Errors from building a tree.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    /// The layout yields fewer than 1 key per node (fanout < 2), so the
    /// structure cannot branch.
    #[error(
        "node layout of {node_bytes} bytes yields fanout {fanout}, need at least 2"
    )]
    FanoutTooSmall { node_bytes: usize, fanout: usize },

    /// node_bytes must be a positive multiple of key_bytes.
    #[error("node size {node_bytes} is not a positive multiple of the {key_bytes}-byte key size")]
    MisalignedNode { node_bytes: usize, key_bytes: usize },

    /// The virtual slot space (K+1)^T overflows sane arithmetic; only
    /// reachable with absurd node sizes.
    #[error("tree geometry overflows: fanout {fanout} with {levels} levels")]
    GeometryTooLarge { fanout: usize, levels: u32 },
}

/// Mid-descent state, used by the buffered traversal to advance a key a few
/// levels at a time. `node` is the in-level node index at the *next* level to
/// visit; `rank` the partial rank accumulated so far; once `done` is set the
/// rank is final (the descent proved the answer is the full key count).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct DescentCursor {
    pub node: u64,
    pub rank: u64,
    pub done: bool,
}

impl DescentCursor {
    pub(crate) fn root() -> Self {
        Self { node: 0, rank: 0, done: false }
    }
}

/// The n-ary search tree. Immutable after build; share it freely.
#[derive(Debug, Clone)]
pub struct NaryTree {
    layout: NodeLayout,
    /// Total levels T.
    levels: u32,
    /// Fanout F = keys_per_node + 1.
    fanout: u64,
    /// Number of real keys M.
    key_count: u64,
    /// F^j for j in 0..=T.
    pow: Vec<u64>,
    /// Materialized nodes per level (level i stored at index i−1). A level's
    /// nodes are the leading ones holding at least one real key.
    level_node_counts: Vec<u64>,
    /// Per level: keys_per_node keys for each materialized node, sentinel
    /// padded, node-major.
    level_keys: Vec<Vec<Key>>,
}

impl NaryTree {
    /// Builds the tree over an index.
    ///
    /// Cost is one pass over the keys; the result is a complete search tree
    /// whose in-order traversal reproduces the index exactly.
    pub fn build(index: &SortedIndex, layout: NodeLayout) -> Result<Self, TreeError> {
        if layout.key_bytes == 0
            || layout.node_bytes == 0
            || layout.node_bytes % layout.key_bytes != 0
        {
            return Err(TreeError::MisalignedNode {
                node_bytes: layout.node_bytes,
                key_bytes: layout.key_bytes,
            });
        }
        let k = layout.keys_per_node();
        if k < 1 {
            return Err(TreeError::FanoutTooSmall {
                node_bytes: layout.node_bytes,
                fanout: layout.fanout(),
            });
        }
        let f = (k + 1) as u64;
        let m = index.len() as u64;

        // Minimal T with F^T − 1 >= M, i.e. F^T >= M + 1.
        let mut levels: u32 = 1;
        let mut pow_t: u128 = f as u128;
        while pow_t < (m as u128) + 1 {
            levels += 1;
            pow_t *= f as u128;
            if pow_t > (1u128 << 62) {
                return Err(TreeError::GeometryTooLarge { fanout: f as usize, levels });
            }
        }

        let pow: Vec<u64> = (0..=levels).map(|j| f.pow(j)).collect();

        // Materialized nodes per level: the leading nodes whose first key
        // slot (in-order position node*F^(T-i+1) + F^(T-i) − 1) is < M.
        let level_node_counts: Vec<u64> = (1..=levels)
            .map(|i| {
                let below = pow[(levels - i) as usize];
                (m - below) / (below * f) + 1
            })
            .collect();

        let mut level_keys: Vec<Vec<Key>> = level_node_counts
            .iter()
            .map(|&n| vec![SENTINEL; (n * k as u64) as usize])
            .collect();

        // In-order fill: position p (0-based) lives at the level where p+1
        // sheds its trailing base-F zeros.
        for (p, &key) in index.keys().iter().enumerate() {
            let (level, node, slot) = Self::position_to_slot(p as u64 + 1, f, levels);
            level_keys[(level - 1) as usize][(node * k as u64 + slot) as usize] = key;
        }

        Ok(Self {
            layout,
            levels,
            fanout: f,
            key_count: m,
            pow,
            level_node_counts,
            level_keys,
        })
    }

    /// Maps in-order position + 1 to (level, in-level node index, key slot).
    fn position_to_slot(mut v: u64, f: u64, levels: u32) -> (u32, u64, u64) {
        let mut depth_from_leaf = 0u32;
        while v % f == 0 {
            v /= f;
            depth_from_leaf += 1;
        }
        let level = levels - depth_from_leaf;
        let node = (v - 1) / f;
        let slot = (v - 1) % f;
        (level, node, slot)
    }

    /// Rank of `key`: the number of index keys ≤ `key`.
    pub fn rank(&self, key: Key) -> u64 {
        let cur = self.descend_levels(key, DescentCursor::root(), 1, self.levels);
        self.finish_rank(&cur)
    }

    /// Advances a descent through levels `from..=to` (1-based, inclusive).
    ///
    /// The buffered traversal uses this to walk one subtree layer at a time;
    /// a plain lookup walks 1..=T in one call.
    pub(crate) fn descend_levels(
        &self,
        key: Key,
        mut cur: DescentCursor,
        from: u32,
        to: u32,
    ) -> DescentCursor {
        if cur.done {
            return cur;
        }
        let k = self.layout.keys_per_node() as u64;
        for level in from..=to {
            // In-order start position of this node's subtree. If the whole
            // subtree lies past the last real key, the query already proved
            // itself >= max key: final answer is M.
            let subtree_span = self.pow[(self.levels - level + 1) as usize];
            if cur.node * subtree_span >= self.key_count {
                cur.rank = self.key_count;
                cur.done = true;
                return cur;
            }
            let branch = if cur.node < self.level_node_counts[(level - 1) as usize] {
                let base = (cur.node * k) as usize;
                let node_keys = &self.level_keys[(level - 1) as usize][base..base + k as usize];
                node_keys.partition_point(|&nk| nk <= key) as u64
            } else {
                // Implicit all-sentinel node.
                if key == SENTINEL {
                    k
                } else {
                    0
                }
            };
            cur.rank += branch * self.pow[(self.levels - level) as usize];
            cur.node = cur.node * self.fanout + branch;
        }
        // Re-establish the boundary invariant for callers that resume the
        // descent later: a live cursor always points at a subtree holding at
        // least one real key position. (Sentinel branches can walk past the
        // last such subtree mid-tree, e.g. for the maximum query key.)
        if to < self.levels {
            let next_span = self.pow[(self.levels - to) as usize];
            if cur.node * next_span >= self.key_count {
                cur.rank = self.key_count;
                cur.done = true;
            }
        }
        cur
    }

    /// Final rank for a cursor that has traversed all T levels.
    pub(crate) fn finish_rank(&self, cur: &DescentCursor) -> u64 {
        cur.rank.min(self.key_count)
    }

    /// Key slots of one materialized node, or None for an implicit
    /// all-sentinel node. Levels are 1-based. Test support for decomposition
    /// invariants.
    #[cfg(test)]
    pub(crate) fn node_key_slots(&self, level: u32, node: u64) -> Option<&[Key]> {
        if node >= self.level_node_counts[(level - 1) as usize] {
            return None;
        }
        let k = self.layout.keys_per_node() as u64;
        let base = (node * k) as usize;
        Some(&self.level_keys[(level - 1) as usize][base..base + k as usize])
    }

    /// Nodes at `level` (1-based) that a descent can actually enter: the
    /// leading nodes whose subtree contains at least one real key position.
    /// At most one more than the materialized count.
    pub(crate) fn reachable_nodes_at_level(&self, level: u32) -> u64 {
        let span = self.pow[(self.levels - level + 1) as usize];
        (self.key_count - 1) / span + 1
    }

    /// In-order key iterator; reproduces the source index exactly.
    pub fn iter_keys(&self) -> impl Iterator<Item = Key> + '_ {
        let k = self.layout.keys_per_node() as u64;
        (1..=self.key_count).map(move |v| {
            let (level, node, slot) = Self::position_to_slot(v, self.fanout, self.levels);
            self.level_keys[(level - 1) as usize][(node * k + slot) as usize]
        })
    }

    /// Total levels T.
    pub fn levels(&self) -> u32 {
        self.levels
    }

    /// Children per node.
    pub fn fanout(&self) -> usize {
        self.fanout as usize
    }

    /// Real keys in the tree.
    pub fn key_count(&self) -> u64 {
        self.key_count
    }

    /// The node geometry the tree was built with.
    pub fn layout(&self) -> NodeLayout {
        self.layout
    }

    /// Materialized nodes per level, root first.
    pub fn level_node_counts(&self) -> &[u64] {
        &self.level_node_counts
    }

    /// Materialized nodes in the whole tree.
    pub fn node_count(&self) -> u64 {
        self.level_node_counts.iter().sum()
    }

    /// Bytes occupied under the configured layout (pointer slots included).
    pub fn tree_bytes(&self) -> u64 {
        self.node_count() * self.layout.node_bytes as u64
    }

    /// Cache lines per level at the given line size, rounded up per level.
    ///
    /// Valid for both directions of the node/line size relationship: nodes
    /// spanning multiple lines (64-byte nodes on 32-byte lines → 2 lines per
    /// node) and several nodes sharing a line.
    pub fn level_line_counts(&self, line_bytes: usize) -> Vec<u64> {
        assert!(line_bytes > 0, "cache line size must be positive");
        self.level_node_counts
            .iter()
            .map(|&n| (n * self.layout.node_bytes as u64).div_ceil(line_bytes as u64))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::WorkloadSpec;

    /// Independent depth oracle: literal level-filling simulation. Level i
    /// contributes (keys per node) × (nodes at level i) slots; depth is the
    /// first level count whose accumulated slots hold M keys.
    fn level_filling_depth(m: u64, keys_per_node: u64) -> u32 {
        let f = keys_per_node + 1;
        let mut depth = 0u32;
        let mut slots: u128 = 0;
        let mut nodes_at_level: u128 = 1;
        while slots < m as u128 {
            depth += 1;
            slots += keys_per_node as u128 * nodes_at_level;
            nodes_at_level *= f as u128;
        }
        depth
    }

    /// Literal rank oracle: count keys ≤ q by scanning.
    fn scan_rank(keys: &[Key], q: Key) -> u64 {
        keys.iter().filter(|&&k| k <= q).count() as u64
    }

    fn build_from_range(m: u32, layout: NodeLayout) -> NaryTree {
        let keys: Vec<Key> = (0..m).map(|i| i * 3 + 1).collect();
        let (idx, _) = SortedIndex::build(&keys).unwrap();
        NaryTree::build(&idx, layout).unwrap()
    }

    #[test]
    fn layout_key_capacity() {
        assert_eq!(NodeLayout::single_pointer(32).keys_per_node(), 7);
        assert_eq!(NodeLayout::single_pointer(32).fanout(), 8);
        assert_eq!(NodeLayout::keys_plus_pointers(64).keys_per_node(), 7);
        assert_eq!(NodeLayout::keys_plus_pointers(64).fanout(), 8);
        assert_eq!(NodeLayout::keys_plus_pointers(32).keys_per_node(), 3);
        assert_eq!(NodeLayout::keys_plus_pointers(32).fanout(), 4);
    }

    #[test]
    fn fanout_below_two_is_rejected() {
        // 8-byte single-pointer node: 1 key, fanout 2 — smallest legal.
        let (idx, _) = SortedIndex::build(&[1, 2, 3]).unwrap();
        assert!(NaryTree::build(&idx, NodeLayout::single_pointer(8)).is_ok());
        // 4-byte node: 0 keys.
        assert_eq!(
            NaryTree::build(&idx, NodeLayout::single_pointer(4)).unwrap_err(),
            TreeError::FanoutTooSmall { node_bytes: 4, fanout: 1 }
        );
        // Misaligned node size.
        let bad = NodeLayout { node_bytes: 30, key_bytes: 4, variant: LayoutVariant::SingleChildPointer };
        assert_eq!(
            NaryTree::build(&idx, bad).unwrap_err(),
            TreeError::MisalignedNode { node_bytes: 30, key_bytes: 4 }
        );
    }

    /// 15 keys at 3 keys per node (fanout 4): a perfect 2-level tree — one
    /// root with 3 separators and 4 leaf nodes.
    #[test]
    fn perfect_two_level_tree() {
        let keys: Vec<Key> = (1..=15).collect();
        let (idx, _) = SortedIndex::build(&keys).unwrap();
        let tree = NaryTree::build(&idx, NodeLayout::keys_plus_pointers(32)).unwrap();
        assert_eq!(tree.levels(), 2);
        assert_eq!(tree.level_node_counts(), &[1, 4]);
        // Root separators are the 4th, 8th, 12th keys.
        assert_eq!(&tree.level_keys[0], &[4, 8, 12]);
        for q in 0..=16u32 {
            assert_eq!(tree.rank(q), scan_rank(idx.keys(), q), "query {q}");
        }
    }

    /// Full-scale depth: 327,680 keys at 7 keys per node → 7 levels.
    #[test]
    fn full_scale_depth_is_seven() {
        let spec = WorkloadSpec::new(2, 327_680, 0);
        let (idx, _) = SortedIndex::build(&spec.gen_index_keys()).unwrap();
        let tree = NaryTree::build(&idx, NodeLayout::single_pointer(32)).unwrap();
        assert_eq!(tree.levels(), 7);
        let tree64 = NaryTree::build(&idx, NodeLayout::keys_plus_pointers(64)).unwrap();
        assert_eq!(tree64.levels(), 7);
        // The 64-byte layout puts the tree at ~3 MB.
        assert!(tree64.tree_bytes() > 2_900_000 && tree64.tree_bytes() < 3_400_000);
    }

    /// Depth matches the exhaustive level-filling oracle across sizes,
    /// including powers and off-by-ones around them.
    #[test]
    fn depth_matches_level_filling_oracle() {
        let layout = NodeLayout::single_pointer(32); // 7 keys per node
        for m in [1u32, 2, 6, 7, 8, 62, 63, 64, 511, 512, 513, 1000, 4095, 4096, 32768, 100_000] {
            let tree = build_from_range(m, layout);
            assert_eq!(
                tree.levels(),
                level_filling_depth(m as u64, 7),
                "depth mismatch at M={m}"
            );
        }
        // And for a fanout-4 layout.
        let layout4 = NodeLayout::keys_plus_pointers(32);
        for m in [1u32, 3, 4, 15, 16, 63, 64, 255, 1000] {
            let tree = build_from_range(m, layout4);
            assert_eq!(tree.levels(), level_filling_depth(m as u64, 3), "M={m}");
        }
    }

    /// In-order traversal reproduces the source index exactly.
    #[test]
    fn inorder_traversal_round_trips() {
        for m in [1u32, 7, 8, 100, 511, 512, 5000] {
            let spec = WorkloadSpec::new(m as u64, m as usize, 0);
            let (idx, _) = SortedIndex::build(&spec.gen_index_keys()).unwrap();
            let tree = NaryTree::build(&idx, NodeLayout::single_pointer(32)).unwrap();
            let walked: Vec<Key> = tree.iter_keys().collect();
            assert_eq!(walked, idx.keys(), "M={m}");
        }
    }

    /// Every key's rank equals its position + 1; quantified over all keys.
    #[test]
    fn rank_of_every_member_key() {
        let spec = WorkloadSpec::new(41, 100_000, 0);
        let (idx, _) = SortedIndex::build(&spec.gen_index_keys()).unwrap();
        let tree = NaryTree::build(&idx, NodeLayout::single_pointer(32)).unwrap();
        for (pos, &k) in idx.keys().iter().enumerate() {
            assert_eq!(tree.rank(k), pos as u64 + 1);
            // One below a member key answers the member count before it
            // (unless the predecessor is also a member).
            if pos == 0 && k > 0 {
                assert_eq!(tree.rank(k - 1), 0);
            }
        }
    }

    /// Random queries against the literal scan oracle, including a larger
    /// index sampled rather than exhausted.
    #[test]
    fn rank_matches_scan_oracle() {
        let spec = WorkloadSpec::new(43, 300_000, 10_000);
        let (idx, _) = SortedIndex::build(&spec.gen_index_keys()).unwrap();
        let tree = NaryTree::build(&idx, NodeLayout::single_pointer(32)).unwrap();
        let ranks = idx.scan_ranks(&spec.gen_query_keys());
        for (q, want) in spec.gen_query_keys().into_iter().zip(ranks) {
            assert_eq!(tree.rank(q), want, "query {q}");
        }
    }

    /// Sentinel collision: an index that really contains u32::MAX must not
    /// confuse the sentinel padding.
    #[test]
    fn max_key_in_index_stays_correct() {
        let mut keys: Vec<Key> = (0..1000).map(|i| i * 1000).collect();
        keys.push(u32::MAX);
        keys.push(u32::MAX - 1);
        let (idx, _) = SortedIndex::build(&keys).unwrap();
        let tree = NaryTree::build(&idx, NodeLayout::single_pointer(32)).unwrap();
        assert_eq!(tree.rank(u32::MAX), idx.len() as u64);
        assert_eq!(tree.rank(u32::MAX - 1), idx.len() as u64 - 1);
        assert_eq!(tree.rank(u32::MAX - 2), idx.len() as u64 - 2);
        assert_eq!(tree.rank(0), 1); // key 0 is a member
    }

    /// Queries beyond either end.
    #[test]
    fn rank_at_extremes() {
        let (idx, _) = SortedIndex::build(&[10, 20, 30]).unwrap();
        let tree = NaryTree::build(&idx, NodeLayout::single_pointer(32)).unwrap();
        assert_eq!(tree.rank(5), 0);
        assert_eq!(tree.rank(10), 1);
        assert_eq!(tree.rank(30), 3);
        assert_eq!(tree.rank(u32::MAX), 3);
    }

    /// Line accounting: a perfect fanout-8 tree with node == line has
    /// geometric per-level line counts [1, 8, 64, …].
    #[test]
    fn line_counts_geometric_when_node_equals_line() {
        let m = 8u32.pow(4) - 1; // perfect 4-level tree
        let tree = build_from_range(m, NodeLayout::single_pointer(32));
        assert_eq!(tree.levels(), 4);
        assert_eq!(tree.level_line_counts(32), vec![1, 8, 64, 512]);
    }

    /// Covering bound: total lines × line size ≥ total node bytes, for both
    /// node-per-line relationships.
    #[test]
    fn line_counts_cover_node_bytes() {
        let tree = build_from_range(10_000, NodeLayout::keys_plus_pointers(64));
        for line in [16usize, 32, 64, 128] {
            let total: u64 = tree.level_line_counts(line).iter().sum();
            assert!(
                total * line as u64 >= tree.tree_bytes(),
                "line size {line}: {total} lines do not cover {} bytes",
                tree.tree_bytes()
            );
        }
        // 64-byte nodes on 32-byte lines: exactly 2 lines per node.
        let lines: u64 = tree.level_line_counts(32).iter().sum();
        assert_eq!(lines, tree.node_count() * 2);
    }

    /// The partial-descent cursor agrees with the one-shot rank when split at
    /// every possible level boundary.
    #[test]
    fn split_descent_agrees_with_full_descent() {
        let spec = WorkloadSpec::new(47, 20_000, 500);
        let (idx, _) = SortedIndex::build(&spec.gen_index_keys()).unwrap();
        let tree = NaryTree::build(&idx, NodeLayout::single_pointer(32)).unwrap();
        let t = tree.levels();
        for q in spec.gen_query_keys() {
            let want = tree.rank(q);
            for split in 1..t {
                let cur = tree.descend_levels(q, DescentCursor::root(), 1, split);
                let cur = tree.descend_levels(q, cur, split + 1, t);
                assert_eq!(tree.finish_rank(&cur), want, "query {q} split {split}");
            }
        }
    }
}

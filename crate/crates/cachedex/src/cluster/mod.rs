//! Distributed deployment of the lookup engines.
//!
//! Two topologies:
//!
//! - **Partitioned** (the cluster strategies `c1`/`c2`/`c3`): one or more
//!   *masters* hold a [`DelimiterTable`](crate::partition::DelimiterTable)
//!   and route each query to the *slave* owning its key range; slaves answer
//!   with globally offset ranks. See [`master::run_master`].
//! - **Replicated** (the distributed baseline for strategies `a`/`b`): every
//!   worker holds the full index and a balancer deals out whole batches
//!   round-robin. See [`master::run_replicated`].
//!
//! Messages travel as fixed-format frames ([`wire`]) over a reliable,
//! ordered, connection-per-peer transport ([`transport`]) — an in-process
//! loopback for tests and single-machine runs, TCP for real deployments.
//! Both transports carry the same encoded bytes, so every run exercises the
//! codec end to end.
//!
//! The master pipelines: it keeps routing and sending fresh batches while
//! earlier batches are still in flight (depth limited only by the stream),
//! and reassembles whatever replies have arrived between sends. Slaves are
//! single-threaded request loops over read-only engines.

pub mod master;
pub mod slave;
pub mod transport;
pub mod wire;

use std::collections::HashMap;
use std::collections::VecDeque;
use std::time::Duration;

use crate::engine::{EngineError, EngineKind, LookupEngine, QueryBatch};
use crate::index::SortedIndex;
use crate::partition::{partition_index, DelimiterTable, PartitionError};
use thiserror::Error;

pub use master::{run_master, run_replicated, MasterConfig, MasterStats};
pub use slave::{run_slave, SlaveStats};
pub use transport::{loopback_pair, Link};
pub use wire::{decode_frame, encode_frame, Message, WireError};

/// Everything that can go wrong in a cluster run.
#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("wire protocol: {0}")]
    Wire(#[from] WireError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("engine: {0}")]
    Engine(#[from] EngineError),
    #[error("partitioning: {0}")]
    Partition(#[from] PartitionError),
    #[error("slave {node_id} disconnected with work outstanding")]
    SlaveDisconnected { node_id: u16 },
    #[error("peer {node_id} disconnected")]
    PeerDisconnected { node_id: u16 },
    #[error("timed out after {after:?} waiting for results from slave {node_id}")]
    ResultTimeout { node_id: u16, after: Duration },
    #[error("slave {node_id} never announced ready within {after:?}")]
    ReadyTimeout { node_id: u16, after: Duration },
    #[error("protocol violation: unexpected {what} frame from node {node_id}")]
    UnexpectedFrame { node_id: u16, what: &'static str },
    #[error("result batch {batch_id} answers {received} keys, expected {sent}")]
    BatchMismatch { batch_id: u32, sent: usize, received: usize },
    #[error("result batch {batch_id} matches no outstanding query batch")]
    UnknownBatch { batch_id: u32 },
    #[error("invalid batching policy: {0}")]
    InvalidPolicy(String),
}

/// What a node does in a deployment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Routes queries by key range (partitioned topology).
    Master,
    /// Answers queries over one partition.
    Slave,
    /// Answers queries over a full replica (replicated topology).
    ReplicaWorker,
    /// Deals whole batches round-robin (replicated topology).
    Balancer,
}

/// A node's role and wire identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeRole {
    pub role: Role,
    pub node_id: u16,
}

/// Wire id of master/balancer number `index`: masters count down from the
/// top of the id space so slave ids can stay equal to partition indices.
pub fn master_node_id(index: usize) -> u16 {
    u16::MAX - index as u16
}

/// When to flush an accumulating outgoing batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchingPolicy {
    /// Flush when a buffer reaches this many bytes of keys.
    pub batch_bytes: usize,
    /// Flush any buffer whose oldest key has waited this long, so trickling
    /// sources cannot strand keys.
    pub flush_timeout: Duration,
}

impl BatchingPolicy {
    /// 128 KiB batches, 10 ms age limit.
    pub fn default_reference() -> Self {
        Self { batch_bytes: 128 * 1024, flush_timeout: Duration::from_millis(10) }
    }

    /// Policy with the reference timeout and the given batch size.
    pub fn with_batch_bytes(batch_bytes: usize) -> Self {
        Self { batch_bytes, ..Self::default_reference() }
    }

    pub fn validate(&self) -> Result<(), ClusterError> {
        if self.batch_bytes < 4 {
            return Err(ClusterError::InvalidPolicy(format!(
                "batch_bytes {} cannot hold even one 4-byte key",
                self.batch_bytes
            )));
        }
        if self.flush_timeout.is_zero() {
            return Err(ClusterError::InvalidPolicy("flush timeout must be positive".into()));
        }
        Ok(())
    }

    /// Keys that fit one batch.
    pub fn keys_per_batch(&self) -> usize {
        (self.batch_bytes / 4).max(1)
    }
}

/// Where each key of one input batch was sent: per-slave sub-batches plus
/// the positions needed to reassemble replies into input order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DispatchRecord {
    pub batch_id: u32,
    /// Keys routed to each slave, preserving relative input order.
    pub sub_batches: Vec<Vec<u32>>,
    /// For each slave, the input position of each key in its sub-batch.
    pub positions: Vec<Vec<usize>>,
}

/// Routes one batch through the delimiter table. Total: sentinel delimiters
/// give every representable key a partition.
pub fn dispatch(table: &DelimiterTable, batch: &QueryBatch) -> DispatchRecord {
    let parts = table.partition_count();
    let mut sub_batches = vec![Vec::new(); parts];
    let mut positions = vec![Vec::new(); parts];
    for (pos, &key) in batch.keys.iter().enumerate() {
        let slave = table.route(key);
        sub_batches[slave].push(key);
        positions[slave].push(pos);
    }
    DispatchRecord { batch_id: batch.batch_id, sub_batches, positions }
}

/// Reorders out-of-order batch replies into the original query stream.
///
/// Keys enter in stream order; each outgoing batch registers the global
/// positions it covers; replies fill those positions; the filled prefix
/// drains to the sink in order. Memory stays proportional to the in-flight
/// window, not the stream.
#[derive(Debug, Default)]
pub(crate) struct Reassembler {
    /// (key, answer) for every position ≥ `base` not yet delivered.
    window: VecDeque<(u32, Option<u64>)>,
    /// Global position of `window[0]`.
    base: u64,
    /// batch_id → global positions of its keys, in sub-batch order.
    outstanding: HashMap<u32, Vec<u64>>,
}

impl Reassembler {
    /// Admits the next stream key, returning its global position.
    pub(crate) fn push_key(&mut self, key: u32) -> u64 {
        let pos = self.base + self.window.len() as u64;
        self.window.push_back((key, None));
        pos
    }

    /// Records an outgoing batch covering `positions`.
    pub(crate) fn register(&mut self, batch_id: u32, positions: Vec<u64>) {
        self.outstanding.insert(batch_id, positions);
    }

    /// Applies one reply; enforces batch integrity (id pairing and length).
    pub(crate) fn apply(&mut self, batch_id: u32, ranks: &[u64]) -> Result<(), ClusterError> {
        let positions = self
            .outstanding
            .remove(&batch_id)
            .ok_or(ClusterError::UnknownBatch { batch_id })?;
        if positions.len() != ranks.len() {
            return Err(ClusterError::BatchMismatch {
                batch_id,
                sent: positions.len(),
                received: ranks.len(),
            });
        }
        for (&pos, &rank) in positions.iter().zip(ranks) {
            self.window[(pos - self.base) as usize].1 = Some(rank);
        }
        Ok(())
    }

    /// Delivers the answered prefix to the sink in stream order.
    pub(crate) fn drain(&mut self, sink: &mut impl FnMut(u32, u64)) {
        while let Some(&(key, Some(rank))) = self.window.front() {
            sink(key, rank);
            self.window.pop_front();
            self.base += 1;
        }
    }

    /// Batches sent but not yet answered.
    pub(crate) fn outstanding_batches(&self) -> usize {
        self.outstanding.len()
    }

    /// Keys admitted but not yet delivered.
    pub(crate) fn undelivered_keys(&self) -> usize {
        self.window.len()
    }
}

/// A partitioned loopback topology, ready to drive from this thread.
pub struct LocalCluster {
    /// Master-side links, one per slave, indexed by partition id.
    pub links: Vec<Link>,
    /// Routing table over the partition boundaries.
    pub table: DelimiterTable,
    /// Slave threads; join after shutdown for their statistics.
    pub handles: Vec<std::thread::JoinHandle<Result<SlaveStats, ClusterError>>>,
}

impl LocalCluster {
    /// Sends nothing further and collects every slave's statistics.
    pub fn join(self) -> Result<Vec<SlaveStats>, ClusterError> {
        let mut stats = Vec::with_capacity(self.handles.len());
        for handle in self.handles {
            stats.push(handle.join().expect("slave thread panicked")?);
        }
        Ok(stats)
    }
}

/// Partitions `index` across `slaves` in-process slave threads running
/// `kind` engines over loopback links.
pub fn spawn_partitioned(
    index: &SortedIndex,
    kind: EngineKind,
    slaves: usize,
) -> Result<LocalCluster, ClusterError> {
    let (table, partitions) = partition_index(index, slaves)?;
    let mut links = Vec::with_capacity(slaves);
    let mut handles = Vec::with_capacity(slaves);
    for part in &partitions {
        let node_id = part.id() as u16;
        let engine = LookupEngine::for_partition(kind, part)?;
        let range = partition_range(&table, part.id());
        let (master_side, mut slave_side) = loopback_pair(node_id, master_node_id(0));
        links.push(master_side);
        handles.push(std::thread::spawn(move || {
            run_slave(node_id, std::slice::from_mut(&mut slave_side), &engine, Some(range))
        }));
    }
    Ok(LocalCluster { links, table, handles })
}

/// Replicates `index` onto `workers` in-process worker threads running
/// `kind` engines over loopback links. Workers check no key range: every
/// key is theirs.
pub fn spawn_replicated(
    index: &SortedIndex,
    kind: EngineKind,
    workers: usize,
) -> Result<Vec<(Link, std::thread::JoinHandle<Result<SlaveStats, ClusterError>>)>, ClusterError> {
    let mut spawned = Vec::with_capacity(workers);
    for worker in 0..workers {
        let node_id = worker as u16;
        let engine = LookupEngine::for_index(kind, index)?;
        let (master_side, mut worker_side) = loopback_pair(node_id, master_node_id(0));
        let handle = std::thread::spawn(move || {
            run_slave(node_id, std::slice::from_mut(&mut worker_side), &engine, None)
        });
        spawned.push((master_side, handle));
    }
    Ok(spawned)
}

/// Half-open global key range `[lo, hi)` of partition `id`, read off the
/// delimiter table.
pub fn partition_range(table: &DelimiterTable, id: usize) -> (u64, u64) {
    (table.bounds()[id], table.bounds()[id + 1])
}

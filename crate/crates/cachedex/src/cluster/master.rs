//! The master/balancer side: routing, batching, pipelining, reassembly.

use std::time::{Duration, Instant};

use crate::partition::DelimiterTable;

use super::transport::Link;
use super::wire::Message;
use super::{BatchingPolicy, ClusterError, Reassembler};

/// Tunables for a master or balancer run.
#[derive(Debug, Clone)]
pub struct MasterConfig {
    pub policy: BatchingPolicy,
    /// Longest silence tolerated while replies are owed before the run
    /// aborts naming the stalled slave.
    pub recv_timeout: Duration,
}

impl Default for MasterConfig {
    fn default() -> Self {
        Self { policy: BatchingPolicy::default_reference(), recv_timeout: Duration::from_secs(30) }
    }
}

/// What a master/balancer run did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MasterStats {
    /// Keys consumed from the query source.
    pub keys_in: u64,
    /// Keys delivered to the sink. Conservation demands equality with
    /// `keys_in` for every completed run.
    pub keys_answered: u64,
    pub batches_sent: u64,
    pub batches_received: u64,
    /// Keys sent to each slave/worker.
    pub per_slave_keys: Vec<u64>,
    /// Batches sent to each slave/worker.
    pub per_slave_batches: Vec<u64>,
    /// Wall time from first key to last delivered answer.
    pub elapsed: Duration,
}

/// The send/receive engine shared by the partitioned master and the
/// round-robin balancer: numbers outgoing batches, tracks outstanding work,
/// folds replies back into stream order, and ages partially filled buffers.
struct Pump<'a, F: FnMut(u32, u64)> {
    node_id: u16,
    links: &'a mut [Link],
    reasm: Reassembler,
    sink: F,
    next_batch_id: u32,
    /// Batches in flight per slave, for naming stragglers.
    owed: Vec<u64>,
    stats: MasterStats,
}

impl<'a, F: FnMut(u32, u64)> Pump<'a, F> {
    fn new(node_id: u16, links: &'a mut [Link], sink: F) -> Self {
        let n = links.len();
        Pump {
            node_id,
            links,
            reasm: Reassembler::default(),
            sink,
            next_batch_id: 0,
            owed: vec![0; n],
            stats: MasterStats {
                keys_in: 0,
                keys_answered: 0,
                batches_sent: 0,
                batches_received: 0,
                per_slave_keys: vec![0; n],
                per_slave_batches: vec![0; n],
                elapsed: Duration::ZERO,
            },
        }
    }

    /// A send/recv failure on the link to `slave`, reattributed to that
    /// slave for the diagnostic.
    fn slave_error(&self, slave: usize, err: ClusterError) -> ClusterError {
        match err {
            ClusterError::PeerDisconnected { .. } => {
                ClusterError::SlaveDisconnected { node_id: self.links[slave].peer() }
            }
            other => other,
        }
    }

    /// Waits for every slave to announce readiness.
    fn await_ready(&mut self, timeout: Duration) -> Result<(), ClusterError> {
        for slave in 0..self.links.len() {
            match self.links[slave]
                .recv_timeout(timeout)
                .map_err(|e| self.slave_error(slave, e))?
            {
                Some(Message::Ready { .. }) => {}
                Some(other) => {
                    return Err(ClusterError::UnexpectedFrame {
                        node_id: other.node_id(),
                        what: "non-READY",
                    })
                }
                None => {
                    return Err(ClusterError::ReadyTimeout {
                        node_id: self.links[slave].peer(),
                        after: timeout,
                    })
                }
            }
        }
        Ok(())
    }

    /// Ships one batch to `slave` and registers its reassembly record.
    fn flush(
        &mut self,
        slave: usize,
        keys: Vec<u32>,
        positions: Vec<u64>,
    ) -> Result<(), ClusterError> {
        debug_assert_eq!(keys.len(), positions.len());
        let batch_id = self.next_batch_id;
        self.next_batch_id = self.next_batch_id.wrapping_add(1);
        self.stats.batches_sent += 1;
        self.stats.per_slave_keys[slave] += keys.len() as u64;
        self.stats.per_slave_batches[slave] += 1;
        self.owed[slave] += 1;
        self.reasm.register(batch_id, positions);
        let frame = Message::QueryBatch { node_id: self.node_id, batch_id, keys };
        self.links[slave].send(&frame).map_err(|e| self.slave_error(slave, e))
    }

    /// Applies one reply frame.
    fn handle(&mut self, slave: usize, message: Message) -> Result<(), ClusterError> {
        match message {
            Message::ResultBatch { batch_id, ranks, .. } => {
                self.reasm.apply(batch_id, &ranks)?;
                self.owed[slave] = self.owed[slave].saturating_sub(1);
                self.stats.batches_received += 1;
                self.stats.keys_answered += ranks.len() as u64;
                self.reasm.drain(&mut self.sink);
                Ok(())
            }
            other => Err(ClusterError::UnexpectedFrame {
                node_id: other.node_id(),
                what: "non-RESULT_BATCH",
            }),
        }
    }

    /// Collects every reply already queued, without blocking. This is what
    /// lets batch n+1 build while batch n is in flight.
    fn poll(&mut self) -> Result<bool, ClusterError> {
        let mut progressed = false;
        for slave in 0..self.links.len() {
            while let Some(message) =
                self.links[slave].try_recv().map_err(|e| self.slave_error(slave, e))?
            {
                self.handle(slave, message)?;
                progressed = true;
            }
        }
        Ok(progressed)
    }

    /// Blocks until no batch is outstanding, aborting after `timeout` of
    /// silence and naming the slave that still owes replies.
    fn await_all(&mut self, timeout: Duration) -> Result<(), ClusterError> {
        let mut last_progress = Instant::now();
        while self.reasm.outstanding_batches() > 0 {
            if self.poll()? {
                last_progress = Instant::now();
                continue;
            }
            if last_progress.elapsed() >= timeout {
                let victim = (0..self.links.len())
                    .find(|&s| self.owed[s] > 0)
                    .map(|s| self.links[s].peer())
                    .unwrap_or_default();
                return Err(ClusterError::ResultTimeout { node_id: victim, after: timeout });
            }
            std::thread::sleep(Duration::from_micros(100));
        }
        Ok(())
    }

    /// Ends the stream for every slave.
    fn shutdown_all(&mut self) -> Result<(), ClusterError> {
        for slave in 0..self.links.len() {
            let frame = Message::Shutdown { node_id: self.node_id };
            self.links[slave].send(&frame).map_err(|e| self.slave_error(slave, e))?;
        }
        Ok(())
    }
}

/// Accumulating per-slave (or single, for the balancer) outgoing buffer.
struct Buffer {
    keys: Vec<u32>,
    positions: Vec<u64>,
    oldest: Option<Instant>,
}

impl Buffer {
    fn new(capacity: usize) -> Self {
        Buffer { keys: Vec::with_capacity(capacity), positions: Vec::with_capacity(capacity), oldest: None }
    }

    fn push(&mut self, key: u32, position: u64) {
        if self.keys.is_empty() {
            self.oldest = Some(Instant::now());
        }
        self.keys.push(key);
        self.positions.push(position);
    }

    fn take(&mut self) -> (Vec<u32>, Vec<u64>) {
        self.oldest = None;
        (std::mem::take(&mut self.keys), std::mem::take(&mut self.positions))
    }

    fn aged(&self, limit: Duration) -> bool {
        self.oldest.is_some_and(|t| t.elapsed() >= limit)
    }
}

/// How often (in consumed keys) aged buffers are checked against the flush
/// timeout; a compromise between clock reads and timeout granularity.
const AGE_CHECK_STRIDE: u64 = 1024;

/// Runs a partitioned-topology master: routes each query through the
/// delimiter table, accumulates per-slave batches under the policy, keeps
/// batches in flight while consuming more input, and delivers every answer
/// to `sink` in original stream order. Sends SHUTDOWN to all slaves at end
/// of stream.
///
/// All slaves must already be connected; the run starts by collecting their
/// READY announcements.
pub fn run_master(
    node_id: u16,
    config: &MasterConfig,
    links: &mut [Link],
    table: &DelimiterTable,
    queries: impl IntoIterator<Item = u32>,
    sink: impl FnMut(u32, u64),
) -> Result<MasterStats, ClusterError> {
    run_pump(node_id, config, links, queries, sink, |key| table.route(key))
}

/// Runs the replicated-topology balancer: whole batches go to workers
/// round-robin (the cheapest policy that is honestly zero-overhead), and
/// every worker must hold a full replica. Identical reassembly and ordering
/// guarantees to [`run_master`].
pub fn run_replicated(
    node_id: u16,
    config: &MasterConfig,
    links: &mut [Link],
    queries: impl IntoIterator<Item = u32>,
    sink: impl FnMut(u32, u64),
) -> Result<MasterStats, ClusterError> {
    // Round-robin on whole batches: every key of one batch shares a target,
    // advanced per flush. The closure sees a stable target until the pump
    // flushes, which it detects by the buffer emptying.
    let mut batch_no = 0u64;
    let workers = links.len().max(1);
    let mut filled = 0usize;
    let keys_per_batch = config.policy.keys_per_batch();
    run_pump(node_id, config, links, queries, sink, move |_key| {
        let target = (batch_no as usize) % workers;
        filled += 1;
        if filled == keys_per_batch {
            filled = 0;
            batch_no += 1;
        }
        target
    })
}

fn run_pump(
    node_id: u16,
    config: &MasterConfig,
    links: &mut [Link],
    queries: impl IntoIterator<Item = u32>,
    sink: impl FnMut(u32, u64),
    mut route: impl FnMut(u32) -> usize,
) -> Result<MasterStats, ClusterError> {
    config.policy.validate()?;
    let keys_per_batch = config.policy.keys_per_batch();
    let mut pump = Pump::new(node_id, links, sink);
    pump.await_ready(config.recv_timeout)?;

    let started = Instant::now();
    let mut buffers: Vec<Buffer> =
        (0..pump.links.len()).map(|_| Buffer::new(keys_per_batch)).collect();
    for key in queries {
        pump.stats.keys_in += 1;
        let position = pump.reasm.push_key(key);
        let slave = route(key);
        buffers[slave].push(key, position);
        if buffers[slave].keys.len() >= keys_per_batch {
            let (keys, positions) = buffers[slave].take();
            pump.flush(slave, keys, positions)?;
            pump.poll()?;
        } else if pump.stats.keys_in % AGE_CHECK_STRIDE == 0 {
            for slave in 0..buffers.len() {
                if buffers[slave].aged(config.policy.flush_timeout) {
                    let (keys, positions) = buffers[slave].take();
                    pump.flush(slave, keys, positions)?;
                }
            }
        }
    }
    // End of stream: whatever is buffered goes out; no key may be stranded.
    for slave in 0..buffers.len() {
        if !buffers[slave].keys.is_empty() {
            let (keys, positions) = buffers[slave].take();
            pump.flush(slave, keys, positions)?;
        }
    }
    pump.await_all(config.recv_timeout)?;
    pump.shutdown_all()?;
    pump.stats.elapsed = started.elapsed();
    debug_assert_eq!(pump.reasm.undelivered_keys(), 0);
    Ok(pump.stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::transport::loopback_pair;
    use crate::cluster::{master_node_id, spawn_partitioned, spawn_replicated};
    use crate::engine::EngineKind;
    use crate::index::SortedIndex;
    use crate::workload::WorkloadSpec;

    fn collect_run(
        links: &mut [Link],
        table: &DelimiterTable,
        keys: &[u32],
        batch_bytes: usize,
    ) -> (MasterStats, Vec<(u32, u64)>) {
        let config = MasterConfig {
            policy: BatchingPolicy::with_batch_bytes(batch_bytes),
            ..MasterConfig::default()
        };
        let mut out = Vec::new();
        let stats = run_master(
            master_node_id(0),
            &config,
            links,
            table,
            keys.iter().copied(),
            |key, rank| out.push((key, rank)),
        )
        .unwrap();
        (stats, out)
    }

    #[test]
    fn one_slave_equals_local_lookup() {
        let spec = WorkloadSpec::new(11, 5_000, 2_000);
        let (index, _) = SortedIndex::build(&spec.gen_index_keys()).unwrap();
        let queries = spec.gen_query_keys();
        let cluster = spawn_partitioned(&index, EngineKind::C3, 1).unwrap();
        let mut links = cluster.links;
        let (stats, out) = collect_run(&mut links, &cluster.table, &queries, 1 << 10);
        for handle in cluster.handles {
            handle.join().unwrap().unwrap();
        }
        assert_eq!(stats.keys_in, 2_000);
        assert_eq!(stats.keys_answered, 2_000);
        let expected: Vec<(u32, u64)> =
            queries.iter().map(|&k| (k, index.rank(k))).collect();
        assert_eq!(out, expected);
    }

    #[test]
    fn partial_batch_flushes_at_end_of_stream() {
        let (index, _) = SortedIndex::build(&(1..=100).collect::<Vec<_>>()).unwrap();
        let cluster = spawn_partitioned(&index, EngineKind::C1, 4).unwrap();
        let mut links = cluster.links;
        // 3 keys with room for 256 per batch: only the close flushes them.
        let (stats, out) = collect_run(&mut links, &cluster.table, &[5, 60, 90], 1 << 10);
        for handle in cluster.handles {
            handle.join().unwrap().unwrap();
        }
        assert_eq!(stats.keys_in, 3);
        assert_eq!(stats.keys_answered, 3);
        assert_eq!(out, vec![(5, 5), (60, 60), (90, 90)]);
    }

    #[test]
    fn round_robin_balancer_deals_batches_evenly() {
        let spec = WorkloadSpec::new(5, 2_000, 100 * 32);
        let (index, _) = SortedIndex::build(&spec.gen_index_keys()).unwrap();
        let workers = spawn_replicated(&index, EngineKind::A, 10).unwrap();
        let (mut links, handles): (Vec<_>, Vec<_>) = workers.into_iter().unzip();
        // 100 batches of 32 keys each.
        let queries = spec.gen_query_keys();
        let config = MasterConfig {
            policy: BatchingPolicy::with_batch_bytes(32 * 4),
            ..MasterConfig::default()
        };
        let mut out = Vec::new();
        let stats = run_replicated(
            master_node_id(0),
            &config,
            &mut links,
            queries.iter().copied(),
            |key, rank| out.push((key, rank)),
        )
        .unwrap();
        assert_eq!(stats.per_slave_batches, vec![10; 10], "10 workers × 10 batches");
        assert_eq!(stats.keys_answered, stats.keys_in);
        for handle in handles {
            handle.join().unwrap().unwrap();
        }
        let expected: Vec<(u32, u64)> =
            queries.iter().map(|&k| (k, index.rank(k))).collect();
        assert_eq!(out, expected);
    }

    #[test]
    fn disconnected_slave_is_named() {
        // A "slave" that announces ready, then vanishes.
        let (master_side, mut slave_side) = loopback_pair(6, master_node_id(0));
        let ghost = std::thread::spawn(move || {
            slave_side.send(&Message::Ready { node_id: 6 }).unwrap();
            // Receive one batch, then drop the link without answering.
            while slave_side.try_recv().unwrap_or(None).is_none() {
                std::thread::sleep(Duration::from_micros(200));
            }
        });
        let (index, _) = SortedIndex::build(&(1..=10).collect::<Vec<_>>()).unwrap();
        let (table, _parts) = crate::partition::partition_index(&index, 1).unwrap();
        let mut links = vec![master_side];
        let config = MasterConfig {
            policy: BatchingPolicy::with_batch_bytes(4),
            recv_timeout: Duration::from_secs(5),
        };
        let err = run_master(
            master_node_id(0),
            &config,
            &mut links,
            &table,
            [1u32, 2, 3],
            |_, _| {},
        )
        .unwrap_err();
        ghost.join().unwrap();
        assert!(
            matches!(err, ClusterError::SlaveDisconnected { node_id: 6 }),
            "got {err:?}"
        );
    }

    #[test]
    fn silent_slave_times_out_with_name() {
        let (master_side, mut slave_side) = loopback_pair(2, master_node_id(0));
        let mute = std::thread::spawn(move || {
            slave_side.send(&Message::Ready { node_id: 2 }).unwrap();
            // Swallow everything, answer nothing, and hold the link open
            // until the master gives up.
            loop {
                match slave_side.recv_timeout(Duration::from_millis(50)) {
                    Ok(Some(_)) => continue,
                    Ok(None) => continue,
                    Err(_) => return,
                }
            }
        });
        let (index, _) = SortedIndex::build(&(1..=10).collect::<Vec<_>>()).unwrap();
        let (table, _parts) = crate::partition::partition_index(&index, 1).unwrap();
        let mut links = vec![master_side];
        let config = MasterConfig {
            policy: BatchingPolicy::with_batch_bytes(4),
            recv_timeout: Duration::from_millis(200),
        };
        let err = run_master(
            master_node_id(0),
            &config,
            &mut links,
            &table,
            [1u32],
            |_, _| {},
        )
        .unwrap_err();
        assert!(
            matches!(err, ClusterError::ResultTimeout { node_id: 2, .. }),
            "got {err:?}"
        );
        drop(links);
        mute.join().unwrap();
    }

    #[test]
    fn trickling_source_flushes_on_age() {
        let (index, _) = SortedIndex::build(&(1..=100).collect::<Vec<_>>()).unwrap();
        let cluster = spawn_partitioned(&index, EngineKind::C3, 1).unwrap();
        let mut links = cluster.links;
        let config = MasterConfig {
            policy: BatchingPolicy {
                batch_bytes: 1 << 20, // never fills by size
                flush_timeout: Duration::from_millis(5),
            },
            ..MasterConfig::default()
        };
        // A source that trickles: the age check must kick in between keys.
        let slow = (0..AGE_CHECK_STRIDE * 3).map(|i| {
            if i % AGE_CHECK_STRIDE == AGE_CHECK_STRIDE - 1 {
                std::thread::sleep(Duration::from_millis(10));
            }
            (i % 100) as u32 + 1
        });
        let mut n = 0u64;
        let stats = run_master(
            master_node_id(0),
            &config,
            &mut links,
            &cluster.table,
            slow,
            |_, _| n += 1,
        )
        .unwrap();
        cluster.handles.into_iter().for_each(|h| {
            h.join().unwrap().unwrap();
        });
        assert_eq!(n, stats.keys_in);
        // More than one batch proves at least one age-driven flush fired
        // before end-of-stream.
        assert!(stats.batches_sent > 1, "expected age-driven flushes, got 1 batch");
    }
}

//! The slave request loop: answer query batches over one read-only engine.

use std::time::{Duration, Instant};

use crate::engine::{LookupEngine, QueryBatch};

use super::transport::Link;
use super::wire::Message;
use super::ClusterError;

/// What a slave did during one serving run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlaveStats {
    pub node_id: u16,
    /// Query batches answered.
    pub batches: u64,
    /// Keys answered.
    pub keys: u64,
    /// Time spent looking up and replying.
    pub busy: Duration,
    /// Time spent waiting for work.
    pub idle: Duration,
    /// Keys that arrived outside this slave's assigned key range. They are
    /// still answered by the rank rule — rank arithmetic is total — but a
    /// nonzero count means the master's routing disagrees with the
    /// partition map.
    pub routing_anomalies: u64,
}

impl SlaveStats {
    /// Fraction of the serving run spent waiting, in `[0, 1]`.
    pub fn idle_fraction(&self) -> f64 {
        let total = self.busy + self.idle;
        if total.is_zero() {
            return 0.0;
        }
        self.idle.as_secs_f64() / total.as_secs_f64()
    }
}

/// Serves lookup batches until every connected master has said shutdown.
///
/// Announces readiness on each link, then answers every `QUERY_BATCH` with
/// one `RESULT_BATCH` of equal length and the same `batch_id`, in key
/// order. `expected_range` is the half-open global key range this node is
/// supposed to own; keys outside it are flagged in the statistics (and
/// still answered). Workers holding full replicas pass `None`.
///
/// A link is retired the moment its master says shutdown: masters may hang
/// up at their own pace, and a closed-but-retired link must not disturb
/// service to the others. A link that drops *without* a shutdown is a lost
/// master, and that aborts the slave.
pub fn run_slave(
    node_id: u16,
    links: &mut [Link],
    engine: &LookupEngine,
    expected_range: Option<(u64, u64)>,
) -> Result<SlaveStats, ClusterError> {
    let mut stats = SlaveStats {
        node_id,
        batches: 0,
        keys: 0,
        busy: Duration::ZERO,
        idle: Duration::ZERO,
        routing_anomalies: 0,
    };
    for link in links.iter_mut() {
        link.send(&Message::Ready { node_id })?;
    }

    let mut retired = vec![false; links.len()];
    let mut masters_left = links.len();
    let mut wait_start = Instant::now();
    while masters_left > 0 {
        let mut progressed = false;
        for (link, done) in links.iter_mut().zip(retired.iter_mut()) {
            if *done {
                continue;
            }
            let Some(message) = link.try_recv()? else { continue };
            progressed = true;
            stats.idle += wait_start.elapsed();
            let work_start = Instant::now();
            match message {
                Message::QueryBatch { batch_id, keys, .. } => {
                    if let Some((lo, hi)) = expected_range {
                        stats.routing_anomalies += keys
                            .iter()
                            .filter(|&&k| (u64::from(k)) < lo || (u64::from(k)) >= hi)
                            .count() as u64;
                    }
                    let n = keys.len();
                    let ranks = if keys.is_empty() {
                        Vec::new()
                    } else {
                        engine.lookup_batch(&QueryBatch { batch_id, keys })?.ranks
                    };
                    stats.batches += 1;
                    stats.keys += n as u64;
                    link.send(&Message::ResultBatch { node_id, batch_id, ranks })?;
                }
                Message::Shutdown { .. } => {
                    *done = true;
                    masters_left -= 1;
                }
                Message::Ready { node_id } => {
                    return Err(ClusterError::UnexpectedFrame { node_id, what: "READY" })
                }
                Message::ResultBatch { node_id, .. } => {
                    return Err(ClusterError::UnexpectedFrame { node_id, what: "RESULT_BATCH" })
                }
            }
            stats.busy += work_start.elapsed();
            wait_start = Instant::now();
        }
        if !progressed && masters_left > 0 {
            std::thread::sleep(Duration::from_micros(100));
        }
    }
    stats.idle += wait_start.elapsed();
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::transport::loopback_pair;
    use crate::engine::EngineKind;
    use crate::index::SortedIndex;

    const WAIT: Duration = Duration::from_secs(5);

    fn tiny_engine() -> LookupEngine {
        let (index, _) = SortedIndex::build(&[10, 20, 30, 40, 50]).unwrap();
        LookupEngine::for_index(EngineKind::C3, &index).unwrap()
    }

    /// Runs a slave thread and hands the master-side link plus handle back.
    fn spawn(
        expected_range: Option<(u64, u64)>,
    ) -> (Link, std::thread::JoinHandle<Result<SlaveStats, ClusterError>>) {
        let (master_side, mut slave_side) = loopback_pair(4, 900);
        let handle = std::thread::spawn(move || {
            run_slave(4, std::slice::from_mut(&mut slave_side), &tiny_engine(), expected_range)
        });
        (master_side, handle)
    }

    #[test]
    fn announces_ready_then_echoes_batch_ids() {
        let (mut master, handle) = spawn(None);
        assert_eq!(master.recv_timeout(WAIT).unwrap(), Some(Message::Ready { node_id: 4 }));
        for batch_id in [3u32, 99, 7] {
            master
                .send(&Message::QueryBatch { node_id: 900, batch_id, keys: vec![20, 35] })
                .unwrap();
            let reply = master.recv_timeout(WAIT).unwrap().unwrap();
            assert_eq!(
                reply,
                Message::ResultBatch { node_id: 4, batch_id, ranks: vec![2, 3] }
            );
        }
        master.send(&Message::Shutdown { node_id: 900 }).unwrap();
        let stats = handle.join().unwrap().unwrap();
        assert_eq!((stats.batches, stats.keys), (3, 6));
        assert_eq!(stats.routing_anomalies, 0);
    }

    #[test]
    fn empty_batch_gets_empty_reply() {
        let (mut master, handle) = spawn(None);
        master.recv_timeout(WAIT).unwrap();
        master.send(&Message::QueryBatch { node_id: 900, batch_id: 1, keys: vec![] }).unwrap();
        assert_eq!(
            master.recv_timeout(WAIT).unwrap(),
            Some(Message::ResultBatch { node_id: 4, batch_id: 1, ranks: vec![] })
        );
        master.send(&Message::Shutdown { node_id: 900 }).unwrap();
        assert_eq!(handle.join().unwrap().unwrap().keys, 0);
    }

    #[test]
    fn out_of_range_keys_are_answered_but_flagged() {
        let (mut master, handle) = spawn(Some((25, 45)));
        master.recv_timeout(WAIT).unwrap();
        // 10 and 50 fall outside [25, 45); both still get their ranks.
        master
            .send(&Message::QueryBatch { node_id: 900, batch_id: 0, keys: vec![10, 30, 50] })
            .unwrap();
        assert_eq!(
            master.recv_timeout(WAIT).unwrap(),
            Some(Message::ResultBatch { node_id: 4, batch_id: 0, ranks: vec![1, 3, 5] })
        );
        master.send(&Message::Shutdown { node_id: 900 }).unwrap();
        assert_eq!(handle.join().unwrap().unwrap().routing_anomalies, 2);
    }

    #[test]
    fn rejects_frames_slaves_never_receive() {
        let (mut master, handle) = spawn(None);
        master.recv_timeout(WAIT).unwrap();
        master.send(&Message::Ready { node_id: 900 }).unwrap();
        assert!(matches!(
            handle.join().unwrap(),
            Err(ClusterError::UnexpectedFrame { node_id: 900, what: "READY" })
        ));
    }

    #[test]
    fn serves_two_masters_until_both_shut_down() {
        let (mut m0, s0) = loopback_pair(4, 900);
        let (mut m1, s1) = loopback_pair(4, 901);
        let handle = std::thread::spawn(move || {
            let mut links = [s0, s1];
            run_slave(4, &mut links, &tiny_engine(), None)
        });
        assert_eq!(m0.recv_timeout(WAIT).unwrap(), Some(Message::Ready { node_id: 4 }));
        assert_eq!(m1.recv_timeout(WAIT).unwrap(), Some(Message::Ready { node_id: 4 }));
        m1.send(&Message::QueryBatch { node_id: 901, batch_id: 11, keys: vec![50] }).unwrap();
        m0.send(&Message::QueryBatch { node_id: 900, batch_id: 10, keys: vec![10] }).unwrap();
        assert_eq!(
            m1.recv_timeout(WAIT).unwrap(),
            Some(Message::ResultBatch { node_id: 4, batch_id: 11, ranks: vec![5] })
        );
        assert_eq!(
            m0.recv_timeout(WAIT).unwrap(),
            Some(Message::ResultBatch { node_id: 4, batch_id: 10, ranks: vec![1] })
        );
        m0.send(&Message::Shutdown { node_id: 900 }).unwrap();
        // One shutdown is not enough.
        m1.send(&Message::QueryBatch { node_id: 901, batch_id: 12, keys: vec![20] }).unwrap();
        assert_eq!(
            m1.recv_timeout(WAIT).unwrap(),
            Some(Message::ResultBatch { node_id: 4, batch_id: 12, ranks: vec![2] })
        );
        m1.send(&Message::Shutdown { node_id: 901 }).unwrap();
        let stats = handle.join().unwrap().unwrap();
        assert_eq!(stats.batches, 3);
    }

    /// A master that shuts down may also hang up; its dead link must not
    /// take service away from the master still running.
    #[test]
    fn retired_link_closure_does_not_abort_service() {
        let (mut m0, s0) = loopback_pair(4, 900);
        let (mut m1, s1) = loopback_pair(4, 901);
        let handle = std::thread::spawn(move || {
            let mut links = [s0, s1];
            run_slave(4, &mut links, &tiny_engine(), None)
        });
        m0.recv_timeout(WAIT).unwrap();
        m1.recv_timeout(WAIT).unwrap();
        m0.send(&Message::Shutdown { node_id: 900 }).unwrap();
        drop(m0); // first master is gone entirely
        // Give the slave time to notice (or not) the closed channel.
        std::thread::sleep(Duration::from_millis(20));
        m1.send(&Message::QueryBatch { node_id: 901, batch_id: 1, keys: vec![30] }).unwrap();
        assert_eq!(
            m1.recv_timeout(WAIT).unwrap(),
            Some(Message::ResultBatch { node_id: 4, batch_id: 1, ranks: vec![3] })
        );
        m1.send(&Message::Shutdown { node_id: 901 }).unwrap();
        let stats = handle.join().unwrap().unwrap();
        assert_eq!(stats.batches, 1);
    }
}

//! End-to-end cluster contracts: answer equivalence across topologies,
//! key conservation, batch integrity, multi-master service, and the
//! interchangeability of engines and transports.

use std::collections::HashSet;

use cachedex::cluster::{
    loopback_pair, master_node_id, run_master, run_replicated, run_slave, spawn_partitioned,
    spawn_replicated, MasterConfig, Message,
};
use cachedex::engine::{EngineKind, LookupEngine, QueryBatch};
use cachedex::index::SortedIndex;
use cachedex::partition::partition_index;
use cachedex::workload::WorkloadSpec;

fn build_workload(seed: u64, index_keys: usize, queries: usize) -> (SortedIndex, Vec<u32>) {
    let spec = WorkloadSpec::new(seed, index_keys, queries);
    let (index, _) = SortedIndex::build(&spec.gen_index_keys()).unwrap();
    let queries = spec.gen_query_keys();
    (index, queries)
}

/// Runs a partitioned cluster start to finish and returns the ordered
/// answers plus (master stats, slave stats).
fn cluster_pass(
    index: &SortedIndex,
    kind: EngineKind,
    slaves: usize,
    queries: &[u32],
    config: &MasterConfig,
) -> (Vec<(u32, u64)>, cachedex::cluster::MasterStats, Vec<cachedex::cluster::SlaveStats>) {
    let cluster = spawn_partitioned(index, kind, slaves).unwrap();
    let mut links = cluster.links;
    let mut answers = Vec::with_capacity(queries.len());
    let stats = run_master(
        master_node_id(0),
        config,
        &mut links,
        &cluster.table,
        queries.iter().copied(),
        |key, rank| answers.push((key, rank)),
    )
    .unwrap();
    drop(links);
    let slave_stats: Vec<_> = cluster
        .handles
        .into_iter()
        .map(|h| h.join().expect("slave thread panicked").unwrap())
        .collect();
    (answers, stats, slave_stats)
}

/// The cluster answers exactly what the local index answers, in exactly
/// the input order, for every slave count from one to sixteen.
#[test]
fn equivalence_across_topologies() {
    let (index, queries) = build_workload(21, 1 << 15, 1 << 13);
    let expected: Vec<(u32, u64)> =
        queries.iter().map(|&q| (q, index.rank(q))).collect();
    for slaves in 1..=16usize {
        let (answers, stats, slave_stats) =
            cluster_pass(&index, EngineKind::C3, slaves, &queries, &MasterConfig::default());
        assert_eq!(answers, expected, "topology with {slaves} slaves diverged");
        // Conservation: every key in is a key answered, and the slaves
        // account for all of them with none invented.
        assert_eq!(stats.keys_in, queries.len() as u64);
        assert_eq!(stats.keys_answered, queries.len() as u64);
        let slave_total: u64 = slave_stats.iter().map(|s| s.keys).sum();
        assert_eq!(slave_total, queries.len() as u64, "{slaves} slaves");
        assert_eq!(slave_stats.iter().map(|s| s.routing_anomalies).sum::<u64>(), 0);
    }
}

/// All three partitioned engines produce the same stream over the same
/// topology — the partition layer does not care what searches inside.
#[test]
fn partitioned_engines_are_interchangeable() {
    let (index, queries) = build_workload(33, 1 << 14, 1 << 12);
    let runs: Vec<Vec<(u32, u64)>> = [EngineKind::C1, EngineKind::C2, EngineKind::C3]
        .into_iter()
        .map(|kind| cluster_pass(&index, kind, 5, &queries, &MasterConfig::default()).0)
        .collect();
    assert_eq!(runs[0], runs[1], "c1 vs c2");
    assert_eq!(runs[1], runs[2], "c2 vs c3");
}

/// Batch accounting balances: batches out equals batches back, and the
/// per-slave tallies agree between the master's ledger and the slaves'.
#[test]
fn batch_integrity_balances() {
    let (index, queries) = build_workload(5, 1 << 14, 1 << 13);
    let mut config = MasterConfig::default();
    config.policy.batch_bytes = 2048; // many small batches
    let (_, stats, slave_stats) = cluster_pass(&index, EngineKind::C3, 4, &queries, &config);
    assert_eq!(stats.batches_sent, stats.batches_received);
    assert!(stats.batches_sent >= 4, "sweep should produce multiple batches");
    for (id, slave) in slave_stats.iter().enumerate() {
        assert_eq!(stats.per_slave_batches[id], slave.batches, "slave {id} batch tally");
        assert_eq!(stats.per_slave_keys[id], slave.keys, "slave {id} key tally");
    }
}

/// Two masters share one set of slaves: each master's answer stream is
/// correct and ordered for its own queries, and the slaves drain both
/// workloads before shutting down.
#[test]
fn two_masters_share_slaves() {
    let (index, queries) = build_workload(9, 1 << 14, 1 << 12);
    let slaves = 3;
    let (table, partitions) = partition_index(&index, slaves).unwrap();

    // Hand-wire the topology: per (master, slave) one loopback pair.
    let mut master0_links = Vec::new();
    let mut master1_links = Vec::new();
    let mut slave_threads = Vec::new();
    for (id, part) in partitions.iter().enumerate() {
        // First argument labels the first returned link's *remote*: the
        // master-held link names the slave, the slave-held link the master.
        let (m0, s0) = loopback_pair(id as u16, master_node_id(0));
        let (m1, s1) = loopback_pair(id as u16, master_node_id(1));
        master0_links.push(m0);
        master1_links.push(m1);
        let engine = LookupEngine::for_partition(EngineKind::C2, part).unwrap();
        let range = cachedex::cluster::partition_range(&table, id);
        slave_threads.push(std::thread::spawn(move || {
            let mut links = [s0, s1];
            run_slave(id as u16, &mut links, &engine, Some(range))
        }));
    }

    // Split the stream: even positions to master 0, odd to master 1.
    let half0: Vec<u32> = queries.iter().copied().step_by(2).collect();
    let half1: Vec<u32> = queries.iter().copied().skip(1).step_by(2).collect();
    let table0 = table.clone();
    let config = MasterConfig::default();
    let m0 = std::thread::spawn({
        let half0 = half0.clone();
        let config = config.clone();
        move || {
            let mut answers = Vec::new();
            let mut links = master0_links;
            run_master(
                master_node_id(0),
                &config,
                &mut links,
                &table0,
                half0.iter().copied(),
                |key, rank| answers.push((key, rank)),
            )
            .map(|stats| (answers, stats))
        }
    });
    let mut answers1 = Vec::new();
    let stats1 = run_master(
        master_node_id(1),
        &config,
        &mut master1_links,
        &table,
        half1.iter().copied(),
        |key, rank| answers1.push((key, rank)),
    )
    .unwrap();
    drop(master1_links);
    let (answers0, stats0) = m0.join().expect("master 0 panicked").unwrap();

    let expected0: Vec<(u32, u64)> = half0.iter().map(|&q| (q, index.rank(q))).collect();
    let expected1: Vec<(u32, u64)> = half1.iter().map(|&q| (q, index.rank(q))).collect();
    assert_eq!(answers0, expected0);
    assert_eq!(answers1, expected1);

    let slave_total: u64 = slave_threads
        .into_iter()
        .map(|t| t.join().expect("slave thread panicked").unwrap().keys)
        .sum();
    assert_eq!(slave_total, stats0.keys_answered + stats1.keys_answered);
    assert_eq!(slave_total, queries.len() as u64);
}

/// Replicated deployment at scale: eight full-index workers, small
/// batches, strict round-robin, correct ordered answers.
#[test]
fn replicated_workers_round_robin() {
    let (index, queries) = build_workload(13, 1 << 14, 1 << 13);
    let workers = spawn_replicated(&index, EngineKind::A, 8).unwrap();
    let (mut links, handles): (Vec<_>, Vec<_>) = workers.into_iter().unzip();
    let mut config = MasterConfig::default();
    config.policy.batch_bytes = 1024; // 256 keys per batch -> 32 batches
    let mut answers = Vec::new();
    let stats = run_replicated(
        master_node_id(0),
        &config,
        &mut links,
        queries.iter().copied(),
        |key, rank| answers.push((key, rank)),
    )
    .unwrap();
    drop(links);
    let expected: Vec<(u32, u64)> = queries.iter().map(|&q| (q, index.rank(q))).collect();
    assert_eq!(answers, expected);
    // 8192 keys / 256 per batch = 32 whole batches, four per worker.
    assert_eq!(stats.per_slave_batches, vec![4u64; 8]);
    for handle in handles {
        assert_eq!(handle.join().expect("worker panicked").unwrap().batches, 4);
    }
}

/// Every reply echoes the batch id of the batch it answers, across ten
/// thousand batches with arbitrary non-sequential ids.
#[test]
fn batch_ids_echo_over_ten_thousand_batches() {
    let (index, _) = build_workload(3, 1 << 12, 1);
    let engine = LookupEngine::for_index(EngineKind::C3, &index).unwrap();
    let (mut master, slave) = loopback_pair(0, master_node_id(0));
    let slave_thread = std::thread::spawn(move || {
        let mut links = [slave];
        run_slave(0, &mut links, &engine, None)
    });
    assert_eq!(
        master.recv_timeout(std::time::Duration::from_secs(5)).unwrap(),
        Some(Message::Ready { node_id: 0 }),
        "slave must announce readiness before anything else"
    );

    // Ids walk a for-this-purpose-random permutation pattern; no two
    // consecutive ids are related.
    let mut seen = HashSet::new();
    let mut id: u32 = 0x9E37_79B9;
    for i in 0..10_000u32 {
        id = id.wrapping_mul(0x0019_660D).wrapping_add(0x3C6E_F35F);
        assert!(seen.insert(id), "generator repeated an id");
        master
            .send(&Message::QueryBatch { node_id: master_node_id(0), batch_id: id, keys: vec![i] })
            .unwrap();
        let reply = master
            .recv_timeout(std::time::Duration::from_secs(5))
            .unwrap()
            .expect("slave went silent");
        match reply {
            Message::ResultBatch { batch_id, ranks, .. } => {
                assert_eq!(batch_id, id, "batch {i} came back under the wrong id");
                assert_eq!(ranks.len(), 1);
            }
            other => panic!("expected a result batch, got {other:?}"),
        }
    }
    master.send(&Message::Shutdown { node_id: master_node_id(0) }).unwrap();
    drop(master);
    slave_thread.join().expect("slave thread panicked").unwrap();
}

/// The same partition slice answers identically under the buffered-tree
/// engine and the binary-search engine, offsets included.
#[test]
fn partition_engines_agree_slice_for_slice() {
    let (index, queries) = build_workload(17, 1 << 14, 1 << 11);
    let (_, partitions) = partition_index(&index, 4).unwrap();
    for part in &partitions {
        let c2 = LookupEngine::for_partition(EngineKind::C2, part).unwrap();
        let c3 = LookupEngine::for_partition(EngineKind::C3, part).unwrap();
        let batch = QueryBatch { batch_id: 0, keys: queries.clone() };
        assert_eq!(
            c2.lookup_batch(&batch).unwrap().ranks,
            c3.lookup_batch(&batch).unwrap().ranks,
            "partition at rank offset {} diverged",
            part.rank_offset()
        );
    }
}

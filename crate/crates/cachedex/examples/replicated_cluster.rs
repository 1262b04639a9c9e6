//! Spread load over workers that each hold the *whole* index: batches
//! round-robin across replicas instead of routing by key range. This is
//! the deployment shape for the single-node methods (a, b) when they get
//! a cluster's worth of hardware.
//!
//!     cargo run --release --example replicated_cluster

use cachedex::cluster::{master_node_id, run_replicated, spawn_replicated, MasterConfig};
use cachedex::engine::EngineKind;
use cachedex::index::SortedIndex;
use cachedex::workload::WorkloadSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = WorkloadSpec::new(7, 1 << 18, 1 << 16);
    let (index, _) = SortedIndex::build(&spec.gen_index_keys())?;
    let queries = spec.gen_query_keys();

    // Three replicas of the buffered-tree engine. Each worker answers any
    // key, so the master deals whole batches in turn, no routing table.
    let workers = spawn_replicated(&index, EngineKind::B, 3)?;
    let (mut links, handles): (Vec<_>, Vec<_>) = workers.into_iter().unzip();

    let mut answered = 0u64;
    let stats = run_replicated(
        master_node_id(0),
        &MasterConfig::default(),
        &mut links,
        queries.iter().copied(),
        |key, rank| {
            assert_eq!(rank, index.rank(key));
            answered += 1;
        },
    )?;
    drop(links);

    println!("{answered} keys answered, batches per worker:");
    assert_eq!(stats.keys_answered, queries.len() as u64);
    for handle in handles {
        let s = handle.join().expect("worker thread panicked")?;
        println!("  worker {}: {:>3} batches, {:>6} keys", s.node_id, s.batches, s.keys);
    }
    Ok(())
}

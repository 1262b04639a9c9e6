//! Run a full master/slave cluster inside one process: the index is
//! partitioned across four slave threads, a master routes each query to
//! the slave owning its key range, and ordered answers stream back.
//!
//!     cargo run --release --example partitioned_cluster

use cachedex::cluster::{master_node_id, run_master, spawn_partitioned, MasterConfig};
use cachedex::engine::EngineKind;
use cachedex::index::SortedIndex;
use cachedex::workload::WorkloadSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = WorkloadSpec::new(7, 1 << 18, 1 << 16);
    let (index, _) = SortedIndex::build(&spec.gen_index_keys())?;
    let queries = spec.gen_query_keys();

    // Four slaves, each holding one quarter of the key space and searching
    // it with binary search (method c3). The links are in-process but carry
    // the same encoded frames TCP would.
    let cluster = spawn_partitioned(&index, EngineKind::C3, 4)?;
    let mut links = cluster.links;

    let mut answered = 0u64;
    let stats = run_master(
        master_node_id(0),
        &MasterConfig::default(),
        &mut links,
        &cluster.table,
        queries.iter().copied(),
        |key, rank| {
            // Answers arrive in query order regardless of which slave
            // produced them or when; spot-check against the local index.
            if answered < 4 {
                println!("  {key:>12} -> rank {rank}");
            }
            assert_eq!(rank, index.rank(key));
            answered += 1;
        },
    )?;
    drop(links);

    println!(
        "master: {} keys in {} batches, {:?}",
        stats.keys_answered, stats.batches_sent, stats.elapsed
    );
    for slave in cluster.handles {
        let s = slave.join().expect("slave thread panicked")?;
        println!(
            "slave {}: {:>6} keys, {:>3} batches, idle {:>5.1}%",
            s.node_id,
            s.keys,
            s.batches,
            s.idle_fraction() * 100.0
        );
    }
    Ok(())
}

//! The same master/slave protocol over real TCP sockets. Slaves listen on
//! localhost ports, the master connects, and the answer stream is checked
//! against an in-process loopback run of the identical workload: the two
//! transports must produce the same answers in the same order.
//!
//!     cargo run --release --example tcp_cluster

use std::net::TcpListener;
use std::thread;

use cachedex::cluster::transport::{tcp_accept, tcp_connect};
use cachedex::cluster::{
    master_node_id, partition_range, run_master, run_slave, spawn_partitioned, MasterConfig,
};
use cachedex::engine::{EngineKind, LookupEngine};
use cachedex::index::SortedIndex;
use cachedex::partition::partition_index;
use cachedex::workload::WorkloadSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = WorkloadSpec::new(7, 1 << 16, 1 << 14);
    let (index, _) = SortedIndex::build(&spec.gen_index_keys())?;
    let queries = spec.gen_query_keys();
    let slaves = 3;

    // Slave threads: each binds a port, builds its partition engine, and
    // serves frames until the master hangs up.
    let (table, partitions) = partition_index(&index, slaves)?;
    let mut addrs = Vec::new();
    let mut slave_threads = Vec::new();
    for (id, part) in partitions.iter().enumerate() {
        let listener = TcpListener::bind("127.0.0.1:0")?; // OS picks the port
        addrs.push(listener.local_addr()?.to_string());
        let engine = LookupEngine::for_partition(EngineKind::C3, part)?;
        let range = partition_range(&table, id);
        slave_threads.push(thread::spawn(move || {
            let mut links = vec![tcp_accept(&listener, master_node_id(0)).expect("accept")];
            run_slave(id as u16, &mut links, &engine, Some(range))
        }));
    }

    // Master side: connect to every slave, stream the queries, collect
    // ordered answers.
    let mut links = Vec::new();
    for (id, addr) in addrs.iter().enumerate() {
        links.push(tcp_connect(addr, id as u16)?);
    }
    let mut tcp_answers = Vec::new();
    run_master(
        master_node_id(0),
        &MasterConfig::default(),
        &mut links,
        &table,
        queries.iter().copied(),
        |key, rank| tcp_answers.push((key, rank)),
    )?;
    drop(links);
    for t in slave_threads {
        t.join().expect("slave thread panicked")?;
    }

    // Reference run over in-process loopback links.
    let cluster = spawn_partitioned(&index, EngineKind::C3, slaves)?;
    let mut links = cluster.links;
    let mut loopback_answers = Vec::new();
    run_master(
        master_node_id(0),
        &MasterConfig::default(),
        &mut links,
        &cluster.table,
        queries.iter().copied(),
        |key, rank| loopback_answers.push((key, rank)),
    )?;
    drop(links);
    for handle in cluster.handles {
        handle.join().expect("slave thread panicked")?;
    }

    assert_eq!(tcp_answers, loopback_answers, "transports must be interchangeable");
    println!(
        "{} answers over TCP ({} slaves) match the loopback run pair for pair",
        tcp_answers.len(),
        slaves
    );
    Ok(())
}

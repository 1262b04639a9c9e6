//! Build an index from the deterministic workload, snapshot it to disk,
//! reload it, and answer rank queries with the plain tree-descent engine.
//!
//!     cargo run --release --example build_and_search

use std::io::Cursor;

use cachedex::engine::{EngineKind, LookupEngine};
use cachedex::index::SortedIndex;
use cachedex::workload::WorkloadSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // 2^16 distinct keys, 8 queries, all derived from one seed: anyone
    // running this example sees these exact numbers.
    let spec = WorkloadSpec::new(7, 1 << 16, 8);
    let raw = spec.gen_index_keys();
    let (index, duplicates) = SortedIndex::build(&raw)?;
    println!("index: {} keys ({duplicates} duplicates dropped)", index.len());

    // Snapshots round-trip bit-for-bit; a file works the same way.
    let mut snapshot = Vec::new();
    index.write_snapshot(&mut snapshot)?;
    let reloaded = SortedIndex::read_snapshot(&mut Cursor::new(&snapshot))?;
    assert_eq!(reloaded.keys(), index.keys());
    println!("snapshot: {} bytes, reload verified", snapshot.len());

    // Rank = how many index keys are ≤ the query. The engine's answer and
    // the index's own binary search must always agree.
    let engine = LookupEngine::for_index(EngineKind::A, &index)?;
    println!("\n{:>12} {:>8}", "query", "rank");
    for query in spec.gen_query_keys() {
        let rank = engine.lookup_one(query);
        assert_eq!(rank, index.rank(query));
        println!("{query:>12} {rank:>8}");
    }
    Ok(())
}

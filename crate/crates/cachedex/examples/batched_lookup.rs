//! Compare one-at-a-time tree descent against buffered batch traversal
//! on the same index, and show that batching changes the clock, never
//! the answers.
//!
//!     cargo run --release --example batched_lookup

use std::time::Instant;

use cachedex::engine::{EngineKind, LookupEngine, QueryBatch};
use cachedex::index::SortedIndex;
use cachedex::workload::WorkloadSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = WorkloadSpec::new(7, 1 << 20, 1 << 20);
    let (index, _) = SortedIndex::build(&spec.gen_index_keys())?;
    let queries = spec.gen_query_keys();

    // Method a descends the n-ary tree once per key: every key pays the
    // full cache-miss bill for the levels that fall out of cache between
    // lookups. Method b routes a whole batch through per-subtree buffers,
    // so each cache-resident subtree is traversed once per batch instead
    // of once per key.
    let one_at_a_time = LookupEngine::for_index(EngineKind::A, &index)?;
    let buffered = LookupEngine::for_index(EngineKind::B, &index)?;

    let batch = QueryBatch { batch_id: 0, keys: queries.clone() };

    let start = Instant::now();
    let ranks_a = one_at_a_time.lookup_batch(&batch)?.ranks;
    let time_a = start.elapsed();

    let start = Instant::now();
    let ranks_b = buffered.lookup_batch(&batch)?.ranks;
    let time_b = start.elapsed();

    assert_eq!(ranks_a, ranks_b, "strategies must agree key for key");
    let keys = queries.len() as f64;
    println!("{} keys, identical answers", queries.len());
    println!("  tree descent : {time_a:>10.2?}  ({:>6.1} ns/key)", time_a.as_nanos() as f64 / keys);
    println!("  buffered     : {time_b:>10.2?}  ({:>6.1} ns/key)", time_b.as_nanos() as f64 / keys);
    Ok(())
}

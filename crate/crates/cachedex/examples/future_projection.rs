//! Project the model forward: CPUs double every 18 months, networks every
//! 36, memory bandwidth grows 20%/year, and memory latency stands still.
//! Watch the gap between the buffered single-node method and the
//! partitioned cluster widen year over year.
//!
//!     cargo run --release --example future_projection

use cachedex::model::{ModelRun, ScalingAssumptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let run = ModelRun::reference();
    let scaling = ScalingAssumptions::default();
    let rows = run.project(5, &scaling)?;

    println!(
        "{:>4} {:>7} {:>14} {:>12} {:>14} {:>8}",
        "year", "method", "per-key (ns)", "total (s)", "normalized (s)", "b/c3"
    );
    for row in &rows {
        println!(
            "{:>4} {:>7} {:>14.4} {:>12.4} {:>14.6} {:>8.3}",
            row.year,
            row.method.to_string(),
            row.per_key_ns,
            row.total_s,
            row.normalized_s,
            row.ratio_b_over_c3
        );
    }

    // The ratio column is the story: memory latency is the one resource
    // that does not improve, and the cluster method is the one that pays
    // for it least.
    let first = rows.first().expect("projection is never empty").ratio_b_over_c3;
    let last = rows.last().expect("projection is never empty").ratio_b_over_c3;
    println!("\ncluster advantage grows {first:.2}x -> {last:.2}x over five years");
    Ok(())
}

//! Walk through the analytical cost model on the reference machine: the
//! expected-occupancy function, the self-interference threshold, the
//! steady-state miss rate, and the per-key cost of each headline method.
//!
//!     cargo run --release --example cost_model

use cachedex::model::{
    cost_method_a, solve_q0, steady_misses_per_lookup, subtree_plan, xd, MachineProfile, ModelRun,
    TreeShape,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let profile = MachineProfile::reference();
    let shape = TreeShape::reference();

    // xd(λ, q): how many of a level's λ cache lines q random lookups are
    // expected to touch. It saturates toward λ — the whole level — as q
    // grows.
    println!("expected lines touched at the 8192-line level:");
    for q in [1u64, 100, 8192, 81920] {
        println!("  q = {q:>6}: {:>8.1} of 8192", xd(8192.0, q as f64)?);
    }

    // q₀ is the query rate at which a lookup's own earlier levels start
    // evicting the lines it needs next — the tree stops fitting.
    let q0 = solve_q0(&shape, profile.c2_bytes, profile.b2_bytes);
    let misses = steady_misses_per_lookup(&shape, profile.c2_bytes, profile.b2_bytes, q0);
    println!("\nself-interference threshold q0 = {q0:.1} lookups");
    println!("steady-state outer-cache misses per lookup: {misses:.3} of {} levels", shape.levels());
    println!("plain descent (method a): {:.1} ns/key", cost_method_a(&profile, &shape) * 1e9);

    // The buffered method carves the tree into subtrees that fit in cache.
    let plan = subtree_plan(&shape, profile.c2_bytes, profile.b2_bytes);
    println!(
        "\nbuffered plan: {}-level subtrees in {} layers, {} leaf subtrees",
        plan.subtree_levels, plan.layers, plan.leaf_subtrees
    );

    // Full evaluation at the reference workload: 2^23 keys, 128 KiB
    // batches, single-node methods normalized by the 11-node count.
    println!("\nreference workload predictions:");
    println!("{:>8} {:>14} {:>10} {:>14}", "method", "per-key (ns)", "total (s)", "normalized (s)");
    for cost in ModelRun::reference().evaluate()? {
        println!(
            "{:>8} {:>14.4} {:>10.4} {:>14.6}",
            cost.method.to_string(),
            cost.per_key_s * 1e9,
            cost.total_s,
            cost.normalized_s
        );
    }
    Ok(())
}

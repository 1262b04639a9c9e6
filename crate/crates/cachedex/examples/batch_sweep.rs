//! Measure how batch size moves cluster throughput: the experiment
//! harness sweeps the partitioned binary-search method across batch
//! sizes and emits the standard measurement CSV.
//!
//!     cargo run --release --example batch_sweep

use cachedex::engine::EngineKind;
use cachedex::experiment::{run_experiment, ExperimentSpec};
use cachedex::report::emit_measurements;
use cachedex::workload::WorkloadSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Quarter-scale workload so the example finishes in seconds; the
    // shape of the curve is the same at 2^20.
    let workload = WorkloadSpec::new(7, 1 << 18, 1 << 18);
    let spec = ExperimentSpec {
        methods: vec![EngineKind::C3],
        batch_bytes_list: vec![8192, 32768, 131072, 524288],
        nodes: 5, // one master + four slaves
        repetitions: 3,
        normalize_divisor: 11.0,
    };

    // Every cell is oracle-checked before it is timed; the clock covers
    // query routing through answer reassembly, never index construction.
    let rows = run_experiment(&spec, &workload)?;
    print!("{}", emit_measurements(&rows));

    eprintln!();
    for pair in rows.windows(2) {
        let (small, large) = (&pair[0], &pair[1]);
        eprintln!(
            "{} KiB -> {} KiB batches: throughput x{:.2}",
            small.batch_bytes / 1024,
            large.batch_bytes / 1024,
            large.throughput_keys_per_s / small.throughput_keys_per_s
        );
    }
    Ok(())
}

//! The benchmark harness: sweeps (method × batch size) cells, checks each
//! configuration for correctness against a scan oracle before any clock
//! starts, then reports the median of repeated timed passes.
//!
//! Timing protocol per cell:
//!
//! 1. **Correctness gate.** A 10⁴-key sample of the query stream runs
//!    through the exact deployment being timed and is compared against a
//!    linear scan of the raw (pre-build) key array. A mismatch aborts the
//!    whole experiment naming the method and batch size — a fast wrong
//!    answer must never make it into a results table.
//! 2. **Warm-up.** One untimed pass populates caches, faults pages, and
//!    spins up threads.
//! 3. **Timed passes.** `repetitions` passes under a monotonic clock;
//!    the reported figure is the median, which shrugs off a stray
//!    scheduler hiccup better than the mean. Index construction is never
//!    inside the clock — building is a separate subcommand's job.
//!
//! Single-node rows (methods `a`/`b`) run the engine in-process; their
//! `normalized_s` is elapsed time divided by the configured divisor, the
//! convention for comparing one node against an n-node cluster price
//! point. Partitioned rows (`c1`/`c2`/`c3`) run a real master/slave
//! cluster over in-process links and report elapsed time unscaled, plus
//! the mean fraction of time the slaves sat idle.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::cluster::{
    spawn_partitioned, ClusterError, MasterConfig, run_master,
};
use crate::config::Config;
use crate::engine::{EngineError, EngineKind, LookupEngine, QueryBatch};
use crate::index::{BuildError, SortedIndex};
use crate::report::MeasurementRow;
use crate::workload::WorkloadSpec;

/// Sample size for the pre-timing correctness gate.
const ORACLE_SAMPLE: usize = 10_000;

/// One sweep definition: which strategies, which batch sizes, how many
/// nodes the cluster rows get, and how single-node rows are normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// Strategies to measure.
    pub methods: Vec<EngineKind>,
    /// Batch sizes in bytes of keys, strictly ascending.
    pub batch_bytes_list: Vec<usize>,
    /// Total node count for partitioned rows: one master plus
    /// `nodes - 1` slaves.
    pub nodes: usize,
    /// Timed passes per cell; the median is reported.
    pub repetitions: usize,
    /// Divisor applied to single-node elapsed time in `normalized_s`.
    pub normalize_divisor: f64,
}

impl ExperimentSpec {
    /// Builds the spec a config file describes.
    pub fn from_config(config: &Config) -> Self {
        Self {
            methods: config.experiment.methods.clone(),
            batch_bytes_list: config.experiment.batch_bytes.clone(),
            nodes: config.topology.masters + config.topology.slaves,
            repetitions: config.experiment.repetitions,
            normalize_divisor: config.experiment.normalize,
        }
    }

    /// Rejects grids that cannot produce a meaningful table.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.methods.is_empty() {
            return Err(ExperimentError::Invalid("no methods selected".into()));
        }
        if self.batch_bytes_list.is_empty() {
            return Err(ExperimentError::Invalid("no batch sizes selected".into()));
        }
        if self.batch_bytes_list[0] < 4 {
            return Err(ExperimentError::Invalid("batch sizes must hold at least one key".into()));
        }
        if self.batch_bytes_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ExperimentError::Invalid("batch sizes must be strictly ascending".into()));
        }
        if self.repetitions == 0 {
            return Err(ExperimentError::Invalid("repetitions must be at least 1".into()));
        }
        if !(self.normalize_divisor > 0.0) {
            return Err(ExperimentError::Invalid("normalize divisor must be positive".into()));
        }
        if self.methods.iter().any(|m| m.is_partitioned()) && self.nodes < 2 {
            return Err(ExperimentError::Invalid(
                "partitioned methods need at least 2 nodes (1 master + 1 slave)".into(),
            ));
        }
        Ok(())
    }
}

/// Harness failures.
#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment: {0}")]
    Invalid(String),
    /// The correctness gate tripped: this cell's deployment disagrees
    /// with the scan oracle, so no timing was taken.
    #[error(
        "correctness check failed for method {method} at batch_bytes {batch_bytes}: \
         key {key} expected rank {expected}, got {got}"
    )]
    CorrectnessFailure { method: EngineKind, batch_bytes: usize, key: u32, expected: u64, got: u64 },
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

/// Outcome of a single pass over the full query stream.
struct PassOutcome {
    elapsed: Duration,
    /// Mean slave idle fraction (0 for single-node passes).
    idle_fraction: f64,
}

/// Runs the sweep and returns one measurement row per (method, batch
/// size) cell, methods outermost, batch sizes ascending within.
pub fn run_experiment(
    spec: &ExperimentSpec,
    workload: &WorkloadSpec,
) -> Result<Vec<MeasurementRow>, ExperimentError> {
    spec.validate()?;
    let raw_keys = workload.gen_index_keys();
    let (index, _) = SortedIndex::build(&raw_keys)?;
    let queries = workload.gen_query_keys();
    let sample = &queries[..queries.len().min(ORACLE_SAMPLE)];
    let expected = scan_oracle(&raw_keys, sample);

    let mut rows = Vec::with_capacity(spec.methods.len() * spec.batch_bytes_list.len());
    for &method in &spec.methods {
        // Build once per method and reuse across batch sizes: construction
        // is excluded from timing by design.
        let local_engine = if method.is_partitioned() {
            None
        } else {
            Some(LookupEngine::for_index(method, &index)?)
        };
        for &batch_bytes in &spec.batch_bytes_list {
            // 1. Correctness gate, before any clock.
            let mut answered = Vec::with_capacity(sample.len());
            one_pass(method, batch_bytes, spec, &index, local_engine.as_ref(), sample, &mut |k, r| {
                answered.push((k, r));
            })?;
            for ((&key, &want), &(got_key, got_rank)) in
                sample.iter().zip(&expected).zip(&answered)
            {
                if key != got_key || want != got_rank {
                    return Err(ExperimentError::CorrectnessFailure {
                        method,
                        batch_bytes,
                        key,
                        expected: want,
                        got: got_rank,
                    });
                }
            }

            // 2. Warm-up, discarded.
            let mut sink = Checksum::sink();
            one_pass(method, batch_bytes, spec, &index, local_engine.as_ref(), &queries, &mut sink)?;

            // 3. Timed passes.
            let mut elapsed = Vec::with_capacity(spec.repetitions);
            let mut idle_sum = 0.0;
            for _ in 0..spec.repetitions {
                let pass = one_pass(
                    method,
                    batch_bytes,
                    spec,
                    &index,
                    local_engine.as_ref(),
                    &queries,
                    &mut sink,
                )?;
                elapsed.push(pass.elapsed);
                idle_sum += pass.idle_fraction;
            }
            let elapsed_ns = median_ns(&mut elapsed);
            let elapsed_s = elapsed_ns as f64 * 1e-9;
            let normalized_s = if method.is_partitioned() {
                elapsed_s
            } else {
                elapsed_s / spec.normalize_divisor
            };
            rows.push(MeasurementRow {
                method,
                batch_bytes: batch_bytes as u64,
                total_keys: queries.len() as u64,
                elapsed_ns,
                normalized_s,
                throughput_keys_per_s: queries.len() as f64 / elapsed_s,
                slave_idle_fraction: idle_sum / spec.repetitions as f64,
            });
        }
    }
    Ok(rows)
}

/// Runs `queries` through the deployment a cell calls for, delivering
/// every (key, rank) pair to `sink` in query order. Cluster setup
/// (partitioning, thread spawn, readiness handshake) happens before the
/// clock starts; the clock covers query distribution through final
/// answer collection.
fn one_pass(
    method: EngineKind,
    batch_bytes: usize,
    spec: &ExperimentSpec,
    index: &SortedIndex,
    local_engine: Option<&LookupEngine>,
    queries: &[u32],
    sink: &mut dyn FnMut(u32, u64),
) -> Result<PassOutcome, ExperimentError> {
    if let Some(engine) = local_engine {
        return local_pass(engine, batch_bytes, queries, sink);
    }
    let slaves = spec.nodes - 1;
    let crate::cluster::LocalCluster { mut links, table, handles } =
        spawn_partitioned(index, method, slaves)?;
    let mut config = MasterConfig::default();
    config.policy.batch_bytes = batch_bytes;
    let start = Instant::now();
    run_master(
        crate::cluster::master_node_id(0),
        &config,
        &mut links,
        &table,
        queries.iter().copied(),
        sink,
    )?;
    let elapsed = start.elapsed();
    let mut stats = Vec::with_capacity(handles.len());
    for handle in handles {
        stats.push(handle.join().expect("slave thread panicked")?);
    }
    let idle_fraction =
        stats.iter().map(|s| s.idle_fraction()).sum::<f64>() / stats.len().max(1) as f64;
    Ok(PassOutcome { elapsed, idle_fraction })
}

/// Single-node pass: the whole query stream through one engine, batched
/// exactly as a master would batch it.
fn local_pass(
    engine: &LookupEngine,
    batch_bytes: usize,
    queries: &[u32],
    sink: &mut dyn FnMut(u32, u64),
) -> Result<PassOutcome, ExperimentError> {
    let keys_per_batch = (batch_bytes / 4).max(1);
    let start = Instant::now();
    for (i, chunk) in queries.chunks(keys_per_batch).enumerate() {
        let batch = QueryBatch { batch_id: i as u32, keys: chunk.to_vec() };
        let result = engine.lookup_batch(&batch)?;
        for (&key, &rank) in chunk.iter().zip(&result.ranks) {
            sink(key, rank);
        }
    }
    let elapsed = start.elapsed();
    Ok(PassOutcome { elapsed, idle_fraction: 0.0 })
}

/// Rank oracle: one linear scan over the raw (unsorted, pre-build) key
/// array, counting keys ≤ each sample query. Shares no code or data
/// structure with the engines — the raw array never touches
/// [`SortedIndex`]. The counting uses a difference array over the sorted
/// sample so the scan stays a single pass.
pub fn scan_oracle(raw_keys: &[u32], sample: &[u32]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..sample.len()).collect();
    order.sort_by_key(|&i| sample[i]);
    let sorted: Vec<u32> = order.iter().map(|&i| sample[i]).collect();
    // diff[p] counts raw keys whose smallest covering sample position is p:
    // key k is ≤ sample value v exactly when v ≥ k.
    let mut diff = vec![0u64; sample.len() + 1];
    for &k in raw_keys {
        let pos = sorted.partition_point(|&q| q < k);
        diff[pos] += 1;
    }
    let mut expected = vec![0u64; sample.len()];
    let mut acc = 0u64;
    for (j, &original) in order.iter().enumerate() {
        acc += diff[j];
        expected[original] = acc;
    }
    expected
}

/// Median of the recorded pass times, in nanoseconds. Even counts take
/// the mean of the two central values.
fn median_ns(elapsed: &mut [Duration]) -> u64 {
    elapsed.sort();
    let mid = elapsed.len() / 2;
    if elapsed.len() % 2 == 1 {
        elapsed[mid].as_nanos() as u64
    } else {
        ((elapsed[mid - 1].as_nanos() + elapsed[mid].as_nanos()) / 2) as u64
    }
}

/// Order-sensitive FNV-1a digest over (key, rank) pairs. Keeps the timed
/// passes honest — the compiler cannot discard answer production — and
/// doubles as the cheap cross-method determinism probe in tests.
pub(crate) struct Checksum(u64);

impl Checksum {
    pub(crate) fn new() -> Self {
        Self(0xcbf29ce484222325) // FNV offset basis
    }

    pub(crate) fn push(&mut self, key: u32, rank: u64) {
        const PRIME: u64 = 0x100000001b3;
        self.0 = (self.0 ^ key as u64).wrapping_mul(PRIME);
        self.0 = (self.0 ^ rank).wrapping_mul(PRIME);
    }

    pub(crate) fn finish(&self) -> u64 {
        self.0
    }

    /// A sink closure that folds pairs into a digest nobody reads: its
    /// only job is to anchor the answers as observable effects.
    fn sink() -> impl FnMut(u32, u64) {
        let mut sum = Checksum::new();
        move |key, rank| {
            sum.push(key, rank);
            std::hint::black_box(sum.finish());
        }
    }
}

//! Cache-conscious index lookup over a large sorted key set, five ways.
//!
//! The core problem: answer *rank* queries — "how many index keys are ≤ q?" —
//! against a large, static, sorted set of 32-bit keys, fast enough that the
//! memory hierarchy (not the comparison count) is the bottleneck. The crate
//! implements five lookup strategies over the same index and makes them
//! race each other, both for real (wall-clock harness, single node or a
//! master/worker cluster) and on paper (an analytical cache/network cost
//! model):
//!
//! | code | strategy |
//! |------|----------|
//! | `a`  | one-at-a-time descent of a cache-line-node n-ary tree |
//! | `b`  | batched descent that routes keys through per-subtree buffers so each cache-resident subtree is traversed in one pass |
//! | `c1` | index partitioned across worker nodes, each worker searching its slice with an n-ary tree |
//! | `c2` | partitioned, each worker using a buffered tree sized to half its L1 cache |
//! | `c3` | partitioned, each worker running binary search over its sorted slice |
//!
//! The `c*` strategies run on a master/worker runtime: a master routes each
//! query through a sorted delimiter table to the worker owning that key range,
//! batches routed keys into wire frames, and reassembles ordered results. The
//! runtime speaks one fixed binary frame format over two interchangeable
//! transports (in-process loopback and TCP), so a single-process test run and
//! a five-process cluster produce byte-identical answer streams.
//!
//! Start with the `examples/` directory — each major capability has a runnable
//! example — or with the `cachedex` binary (`build`, `run`, `serve`, `model`,
//! `project`, `verify` subcommands).
//!
//! Module map:
//!
//! - [`index`]: the sorted key array, rank semantics, snapshot file format.
//! - [`tree`]: cache-line-node n-ary search tree with implicit child
//!   addressing and sentinel padding.
//! - [`buffered`]: subtree decomposition and buffered batch traversal.
//! - [`partition`]: equal-size partitioning and the delimiter routing table.
//! - [`engine`]: the uniform lookup-engine facade over all five strategies.
//! - [`cluster`]: wire format, transports, master/worker/balancer loops.
//! - [`model`]: analytical cost model (cache-line occupancy, steady-state
//!   miss rates, per-key cost equations, future-trend projection).
//! - [`workload`]: deterministic seeded key-stream generation.
//! - [`experiment`]: the measurement harness behind `cachedex run`.
//! - [`report`]: CSV emission and parsing for measurements and answers.
//! - [`config`]: the TOML config file shared by the CLI, runtime, and model.

pub mod buffered;
pub mod cluster;
pub mod config;
pub mod engine;
pub mod experiment;
pub mod index;
pub mod model;
pub mod partition;
pub mod report;
pub mod tree;
pub mod workload;

pub use config::Config;
pub use engine::{EngineKind, LookupEngine, QueryBatch, ResultBatch};
pub use index::{Key, SortedIndex};

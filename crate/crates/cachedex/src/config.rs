//! Structured-text (TOML) configuration shared by the cluster runtime, the
//! cost model, and the command-line driver.
//!
//! Every section is optional and every field has a default, so a config
//! file states only what it changes. The defaults are desk-scale — 2²⁰
//! keys, 4 in-process slaves — so the full suite runs in minutes on one
//! machine; the reference experiment geometry (2²³ keys, 11 nodes, the
//! late-90s machine profile) ships as `configs/reference.toml`.
//!
//! Unknown keys are rejected rather than ignored: a typo that silently
//! reverts a knob to its default is the worst failure mode a benchmark
//! config can have.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::BatchingPolicy;
use crate::engine::EngineKind;
use crate::model::{MachineProfile, ModelError, ScalingAssumptions, TreeShape};
use crate::workload::WorkloadSpec;

/// Configuration errors.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: String, source: toml::de::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Top-level configuration document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub topology: TopologySection,
    pub batch: BatchSection,
    pub engine: EngineSection,
    pub transport: TransportSection,
    pub workload: WorkloadSection,
    pub experiment: ExperimentSection,
    pub model: ModelSection,
}

/// `[topology]`: node counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologySection {
    /// Slave/worker count.
    pub slaves: usize,
    /// Master count (partitioned topology).
    pub masters: usize,
}

impl Default for TopologySection {
    fn default() -> Self {
        Self { slaves: 4, masters: 1 }
    }
}

/// `[batch]`: batching policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatchSection {
    /// Flush threshold in bytes of keys.
    pub bytes: usize,
    /// Maximum key age before a partial batch flushes, milliseconds.
    pub timeout_ms: u64,
}

impl Default for BatchSection {
    fn default() -> Self {
        Self { bytes: 128 * 1024, timeout_ms: 10 }
    }
}

/// `[engine]`: which lookup strategy to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineSection {
    pub kind: EngineKind,
}

impl Default for EngineSection {
    fn default() -> Self {
        Self { kind: EngineKind::C3 }
    }
}

/// Transport selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    Loopback,
    Tcp,
}

/// `[transport]`: how nodes talk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransportSection {
    pub kind: TransportKind,
    /// Listen address for a served slave role (`host:port`).
    pub listen: Option<String>,
    /// Slave addresses, in partition order, for a served master role.
    pub peers: Vec<String>,
}

impl Default for TransportSection {
    fn default() -> Self {
        Self { kind: TransportKind::Loopback, listen: None, peers: Vec::new() }
    }
}

/// `[workload]`: the deterministic key streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadSection {
    pub seed: u64,
    /// Distinct keys the index is built from.
    pub index_keys: usize,
    /// Keys in the query stream.
    pub query_keys: usize,
}

impl Default for WorkloadSection {
    fn default() -> Self {
        Self { seed: 7, index_keys: 1 << 20, query_keys: 1 << 20 }
    }
}

/// `[experiment]`: the sweep grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    /// Strategies to measure.
    pub methods: Vec<EngineKind>,
    /// Batch sizes to sweep, bytes, ascending.
    pub batch_bytes: Vec<usize>,
    /// Timed passes per cell; the median is reported.
    pub repetitions: usize,
    /// Divisor applied to single-node (a/b) elapsed times in reports.
    pub normalize: f64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            methods: EngineKind::ALL.to_vec(),
            batch_bytes: vec![128 * 1024],
            repetitions: 3,
            normalize: 11.0,
        }
    }
}

/// `[model]`: machine parameters (flat keys) plus shape and scaling
/// subtables. Shared by `model` and `project`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// Memory bandwidth, MiB/s.
    pub w1_mib_per_s: f64,
    /// Network bandwidth, MiB/s.
    pub w2_mib_per_s: f64,
    /// Outer cache size, KiB.
    pub c2_kib: u64,
    /// Inner cache size, KiB.
    pub c1_kib: u64,
    /// Outer cache line, bytes.
    pub b2_bytes: u64,
    /// Inner cache line, bytes.
    pub b1_bytes: u64,
    /// Outer-miss penalty, nanoseconds.
    pub b2_miss_ns: f64,
    /// Inner-miss penalty, nanoseconds.
    pub b1_miss_ns: f64,
    /// Per-node comparison cost, nanoseconds.
    pub comp_ns: f64,
    /// Master dispatch cost, nanoseconds. When absent, defaults to a
    /// binary search over the slave delimiters:
    /// `ceil(log2(slaves+1))` comparisons.
    pub dispatch_ns: Option<f64>,
    /// Overlap network transfer with computation.
    pub overlap_communication: bool,
    pub shape: ShapeSection,
    pub scaling: ScalingSection,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            w1_mib_per_s: 647.0,
            w2_mib_per_s: 138.0,
            c2_kib: 512,
            c1_kib: 16,
            b2_bytes: 32,
            b1_bytes: 32,
            b2_miss_ns: 110.0,
            b1_miss_ns: 16.25,
            comp_ns: 30.0,
            dispatch_ns: Some(0.0),
            overlap_communication: true,
            shape: ShapeSection::default(),
            scaling: ScalingSection::default(),
        }
    }
}

/// `[model.shape]`: complete-tree geometry for the cost equations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapeSection {
    pub levels: u32,
    pub slave_levels: u32,
    pub fanout: u64,
    pub lines_per_node: u64,
    pub line_bytes: u64,
}

impl Default for ShapeSection {
    fn default() -> Self {
        Self { levels: 7, slave_levels: 6, fanout: 8, lines_per_node: 2, line_bytes: 32 }
    }
}

/// `[model.scaling]`: technology growth rates for projections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingSection {
    pub cpu_doubling_months: f64,
    pub network_doubling_months: f64,
    pub memory_bw_growth_per_year: f64,
    pub memory_latency_growth: f64,
}

impl Default for ScalingSection {
    fn default() -> Self {
        let d = ScalingAssumptions::default();
        Self {
            cpu_doubling_months: d.cpu_doubling_months,
            network_doubling_months: d.network_doubling_months,
            memory_bw_growth_per_year: d.memory_bw_growth_per_year,
            memory_latency_growth: d.memory_latency_growth,
        }
    }
}

const MIB: f64 = 1024.0 * 1024.0;
const NS: f64 = 1e-9;

impl Config {
    /// Loads and validates a config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config: Config = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Parses a config from TOML text (tests, inline overrides).
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Config = toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: "<inline>".into(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Cross-field checks beyond what the type system enforces.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.topology.slaves == 0 || self.topology.masters == 0 {
            return Err(ConfigError::Invalid(
                "topology needs at least one master and one slave".into(),
            ));
        }
        if self.workload.index_keys == 0 || self.workload.query_keys == 0 {
            return Err(ConfigError::Invalid("workload key counts must be positive".into()));
        }
        if self.experiment.methods.is_empty() {
            return Err(ConfigError::Invalid("experiment needs at least one method".into()));
        }
        if self.experiment.batch_bytes.is_empty() {
            return Err(ConfigError::Invalid("experiment needs at least one batch size".into()));
        }
        if self.experiment.batch_bytes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ConfigError::Invalid(
                "experiment batch sizes must be strictly ascending".into(),
            ));
        }
        if self.experiment.repetitions == 0 {
            return Err(ConfigError::Invalid("repetitions must be at least 1".into()));
        }
        if !(self.experiment.normalize > 0.0) {
            return Err(ConfigError::Invalid("normalize divisor must be positive".into()));
        }
        self.machine_profile()?.validate()?;
        self.tree_shape()?;
        Ok(())
    }

    /// The machine profile the `[model]` section describes, with the
    /// dispatch-cost default applied from the topology.
    pub fn machine_profile(&self) -> Result<MachineProfile, ConfigError> {
        let m = &self.model;
        let comp = m.comp_ns * NS;
        let dispatch = m
            .dispatch_ns
            .map(|ns| ns * NS)
            .unwrap_or_else(|| MachineProfile::default_dispatch_cost(self.topology.slaves as u32, comp));
        let profile = MachineProfile {
            w1_bytes_per_s: m.w1_mib_per_s * MIB,
            w2_bytes_per_s: m.w2_mib_per_s * MIB,
            c2_bytes: m.c2_kib * 1024,
            c1_bytes: m.c1_kib * 1024,
            b2_bytes: m.b2_bytes,
            b1_bytes: m.b1_bytes,
            b2_miss_penalty_s: m.b2_miss_ns * NS,
            b1_miss_penalty_s: m.b1_miss_ns * NS,
            comp_cost_node_s: comp,
            dispatch_cost_s: dispatch,
            num_masters: self.topology.masters as u32,
            num_slaves: self.topology.slaves as u32,
            overlap_communication: m.overlap_communication,
        };
        profile.validate()?;
        Ok(profile)
    }

    /// The tree shape the `[model.shape]` section describes.
    pub fn tree_shape(&self) -> Result<TreeShape, ConfigError> {
        let s = &self.model.shape;
        Ok(TreeShape::perfect(
            s.levels,
            s.fanout,
            s.lines_per_node,
            s.line_bytes,
            s.slave_levels,
        )?)
    }

    /// The scaling assumptions the `[model.scaling]` section describes.
    pub fn scaling_assumptions(&self) -> ScalingAssumptions {
        let s = &self.model.scaling;
        ScalingAssumptions {
            cpu_doubling_months: s.cpu_doubling_months,
            network_doubling_months: s.network_doubling_months,
            memory_bw_growth_per_year: s.memory_bw_growth_per_year,
            memory_latency_growth: s.memory_latency_growth,
        }
    }

    /// The workload generator the `[workload]` section describes.
    pub fn workload_spec(&self) -> WorkloadSpec {
        WorkloadSpec::new(self.workload.seed, self.workload.index_keys, self.workload.query_keys)
    }

    /// The batching policy the `[batch]` section describes.
    pub fn batching_policy(&self) -> BatchingPolicy {
        BatchingPolicy {
            batch_bytes: self.batch.bytes,
            flush_timeout: Duration::from_millis(self.batch.timeout_ms),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_desk_scale() {
        let config = Config::default();
        assert_eq!(config.topology.slaves, 4);
        assert_eq!(config.workload.query_keys, 1 << 20);
        assert_eq!(config.batch.bytes, 128 * 1024);
        assert_eq!(config.experiment.methods.len(), 5);
        config.validate().unwrap();
    }

    #[test]
    fn empty_toml_is_all_defaults() {
        assert_eq!(Config::from_toml("").unwrap(), Config::default());
    }

    #[test]
    fn sections_override_independently() {
        let config = Config::from_toml(
            r#"
            [topology]
            slaves = 10

            [engine]
            kind = "b"

            [experiment]
            methods = ["a", "c3"]
            batch_bytes = [8192, 131072, 4194304]
            "#,
        )
        .unwrap();
        assert_eq!(config.topology.slaves, 10);
        assert_eq!(config.topology.masters, 1, "untouched field keeps default");
        assert_eq!(config.engine.kind, EngineKind::B);
        assert_eq!(config.experiment.methods, vec![EngineKind::A, EngineKind::C3]);
        assert_eq!(config.batch.bytes, 128 * 1024);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = Config::from_toml("[batch]\nbytez = 4096\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { .. }), "got {err:?}");
    }

    #[test]
    fn validation_catches_bad_sweeps() {
        assert!(Config::from_toml("[experiment]\nbatch_bytes = []\n").is_err());
        assert!(Config::from_toml("[experiment]\nbatch_bytes = [8192, 8192]\n").is_err());
        assert!(Config::from_toml("[experiment]\nbatch_bytes = [16384, 8192]\n").is_err());
        assert!(Config::from_toml("[experiment]\nrepetitions = 0\n").is_err());
        assert!(Config::from_toml("[topology]\nslaves = 0\n").is_err());
    }

    #[test]
    fn machine_profile_converts_units() {
        let config = Config::from_toml(
            r#"
            [topology]
            slaves = 10
            "#,
        )
        .unwrap();
        let profile = config.machine_profile().unwrap();
        assert_eq!(profile.w1_bytes_per_s, 647.0 * 1024.0 * 1024.0);
        assert_eq!(profile.c2_bytes, 512 * 1024);
        assert_eq!(profile.b2_miss_penalty_s, 110e-9);
        assert_eq!(profile.num_slaves, 10);
        assert_eq!(profile.dispatch_cost_s, 0.0, "explicit default is calibrated to zero");
    }

    #[test]
    fn omitted_dispatch_cost_uses_log_formula() {
        // The stock default pins dispatch to the calibrated zero, so the
        // uncalibrated fallback is reached by clearing the field.
        let mut config = Config::default();
        config.topology.slaves = 10;
        config.model.dispatch_ns = None;
        let profile = config.machine_profile().unwrap();
        // ceil(log2(11)) = 4 comparisons at 30 ns, rounded as the
        // conversion rounds (comp_ns × 1e-9, then × 4).
        assert_eq!(profile.dispatch_cost_s, 4.0 * (30.0 * 1e-9));
    }

    #[test]
    fn shape_section_builds_reference_geometry() {
        let shape = Config::default().tree_shape().unwrap();
        assert_eq!(shape.levels(), 7);
        assert_eq!(shape.slave_levels(), 6);
        assert_eq!(shape.lambda()[6], 524288.0);
    }

    #[test]
    fn round_trips_through_toml() {
        let config = Config::default();
        let text = toml::to_string(&config).unwrap();
        let back = Config::from_toml(&text).unwrap();
        assert_eq!(back, config);
    }
}

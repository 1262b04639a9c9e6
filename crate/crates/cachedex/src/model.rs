//! Analytical cache/network cost model for the lookup strategies.
//!
//! The model predicts per-key lookup cost from machine parameters and tree
//! geometry instead of measuring it. Its pieces:
//!
//! 1. **Cache-line occupancy** [`xd`]: the expected number of distinct cache
//!    lines touched by q uniform lookups on a tree level of λ lines,
//!    `xd(λ, q) = λ·(1 − (1 − 1/λ)^q)`.
//! 2. **Steady state** [`solve_q0`]: the lookup count q₀ at which the tree's
//!    touched working set exactly fills the outer cache, `Σᵢ xd(λᵢ, q₀) =
//!    C2/B2`. Beyond q₀, every additional lookup must evict something.
//! 3. **Misses per lookup** [`steady_misses_per_lookup`]: the marginal
//!    distinct-line demand of one more lookup, `Σᵢ xd(λᵢ, q₀+1) − C2/B2`.
//! 4. **Per-key cost equations** [`cost_method_a`], [`cost_method_b`],
//!    [`cost_method_c`]: assemble compute cost, buffer traffic, and miss
//!    penalties into seconds per key for the one-at-a-time, buffered, and
//!    cluster strategies.
//! 5. **Trend projection** [`ModelRun::project`]: rescales the machine
//!    parameters year by year (CPU-domain costs halve every 18 months,
//!    network doubles every 36, memory bandwidth grows 20%/year, memory
//!    *latency* stays flat) and re-evaluates the cost equations.
//!
//! Everything here is a pure function of its inputs; nothing touches the
//! actual index structures. The companion measurement harness
//! ([`crate::experiment`]) produces the observed counterpart.
//!
//! One calibration is worth stating up front: the reference profile sets
//! `dispatch_cost` to zero and overlaps communication with computation.
//! With any visible dispatch cost or non-overlapped network term the master
//! term dominates the cluster equation and the predicted cluster total
//! rises well above what the reference hardware achieves; both knobs are
//! plain profile fields, so either reading is one config edit away.

use crate::engine::EngineKind;
use thiserror::Error;

/// Errors from model evaluation.
#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("occupancy domain: lambda must be >= 1, got {0}")]
    LambdaDomain(f64),
    #[error("occupancy domain: q must be >= 0 and finite, got {0}")]
    QueryDomain(f64),
    #[error("queries per subtree must be positive")]
    ZeroQueriesPerSubtree,
    #[error("invalid machine profile: {0}")]
    InvalidProfile(String),
    #[error("invalid tree shape: {0}")]
    InvalidShape(String),
}

/// The hardware parameters the cost equations consume.
///
/// Bandwidths are bytes/second, sizes bytes, times seconds. `w1`/`b2`-style
/// names follow the convention that subscript 1 is the level closer to the
/// CPU for caches but the *memory* bus for bandwidth: `w1` is memory
/// bandwidth, `w2` network bandwidth, `c2`/`b2` the outer cache and its line,
/// `c1`/`b1` the inner ones.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineProfile {
    /// Memory bandwidth seen by one processor, bytes/s.
    pub w1_bytes_per_s: f64,
    /// Network bandwidth per link, bytes/s.
    pub w2_bytes_per_s: f64,
    /// Outer (L2) cache size, bytes.
    pub c2_bytes: u64,
    /// Inner (L1) cache size, bytes.
    pub c1_bytes: u64,
    /// Outer cache line, bytes.
    pub b2_bytes: u64,
    /// Inner cache line, bytes.
    pub b1_bytes: u64,
    /// Cost of one outer-cache miss, seconds.
    pub b2_miss_penalty_s: f64,
    /// Cost of one inner-cache miss, seconds.
    pub b1_miss_penalty_s: f64,
    /// Per-node comparison/branch cost, seconds.
    pub comp_cost_node_s: f64,
    /// Master-side per-key routing cost, seconds. See
    /// [`MachineProfile::default_dispatch_cost`] and the calibration note in
    /// the module docs.
    pub dispatch_cost_s: f64,
    /// Master nodes in the cluster.
    pub num_masters: u32,
    /// Worker nodes in the cluster.
    pub num_slaves: u32,
    /// When true, network transfer hides behind computation and the cost
    /// equations drop their network terms.
    pub overlap_communication: bool,
}

impl MachineProfile {
    /// The reference machine: a small commodity cluster of late-90s x86
    /// boxes (16 KiB L1 / 512 KiB L2, 32-byte lines, 100 Mbit switched
    /// Ethernet), 1 master + 10 workers. Bandwidths use binary (MiB/s)
    /// units. Dispatch cost is calibrated to zero and communication
    /// overlaps computation (module docs).
    pub fn reference() -> Self {
        Self {
            w1_bytes_per_s: 647.0 * 1024.0 * 1024.0,
            w2_bytes_per_s: 138.0 * 1024.0 * 1024.0,
            c2_bytes: 512 * 1024,
            c1_bytes: 16 * 1024,
            b2_bytes: 32,
            b1_bytes: 32,
            b2_miss_penalty_s: 110e-9,
            b1_miss_penalty_s: 16.25e-9,
            comp_cost_node_s: 30e-9,
            dispatch_cost_s: 0.0,
            num_masters: 1,
            num_slaves: 10,
            overlap_communication: true,
        }
    }

    /// The uncalibrated dispatch-cost estimate: a binary search over the
    /// worker delimiter array, `ceil(log2(num_slaves + 1))` comparisons.
    /// Used when a config names no explicit dispatch cost.
    pub fn default_dispatch_cost(num_slaves: u32, comp_cost_node_s: f64) -> f64 {
        let steps = u64::BITS - u64::from(num_slaves).leading_zeros(); // ceil(log2(n+1))
        steps as f64 * comp_cost_node_s
    }

    /// Checks the physical-plausibility invariants.
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("w1", self.w1_bytes_per_s),
            ("w2", self.w2_bytes_per_s),
            ("b2_miss_penalty", self.b2_miss_penalty_s),
            ("b1_miss_penalty", self.b1_miss_penalty_s),
            ("comp_cost_node", self.comp_cost_node_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModelError::InvalidProfile(format!("{name} must be positive, got {v}")));
            }
        }
        if self.c2_bytes == 0 || self.c1_bytes == 0 || self.b2_bytes == 0 || self.b1_bytes == 0 {
            return Err(ModelError::InvalidProfile("cache and line sizes must be positive".into()));
        }
        if self.b2_bytes > self.c2_bytes || self.b1_bytes > self.c1_bytes {
            return Err(ModelError::InvalidProfile(
                "a cache line cannot exceed its cache".into(),
            ));
        }
        if self.dispatch_cost_s < 0.0 || !self.dispatch_cost_s.is_finite() {
            return Err(ModelError::InvalidProfile("dispatch cost must be non-negative".into()));
        }
        if self.num_masters == 0 || self.num_slaves == 0 {
            return Err(ModelError::InvalidProfile("need at least one master and one slave".into()));
        }
        Ok(())
    }
}

/// Tree geometry as the model sees it: cache lines per level.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeShape {
    /// λ₁..λ_T: cache lines per level, root first.
    lambda: Vec<f64>,
    /// Levels per worker subtree in the cluster deployment.
    slave_levels: u32,
    /// Tree fanout, for deriving subtree decompositions.
    fanout: u64,
    /// Bytes per key.
    key_bytes: usize,
    /// Total structure bytes.
    tree_bytes: u64,
}

impl TreeShape {
    /// Builds a shape from explicit per-level line counts.
    pub fn new(
        lambda: Vec<f64>,
        slave_levels: u32,
        fanout: u64,
        key_bytes: usize,
        tree_bytes: u64,
    ) -> Result<Self, ModelError> {
        if lambda.is_empty() {
            return Err(ModelError::InvalidShape("need at least one level".into()));
        }
        for (i, &l) in lambda.iter().enumerate() {
            if !(l >= 1.0 && l.is_finite()) {
                return Err(ModelError::InvalidShape(format!(
                    "lambda[{i}] = {l} must be a finite value >= 1"
                )));
            }
        }
        if lambda.windows(2).any(|w| w[1] < w[0]) {
            return Err(ModelError::InvalidShape(
                "per-level line counts must be non-decreasing toward the leaves".into(),
            ));
        }
        let t = lambda.len() as u32;
        if slave_levels == 0 || slave_levels > t {
            return Err(ModelError::InvalidShape(format!(
                "slave levels {slave_levels} must lie in 1..={t}"
            )));
        }
        if fanout < 2 {
            return Err(ModelError::InvalidShape(format!("fanout {fanout} must be >= 2")));
        }
        Ok(Self { lambda, slave_levels, fanout, key_bytes, tree_bytes })
    }

    /// A complete tree: level i holds `lines_per_node · fanout^(i−1)` lines.
    pub fn perfect(
        levels: u32,
        fanout: u64,
        lines_per_node: u64,
        line_bytes: u64,
        slave_levels: u32,
    ) -> Result<Self, ModelError> {
        let lambda: Vec<u64> = (0..levels).map(|i| lines_per_node * fanout.pow(i)).collect();
        let tree_bytes = lambda.iter().sum::<u64>() * line_bytes;
        Self::new(
            lambda.into_iter().map(|l| l as f64).collect(),
            slave_levels,
            fanout,
            4,
            tree_bytes,
        )
    }

    /// The reference geometry: a complete 7-level fanout-8 tree of 64-byte
    /// nodes on 32-byte lines (so 2 lines per node), workers holding
    /// 6-level subtrees.
    pub fn reference() -> Self {
        Self::perfect(7, 8, 2, 32, 6).expect("reference shape is valid")
    }

    /// Shape of an actual built tree.
    pub fn from_tree(
        tree: &crate::tree::NaryTree,
        line_bytes: usize,
        slave_levels: u32,
    ) -> Result<Self, ModelError> {
        let lambda: Vec<f64> =
            tree.level_line_counts(line_bytes).into_iter().map(|l| l as f64).collect();
        Self::new(lambda, slave_levels, tree.fanout() as u64, 4, tree.tree_bytes())
    }

    /// Reconstructs per-level line counts from aggregate figures (total
    /// bytes, line size, level count, fanout) by distributing the total
    /// geometrically: each level below the root is the fanout multiple of
    /// the one above, up to integer rounding. Useful when only published
    /// totals are available.
    pub fn from_aggregates(
        tree_bytes: u64,
        line_bytes: u64,
        levels: u32,
        fanout: u64,
        slave_levels: u32,
    ) -> Result<Self, ModelError> {
        if line_bytes == 0 {
            return Err(ModelError::InvalidShape("line size must be positive".into()));
        }
        let total_lines = tree_bytes.div_ceil(line_bytes);
        let mut lambda = vec![0u64; levels as usize];
        let mut remaining = total_lines;
        for i in (1..levels as usize).rev() {
            let share = remaining * (fanout - 1) / fanout;
            lambda[i] = share;
            remaining -= share;
        }
        lambda[0] = remaining;
        Self::new(
            lambda.into_iter().map(|l| l as f64).collect(),
            slave_levels,
            fanout,
            4,
            tree_bytes,
        )
    }

    /// Total levels T.
    pub fn levels(&self) -> u32 {
        self.lambda.len() as u32
    }

    /// Levels per worker subtree (the `L` of the cluster cost equation).
    pub fn slave_levels(&self) -> u32 {
        self.slave_levels
    }

    /// Per-level line counts, root first.
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// Tree fanout.
    pub fn fanout(&self) -> u64 {
        self.fanout
    }

    /// Bytes per key.
    pub fn key_bytes(&self) -> usize {
        self.key_bytes
    }

    /// Total structure bytes.
    pub fn tree_bytes(&self) -> u64 {
        self.tree_bytes
    }

    /// Lines per node, read off the single-node root level.
    pub fn node_lines(&self) -> f64 {
        self.lambda[0]
    }
}

/// Expected distinct cache lines touched by `q` uniform lookups over a level
/// of `lambda` lines: `λ(1 − (1 − 1/λ)^q)`.
///
/// Continuous and strictly increasing in q, bounded by `min(λ, q)` at integer
/// q. `lambda` must be ≥ 1 and `q` ≥ 0.
pub fn xd(lambda: f64, q: f64) -> Result<f64, ModelError> {
    if !(lambda >= 1.0) || !lambda.is_finite() {
        return Err(ModelError::LambdaDomain(lambda));
    }
    if !(q >= 0.0) || !q.is_finite() {
        return Err(ModelError::QueryDomain(q));
    }
    Ok(xd_raw(lambda, q))
}

/// [`xd`] without domain checks, for validated shapes in inner loops.
fn xd_raw(lambda: f64, q: f64) -> f64 {
    if q == 0.0 {
        return 0.0;
    }
    // Exact algebraic identities the floating-point path would only
    // approximate: one lookup touches exactly one line, and a single line
    // is fully touched by any lookup.
    if q == 1.0 || lambda == 1.0 {
        return 1.0;
    }
    // λ(1 − (1−1/λ)^q) via ln_1p/exp_m1 so huge λ and q lose no precision.
    -lambda * f64::exp_m1(q * f64::ln_1p(-1.0 / lambda))
}

/// Sum of per-level expected occupancies at `q` lookups.
fn occupancy(shape: &TreeShape, q: f64) -> f64 {
    shape.lambda.iter().map(|&l| xd_raw(l, q)).sum()
}

/// Steady-state lookup count: the q₀ with `Σᵢ xd(λᵢ, q₀) = C2/B2`.
///
/// Returns `f64::INFINITY` when the tree's total line count does not exceed
/// the cache (the working set never overflows, so there is no steady state
/// and no steady misses). Otherwise the unique root, found by bisection to
/// 10⁻⁹ relative residual.
pub fn solve_q0(shape: &TreeShape, c2_bytes: u64, b2_bytes: u64) -> f64 {
    let target = c2_bytes as f64 / b2_bytes as f64;
    let total: f64 = shape.lambda.iter().sum();
    if total <= target {
        return f64::INFINITY;
    }
    // Bracket: occupancy is 0 at q=0 and approaches Σλ > target.
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    let mut guard = 0;
    while occupancy(shape, hi) < target {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        assert!(guard < 1100, "steady-state bracket failed to close");
    }
    // Bisect to interval exhaustion: downstream quantities (misses per
    // lookup) difference two large occupancies, so q₀ itself needs full
    // precision, far past the 10⁻⁹ residual contract.
    let mut mid = hi;
    for _ in 0..200 {
        let next = 0.5 * (lo + hi);
        if next == lo || next == hi {
            break;
        }
        mid = next;
        if occupancy(shape, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    mid
}

/// Steady-state cache misses per lookup: `Σᵢ xd(λᵢ, q₀+1) − C2/B2`, the
/// distinct-line demand one more lookup adds to a full cache. Zero when the
/// tree fits ([`solve_q0`] returned the infinity marker). Always within
/// `[0, T]`: each level contributes at most one new line per lookup.
pub fn steady_misses_per_lookup(shape: &TreeShape, c2_bytes: u64, b2_bytes: u64, q0: f64) -> f64 {
    if q0.is_infinite() {
        return 0.0;
    }
    occupancy(shape, q0 + 1.0) - c2_bytes as f64 / b2_bytes as f64
}

/// Per-key cost of one-at-a-time descent over the whole tree:
/// `T·comp + 8/W1 + misses·B2_penalty`.
///
/// The `8/W1` term is the sequential buffer traffic for one key — a 4-byte
/// read of the query and a 4-byte write of the answer.
pub fn cost_method_a(profile: &MachineProfile, shape: &TreeShape) -> f64 {
    let q0 = solve_q0(shape, profile.c2_bytes, profile.b2_bytes);
    let misses = steady_misses_per_lookup(shape, profile.c2_bytes, profile.b2_bytes, q0);
    shape.levels() as f64 * profile.comp_cost_node_s
        + 8.0 / profile.w1_bytes_per_s
        + misses * profile.b2_miss_penalty_s
}

/// How the buffered traversal splits a shape under a cache budget.
#[derive(Debug, Clone, PartialEq)]
pub struct SubtreePlan {
    /// Levels per full subtree: maximal depth whose complete subtree fits.
    pub subtree_levels: u32,
    /// Subtree layers a descent crosses: `ceil(T / subtree_levels)`.
    pub layers: u32,
    /// Complete-shape leaf subtree count: `fanout^(T − subtree_levels)`.
    pub leaf_subtrees: u64,
    /// Per-level line counts of one subtree.
    pub subtree_lambda: Vec<f64>,
}

/// Computes the subtree decomposition the buffered cost equation assumes:
/// complete subtrees of the deepest depth whose `(F^k−1)/(F−1)` nodes fit
/// the outer cache.
pub fn subtree_plan(shape: &TreeShape, c2_bytes: u64, b2_bytes: u64) -> SubtreePlan {
    let t = shape.levels();
    let f = shape.fanout() as f64;
    let node_bytes = shape.node_lines() * b2_bytes as f64;
    let mut k = 1u32;
    while k < t {
        let nodes = (f.powi(k as i32 + 1) - 1.0) / (f - 1.0);
        if nodes * node_bytes > c2_bytes as f64 {
            break;
        }
        k += 1;
    }
    let layers = t.div_ceil(k);
    let leaf_subtrees = shape.fanout().pow(t - k);
    let subtree_lambda: Vec<f64> =
        (0..k).map(|i| shape.node_lines() * f.powi(i as i32)).collect();
    SubtreePlan { subtree_levels: k, layers, leaf_subtrees, subtree_lambda }
}

/// Per-key cost of buffered batch traversal with `q_per_subtree` keys
/// reaching each subtree:
/// `T·comp + θ₁ + θ₂ + (4/W1)·S + (B2_penalty·4/B2)·(S−1)`,
/// where `θ₁ = (Σᵢ xd(λᵢ, q)/q)·B2_penalty` loads each subtree's touched
/// lines once per batch, `θ₂ = (T − Σᵢ xd(λᵢ, q)/q)·B1_penalty` prices the
/// remaining node visits as inner-cache misses over a cache-resident
/// subtree, S is the subtree layer count, and the last term is the
/// buffer-spill traffic between layers.
pub fn cost_method_b(
    profile: &MachineProfile,
    shape: &TreeShape,
    q_per_subtree: f64,
) -> Result<f64, ModelError> {
    if !(q_per_subtree > 0.0) || !q_per_subtree.is_finite() {
        return Err(ModelError::ZeroQueriesPerSubtree);
    }
    let plan = subtree_plan(shape, profile.c2_bytes, profile.b2_bytes);
    let s = plan.layers as f64;
    let t = shape.levels() as f64;
    let loads_per_key: f64 =
        plan.subtree_lambda.iter().map(|&l| xd_raw(l, q_per_subtree)).sum::<f64>() / q_per_subtree;
    let theta1 = loads_per_key * profile.b2_miss_penalty_s;
    let theta2 = (t - loads_per_key) * profile.b1_miss_penalty_s;
    Ok(t * profile.comp_cost_node_s
        + theta1
        + theta2
        + (4.0 / profile.w1_bytes_per_s) * s
        + (profile.b2_miss_penalty_s * 4.0 / profile.b2_bytes as f64) * (s - 1.0))
}

/// A cost estimate that may carry a modeling-assumption warning.
#[derive(Debug, Clone, PartialEq)]
pub struct CostEstimate {
    /// Seconds per key for the whole cluster.
    pub per_key_s: f64,
    /// Master-side share, seconds per key (before the max).
    pub master_per_key_s: f64,
    /// Worker-side share, seconds per key (before the max).
    pub slave_per_key_s: f64,
    /// Set when an equation assumption does not hold for these inputs.
    pub warning: Option<CostWarning>,
}

/// Modeling-assumption violations worth surfacing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CostWarning {
    /// The cluster equation assumes a descent spans at most the caches of
    /// two nodes (master + one worker), i.e. T < 2L. Deeper trees make the
    /// estimate optimistic.
    DepthExceedsTwoNodeCaches { levels: u32, slave_levels: u32 },
}

impl std::fmt::Display for CostWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CostWarning::DepthExceedsTwoNodeCaches { levels, slave_levels } => write!(
                f,
                "tree depth {levels} is not < 2x the worker subtree depth {slave_levels}; \
                 the cluster estimate assumes a lookup fits in two nodes' caches"
            ),
        }
    }
}

/// Per-key cost of the partitioned cluster strategies: masters route and
/// dispatch, workers search their L-level share, and the slower side bounds
/// the pipeline:
/// `max((dispatch + 8/W1 + net)/masters, (L·(comp + B1_penalty) + 8/W1 + net)/slaves)`
/// with `net = 4/W2` unless communication overlaps computation.
pub fn cost_method_c(profile: &MachineProfile, shape: &TreeShape) -> CostEstimate {
    let net = if profile.overlap_communication { 0.0 } else { 4.0 / profile.w2_bytes_per_s };
    let buffer_io = 8.0 / profile.w1_bytes_per_s;
    let master = (profile.dispatch_cost_s + buffer_io + net) / profile.num_masters as f64;
    let slave = (shape.slave_levels() as f64
        * (profile.comp_cost_node_s + profile.b1_miss_penalty_s)
        + buffer_io
        + net)
        / profile.num_slaves as f64;
    let warning = if shape.levels() >= 2 * shape.slave_levels() {
        Some(CostWarning::DepthExceedsTwoNodeCaches {
            levels: shape.levels(),
            slave_levels: shape.slave_levels(),
        })
    } else {
        None
    };
    CostEstimate { per_key_s: master.max(slave), master_per_key_s: master, slave_per_key_s: slave, warning }
}

/// Technology growth rates for the trend projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingAssumptions {
    /// CPU-domain costs (per-node compute, inner-cache penalty, dispatch)
    /// halve every this many months; 0 freezes them.
    pub cpu_doubling_months: f64,
    /// Network bandwidth doubles every this many months; 0 freezes it.
    pub network_doubling_months: f64,
    /// Memory bandwidth grows this fraction per year.
    pub memory_bw_growth_per_year: f64,
    /// Memory (outer-miss) latency growth per year; the headline assumption
    /// is that it does not improve, hence 0.
    pub memory_latency_growth: f64,
}

impl Default for ScalingAssumptions {
    fn default() -> Self {
        Self {
            cpu_doubling_months: 18.0,
            network_doubling_months: 36.0,
            memory_bw_growth_per_year: 0.20,
            memory_latency_growth: 0.0,
        }
    }
}

impl ScalingAssumptions {
    /// The profile as it would look `years` from the baseline.
    ///
    /// The inner-cache miss penalty scales with the CPU domain: it is an
    /// on-die access whose latency tracks the core clock, unlike the
    /// outer-miss penalty, which is a trip to DRAM and follows the (flat)
    /// memory-latency curve.
    pub fn profile_at(&self, base: &MachineProfile, years: u32) -> MachineProfile {
        let y = years as f64;
        let halvings = |months: f64| if months == 0.0 { 1.0 } else { (-y * 12.0 / months).exp2() };
        let cpu = halvings(self.cpu_doubling_months);
        let net = if self.network_doubling_months == 0.0 {
            1.0
        } else {
            (y * 12.0 / self.network_doubling_months).exp2()
        };
        MachineProfile {
            w1_bytes_per_s: base.w1_bytes_per_s
                * (1.0 + self.memory_bw_growth_per_year).powf(y),
            w2_bytes_per_s: base.w2_bytes_per_s * net,
            b2_miss_penalty_s: base.b2_miss_penalty_s
                * (1.0 + self.memory_latency_growth).powf(y),
            b1_miss_penalty_s: base.b1_miss_penalty_s * cpu,
            comp_cost_node_s: base.comp_cost_node_s * cpu,
            dispatch_cost_s: base.dispatch_cost_s * cpu,
            ..base.clone()
        }
    }
}

/// One method's evaluated cost.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodCost {
    pub method: EngineKind,
    pub per_key_s: f64,
    /// per_key × total keys.
    pub total_s: f64,
    /// Reported total: the single-node methods are divided by the
    /// configured normalization divisor; the cluster method is already a
    /// whole-cluster figure and passes through.
    pub normalized_s: f64,
    pub warning: Option<CostWarning>,
}

/// One row of the trend projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionRow {
    pub year: u32,
    pub method: EngineKind,
    pub per_key_ns: f64,
    pub total_s: f64,
    pub normalized_s: f64,
    /// Buffered-to-cluster normalized ratio for this row's year (repeated on
    /// each of the year's rows).
    pub ratio_b_over_c3: f64,
}

/// A complete model evaluation request: machine, geometry, and workload
/// dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRun {
    pub profile: MachineProfile,
    pub shape: TreeShape,
    /// Keys looked up in the modeled run.
    pub total_keys: u64,
    /// Keys per batch (sets the per-subtree share for the buffered method).
    pub batch_keys: u64,
    /// Divisor applied to the single-node totals for reporting.
    pub normalize: f64,
}

impl ModelRun {
    /// The reference experiment: reference machine and shape, 2²³ keys in
    /// 32,768-key (128 KiB) batches, single-node totals normalized by 11.
    pub fn reference() -> Self {
        Self {
            profile: MachineProfile::reference(),
            shape: TreeShape::reference(),
            total_keys: 1 << 23,
            batch_keys: 32 * 1024,
            normalize: 11.0,
        }
    }

    fn queries_per_subtree(&self) -> f64 {
        let plan = subtree_plan(&self.shape, self.profile.c2_bytes, self.profile.b2_bytes);
        self.batch_keys as f64 / plan.leaf_subtrees as f64
    }

    /// Evaluates the three cost equations at the given profile.
    fn evaluate_profile(&self, profile: &MachineProfile) -> Result<Vec<MethodCost>, ModelError> {
        profile.validate()?;
        if self.normalize <= 0.0 {
            return Err(ModelError::InvalidProfile(format!(
                "normalization divisor must be positive, got {}",
                self.normalize
            )));
        }
        let keys = self.total_keys as f64;
        let a = cost_method_a(profile, &self.shape);
        let b = cost_method_b(profile, &self.shape, self.queries_per_subtree())?;
        let c = cost_method_c(profile, &self.shape);
        Ok(vec![
            MethodCost {
                method: EngineKind::A,
                per_key_s: a,
                total_s: a * keys,
                normalized_s: a * keys / self.normalize,
                warning: None,
            },
            MethodCost {
                method: EngineKind::B,
                per_key_s: b,
                total_s: b * keys,
                normalized_s: b * keys / self.normalize,
                warning: None,
            },
            MethodCost {
                method: EngineKind::C3,
                per_key_s: c.per_key_s,
                total_s: c.per_key_s * keys,
                normalized_s: c.per_key_s * keys,
                warning: c.warning,
            },
        ])
    }

    /// Evaluates the three cost equations at the baseline profile.
    pub fn evaluate(&self) -> Result<Vec<MethodCost>, ModelError> {
        self.evaluate_profile(&self.profile)
    }

    /// Re-evaluates the model for years `0..=years` under the scaling
    /// assumptions; three rows per year.
    pub fn project(
        &self,
        years: u32,
        scaling: &ScalingAssumptions,
    ) -> Result<Vec<ProjectionRow>, ModelError> {
        let mut rows = Vec::with_capacity(3 * (years as usize + 1));
        for year in 0..=years {
            let profile = scaling.profile_at(&self.profile, year);
            let costs = self.evaluate_profile(&profile)?;
            let b_norm = costs[1].normalized_s;
            let c_norm = costs[2].normalized_s;
            let ratio = b_norm / c_norm;
            for cost in costs {
                rows.push(ProjectionRow {
                    year,
                    method: cost.method,
                    per_key_ns: cost.per_key_s * 1e9,
                    total_s: cost.total_s,
                    normalized_s: cost.normalized_s,
                    ratio_b_over_c3: ratio,
                });
            }
        }
        Ok(rows)
    }
}

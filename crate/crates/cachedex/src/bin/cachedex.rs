//! Command-line driver: build snapshots, run measured sweeps, serve
//! cluster roles, evaluate the cost model, project technology trends, and
//! verify the lookup strategies against an oracle.
//!
//! Exit discipline: 0 on success; 1 with a one-line `cachedex: ...`
//! diagnostic on any runtime failure; 2 with usage on bad invocations
//! (unknown subcommand, missing required flag, unparseable value).

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};

use cachedex::cluster::{
    master_node_id, partition_range, run_master, run_replicated, run_slave, spawn_partitioned,
    Link, MasterConfig,
};
use cachedex::cluster::transport::{tcp_accept, tcp_connect};
use cachedex::config::{Config, TransportKind};
use cachedex::engine::{EngineKind, LookupEngine, QueryBatch};
use cachedex::experiment::{run_experiment, scan_oracle, ExperimentSpec};
use cachedex::index::SortedIndex;
use cachedex::model::{MachineProfile, ModelRun, TreeShape};
use cachedex::partition::partition_index;
use cachedex::report;
use cachedex::workload::WorkloadSpec;

type CliResult = Result<(), Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(
    name = "cachedex",
    version,
    about = "Cache-conscious index lookup: measure it, cluster it, model it",
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the index snapshot a config's workload describes.
    Build(BuildArgs),
    /// Run the measured sweep a config describes; emit measurement CSV.
    Run(RunArgs),
    /// Serve one cluster role (master or slave) for multi-process runs.
    Serve(ServeArgs),
    /// Evaluate the analytical cost model for the three headline methods.
    Model(ModelArgs),
    /// Project model costs forward under technology scaling assumptions.
    Project(ProjectArgs),
    /// Check every lookup strategy against a scan oracle; exit 0 on agreement.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct BuildArgs {
    /// Config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the workload seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the distinct index key count.
    #[arg(long)]
    index_keys: Option<usize>,
    /// Snapshot file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Config file describing the sweep (required).
    #[arg(long)]
    config: PathBuf,
    /// Override the methods to measure (comma-separated: a,b,c1,c2,c3).
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<EngineKind>>,
    /// Override the batch-size sweep, bytes, ascending (comma-separated).
    #[arg(long, value_delimiter = ',')]
    batch_bytes: Option<Vec<usize>>,
    /// Override the timed passes per cell.
    #[arg(long)]
    repetitions: Option<usize>,
    /// Override the workload seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the distinct index key count.
    #[arg(long)]
    index_keys: Option<usize>,
    /// Override the query count.
    #[arg(long)]
    query_keys: Option<usize>,
    /// Override the single-node normalization divisor.
    #[arg(long)]
    normalize: Option<f64>,
    /// Write the measurement CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RoleArg {
    Master,
    Slave,
}

#[derive(Args)]
struct ServeArgs {
    /// Config file shared by every process in the run (required).
    #[arg(long)]
    config: PathBuf,
    /// Which role this process plays.
    #[arg(long, value_enum)]
    role: RoleArg,
    /// Node id: slave partition id, or master index (default 0).
    #[arg(long, default_value_t = 0)]
    node_id: usize,
    /// Master only: write the answer CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    /// Config file supplying the machine profile ([model] + [topology]).
    /// Omitted: the reference late-90s commodity machine.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Config file supplying the tree geometry ([model.shape]).
    /// Omitted: the reference 7-level fanout-8 shape.
    #[arg(long)]
    shape: Option<PathBuf>,
    /// Keys looked up in the modeled run.
    #[arg(long, default_value_t = 1 << 23)]
    keys: u64,
    /// Batch size in bytes (sets the per-subtree share for method b).
    #[arg(long, default_value_t = 128 * 1024)]
    batch_bytes: u64,
    /// Divisor applied to the single-node totals.
    #[arg(long, default_value_t = 11.0)]
    normalize: f64,
}

#[derive(Args)]
struct ProjectArgs {
    /// Config file supplying profile, shape, and scaling assumptions.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Years to project, starting from year 0 (today's machine).
    #[arg(long, default_value_t = 5)]
    years: u32,
    /// Keys looked up in the modeled run.
    #[arg(long, default_value_t = 1 << 23)]
    keys: u64,
    /// Batch size in bytes.
    #[arg(long, default_value_t = 128 * 1024)]
    batch_bytes: u64,
    /// Divisor applied to the single-node totals.
    #[arg(long, default_value_t = 11.0)]
    normalize: f64,
    /// Write the projection CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Distinct keys in the index.
    #[arg(long, default_value_t = 100_000)]
    index_keys: usize,
    /// Queries to check.
    #[arg(long, default_value_t = 100_000)]
    queries: usize,
    /// Workload seed.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Slaves in the in-process cluster check.
    #[arg(long, default_value_t = 4)]
    slaves: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Build(args) => cmd_build(args),
        Command::Run(args) => cmd_run(args),
        Command::Serve(args) => cmd_serve(args),
        Command::Model(args) => cmd_model(args),
        Command::Project(args) => cmd_project(args),
        Command::Verify(args) => cmd_verify(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("cachedex: {err}");
            ExitCode::FAILURE
        }
    }
}

fn load_or_default(path: &Option<PathBuf>) -> Result<Config, Box<dyn std::error::Error>> {
    Ok(match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    })
}

/// Opens `--out` or stdout as a buffered writer.
fn open_sink(out: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_build(args: BuildArgs) -> CliResult {
    let mut config = load_or_default(&args.config)?;
    if let Some(seed) = args.seed {
        config.workload.seed = seed;
    }
    if let Some(n) = args.index_keys {
        config.workload.index_keys = n;
    }
    let spec = config.workload_spec();
    let raw = spec.gen_index_keys();
    let (index, duplicates) = SortedIndex::build(&raw)?;
    let mut file = BufWriter::new(File::create(&args.out)?);
    index.write_snapshot(&mut file)?;
    file.flush()?;
    println!(
        "built index: {} keys ({} duplicates dropped), {} bytes -> {}",
        index.len(),
        duplicates,
        index.len() * 4 + 14,
        args.out.display()
    );
    Ok(())
}

fn cmd_run(args: RunArgs) -> CliResult {
    let mut config = Config::load(&args.config)?;
    if let Some(methods) = args.methods {
        config.experiment.methods = methods;
    }
    if let Some(batches) = args.batch_bytes {
        config.experiment.batch_bytes = batches;
    }
    if let Some(reps) = args.repetitions {
        config.experiment.repetitions = reps;
    }
    if let Some(seed) = args.seed {
        config.workload.seed = seed;
    }
    if let Some(n) = args.index_keys {
        config.workload.index_keys = n;
    }
    if let Some(n) = args.query_keys {
        config.workload.query_keys = n;
    }
    if let Some(d) = args.normalize {
        config.experiment.normalize = d;
    }
    config.validate()?;
    let spec = ExperimentSpec::from_config(&config);
    let workload = config.workload_spec();
    let rows = run_experiment(&spec, &workload)?;
    let mut sink = open_sink(&args.out)?;
    sink.write_all(report::emit_measurements(&rows).as_bytes())?;
    sink.flush()?;
    Ok(())
}

fn cmd_serve(args: ServeArgs) -> CliResult {
    let config = Config::load(&args.config)?;
    if config.transport.kind != TransportKind::Tcp {
        return Err("serve requires transport.kind = \"tcp\" in the config".into());
    }
    match args.role {
        RoleArg::Slave => serve_slave(&config, args.node_id),
        RoleArg::Master => serve_master(&config, args.node_id, &args.out),
    }
}

fn serve_slave(config: &Config, node_id: usize) -> CliResult {
    let slaves = config.topology.slaves;
    if node_id >= slaves {
        return Err(format!("slave node id {node_id} out of range (topology.slaves = {slaves})").into());
    }
    // Every process derives the identical index from the shared config, so
    // nothing has to ship the key set around.
    let spec = config.workload_spec();
    let (index, _) = SortedIndex::build(&spec.gen_index_keys())?;
    let kind = config.engine.kind;
    let (engine, expected_range) = if kind.is_partitioned() {
        let (table, partitions) = partition_index(&index, slaves)?;
        let engine = LookupEngine::for_partition(kind, &partitions[node_id])?;
        (engine, Some(partition_range(&table, node_id)))
    } else {
        (LookupEngine::for_index(kind, &index)?, None)
    };

    let addr = config
        .transport
        .listen
        .clone()
        .or_else(|| config.transport.peers.get(node_id).cloned())
        .ok_or("slave needs transport.listen or a transport.peers entry for its node id")?;
    let listener = TcpListener::bind(&addr)?;
    eprintln!("slave {node_id} listening on {addr}");
    let mut links = Vec::with_capacity(config.topology.masters);
    for m in 0..config.topology.masters {
        links.push(tcp_accept(&listener, master_node_id(m))?);
    }
    let stats = run_slave(node_id as u16, &mut links, &engine, expected_range)?;
    eprintln!(
        "slave {node_id}: {} keys in {} batches, idle {:.1}%, {} routing anomalies",
        stats.keys,
        stats.batches,
        stats.idle_fraction() * 100.0,
        stats.routing_anomalies
    );
    Ok(())
}

fn serve_master(config: &Config, node_id: usize, out: &Option<PathBuf>) -> CliResult {
    let spec = config.workload_spec();
    let (index, _) = SortedIndex::build(&spec.gen_index_keys())?;
    let kind = config.engine.kind;
    let peers = &config.transport.peers;
    if peers.is_empty() {
        return Err("master needs transport.peers listing every slave address".into());
    }
    if kind.is_partitioned() && peers.len() != config.topology.slaves {
        return Err(format!(
            "transport.peers lists {} addresses but topology.slaves = {}",
            peers.len(),
            config.topology.slaves
        )
        .into());
    }
    let mut links = Vec::with_capacity(peers.len());
    for (i, addr) in peers.iter().enumerate() {
        links.push(tcp_connect_retry(addr, i as u16, Duration::from_secs(10))?);
    }

    let master_config = MasterConfig { policy: config.batching_policy(), ..Default::default() };
    let mut sink = open_sink(out)?;
    writeln!(sink, "{}", report::ANSWER_HEADER)?;
    let mut write_error: Option<io::Error> = None;
    let mut answer = |key: u32, rank: u64| {
        if write_error.is_none() {
            if let Err(e) = writeln!(sink, "{key},{rank}") {
                write_error = Some(e);
            }
        }
    };
    let queries = spec.query_stream();
    let id = master_node_id(node_id);
    let stats = if kind.is_partitioned() {
        let (table, _) = partition_index(&index, config.topology.slaves)?;
        run_master(id, &master_config, &mut links, &table, queries, &mut answer)?
    } else {
        run_replicated(id, &master_config, &mut links, queries, &mut answer)?
    };
    if let Some(e) = write_error {
        return Err(e.into());
    }
    sink.flush()?;
    eprintln!(
        "master: {} keys answered in {} batches across {} slaves, {:?}",
        stats.keys_answered,
        stats.batches_received,
        peers.len(),
        stats.elapsed
    );
    Ok(())
}

/// Connects with retry so masters can start before their slaves listen.
fn tcp_connect_retry(addr: &str, peer: u16, budget: Duration) -> io::Result<Link> {
    let deadline = Instant::now() + budget;
    loop {
        match tcp_connect(addr, peer) {
            Ok(link) => return Ok(link),
            Err(e) => {
                if Instant::now() >= deadline {
                    return Err(e);
                }
                std::thread::sleep(Duration::from_millis(50));
            }
        }
    }
}

fn cmd_model(args: ModelArgs) -> CliResult {
    let profile = match &args.profile {
        Some(path) => Config::load(path)?.machine_profile()?,
        None => MachineProfile::reference(),
    };
    let shape = match &args.shape {
        Some(path) => Config::load(path)?.tree_shape()?,
        None => TreeShape::reference(),
    };
    let run = ModelRun {
        profile,
        shape,
        total_keys: args.keys,
        batch_keys: (args.batch_bytes / 4).max(1),
        normalize: args.normalize,
    };
    let costs = run.evaluate()?;
    println!("method,per_key_ns,total_s,normalized_s");
    for cost in &costs {
        println!(
            "{},{:.4},{:.6},{:.6}",
            cost.method,
            cost.per_key_s * 1e9,
            cost.total_s,
            cost.normalized_s
        );
        if let Some(warning) = &cost.warning {
            eprintln!("warning ({}): {warning}", cost.method);
        }
    }
    Ok(())
}

fn cmd_project(args: ProjectArgs) -> CliResult {
    let config = load_or_default(&args.config)?;
    let run = ModelRun {
        profile: match &args.config {
            Some(_) => config.machine_profile()?,
            None => MachineProfile::reference(),
        },
        shape: match &args.config {
            Some(_) => config.tree_shape()?,
            None => TreeShape::reference(),
        },
        total_keys: args.keys,
        batch_keys: (args.batch_bytes / 4).max(1),
        normalize: args.normalize,
    };
    let rows = run.project(args.years, &config.scaling_assumptions())?;
    let mut sink = open_sink(&args.out)?;
    sink.write_all(report::emit_projection(&rows).as_bytes())?;
    sink.flush()?;
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> CliResult {
    let spec = WorkloadSpec::new(args.seed, args.index_keys, args.queries);
    let raw = spec.gen_index_keys();
    let (index, _) = SortedIndex::build(&raw)?;
    let queries = spec.gen_query_keys();
    let expected = scan_oracle(&raw, &queries);

    for kind in EngineKind::ALL {
        let engine = LookupEngine::for_index(kind, &index)?;
        // Batched path over the full stream.
        let batch = QueryBatch { batch_id: 0, keys: queries.clone() };
        let ranks = engine.lookup_batch(&batch)?.ranks;
        for (j, (&q, &want)) in queries.iter().zip(&expected).enumerate() {
            if ranks[j] != want {
                return Err(format!(
                    "method {kind}: key {q} -> rank {}, oracle says {want}",
                    ranks[j]
                )
                .into());
            }
        }
        // One-at-a-time path spot check.
        for (&q, &want) in queries.iter().zip(&expected).take(128) {
            let got = engine.lookup_one(q);
            if got != want {
                return Err(format!(
                    "method {kind} (single-key path): key {q} -> rank {got}, oracle says {want}"
                )
                .into());
            }
        }
        println!("method {kind}: ok ({} keys)", queries.len());
    }

    // Full master/slave pass over in-process links.
    let cluster = spawn_partitioned(&index, EngineKind::C3, args.slaves)?;
    let mut links = cluster.links;
    let mut mismatch = None;
    let mut cursor = 0usize;
    run_master(
        master_node_id(0),
        &MasterConfig::default(),
        &mut links,
        &cluster.table,
        queries.iter().copied(),
        |key, rank| {
            if let Some(&want) = expected.get(cursor) {
                if mismatch.is_none() && rank != want {
                    mismatch = Some((key, rank, want));
                }
            }
            cursor += 1;
        },
    )?;
    drop(links);
    for handle in cluster.handles {
        handle.join().expect("slave thread panicked")?;
    }
    if let Some((key, got, want)) = mismatch {
        return Err(format!("cluster c3: key {key} -> rank {got}, oracle says {want}").into());
    }
    if cursor != queries.len() {
        return Err(format!("cluster c3: {cursor} answers for {} queries", queries.len()).into());
    }
    println!("cluster c3 ({} slaves): ok ({} keys)", args.slaves, queries.len());
    println!("verified: all strategies agree with the scan oracle");
    Ok(())
}

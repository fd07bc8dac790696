use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ssjoin::bucketize::{bucketize, default_num_centers, BucketStore, BucketizeParams, LayoutParams};
use ssjoin::config::{JoinConfig, MemorySpec};
use ssjoin::dataset::{gen_synthetic, open_auto, SynthParams, DEFAULT_BLOCK_BYTES};
use ssjoin::executor::{run_join, JoinOptions};
use ssjoin::graph_io::{build_bucket_graph, load_graph, save_graph, store_key, write_stats_csv, GraphMeta};
use ssjoin::index_file::{load_index, save_index};
use ssjoin::oracle::{average_neighbors, brute_force_join, calibrate_epsilon, evaluate, DEFAULT_MAX_N};
use ssjoin::orchestrate::{load_plan, orchestrate, save_plan, Ordering};
use ssjoin::pipeline::{format_eval, run_pipeline, INDEX_FILE, STORE_DATA, STORE_META};
use ssjoin::results::{read_pairs, PairsHeader, ResultWriter};
use ssjoin::core::bucket::round_up_page;
use ssjoin::core::cache::{simulate_tasks, Policy};
use ssjoin::core::eval::{recall, PairSet, Source};
use ssjoin::core::graph::{BallRadius, GraphParams, PruneBudget};
use ssjoin::core::hnsw::IndexParams;

/// Log level is read from this variable (error, warn, info, debug, trace).
const LOG_ENV: &str = "SSJOIN_LOG";

#[derive(Parser)]
#[command(name = "ssjoin", version, about = "Disk-based epsilon similarity self-join")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a Gaussian-mixture dataset in fbin format.
    GenData(GenData),
    /// Sample centers, build the center index and write the bucket store.
    Bucketize(Bucketize),
    /// Build the bucket dependency graph.
    Graph(Graph),
    /// Order tasks and plan evictions for a cache budget.
    Orchestrate(Orchestrate),
    /// Print miss counts per eviction policy as CSV.
    SimulateCache(SimulateCache),
    /// Execute a plan and write result pairs.
    Join(Join),
    /// Exact brute-force join.
    Oracle(Oracle),
    /// Compare engine pairs with oracle pairs.
    Eval(Eval),
    /// Choose epsilon for a target average neighbor count.
    Calibrate(Calibrate),
    /// Run every phase end to end.
    Pipeline(Pipeline),
}

#[derive(Args)]
struct GenData {
    #[arg(long)]
    n: u64,
    #[arg(long)]
    dim: usize,
    #[arg(long, default_value_t = 100)]
    clusters: usize,
    #[arg(long, default_value_t = 0.05)]
    spread: f32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Bucketize {
    #[arg(long)]
    data: PathBuf,
    /// Directory for the index and bucket store files.
    #[arg(long)]
    out_dir: PathBuf,
    /// Number of centers (default: one per thousand vectors).
    #[arg(long)]
    num_buckets: Option<u64>,
    /// Memory budget: bytes, K/M/G suffix, or a percentage of the dataset.
    #[arg(long, default_value = "10%")]
    memory: MemorySpec,
    /// Split buckets larger than this fraction of the memory budget.
    #[arg(long, default_value_t = 0.25)]
    split_fraction: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    graph_degree: usize,
    #[arg(long, default_value_t = 200)]
    ef_construction: usize,
    #[arg(long, default_value_t = 64)]
    ef_search: usize,
}

#[derive(Args)]
struct Graph {
    /// Bucket store metadata (.bkm).
    #[arg(long)]
    store: PathBuf,
    /// Center index (.cidx); defaults to the one next to the store.
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    epsilon: f32,
    #[arg(long, default_value_t = 0.9)]
    lambda: f64,
    /// Initial candidate width L.
    #[arg(long, default_value_t = 256)]
    candidates: usize,
    /// Sum raw arc terms without the dimension constant.
    #[arg(long)]
    no_mu: bool,
    /// Fixed pruning-ball radius instead of bucket radius plus epsilon.
    #[arg(long)]
    ball_radius: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Per-center candidate counts (CSV).
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args)]
struct Orchestrate {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    /// Cache budget: bytes, K/M/G suffix, or a percentage of the stored vectors.
    #[arg(long)]
    cache_bytes: MemorySpec,
    /// Schedule in bucket id order instead of reordering.
    #[arg(long)]
    identity_order: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateCache {
    /// A plan file to take the access sequence and capacity from.
    #[arg(long, conflicts_with = "seq")]
    plan: Option<PathBuf>,
    /// A text file with one bucket id per line.
    #[arg(long)]
    seq: Option<PathBuf>,
    /// Cache capacity in buckets (required with --seq).
    #[arg(long)]
    capacity: Option<usize>,
}

#[derive(Args)]
struct Join {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    epsilon: Option<f32>,
    /// Expected recall target; checked against the graph.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    cache_bytes: MemorySpec,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    deterministic: bool,
    #[arg(long, default_value_t = 2)]
    prefetch_depth: usize,
    /// Use buffered reads.
    #[arg(long)]
    no_direct_io: bool,
    /// Append the stats row to this CSV.
    #[arg(long)]
    stats_csv: Option<PathBuf>,
}

#[derive(Args)]
struct Oracle {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    epsilon: f32,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_N)]
    max_n: u64,
}

#[derive(Args)]
struct Eval {
    #[arg(long)]
    engine: PathBuf,
    #[arg(long)]
    oracle: PathBuf,
    /// Dataset for re-verifying every engine pair.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct Calibrate {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 100.0)]
    target_neighbors: f64,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Re-measure on a fresh sample.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct Pipeline {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// key=value file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f32>,
    #[arg(long)]
    target_neighbors: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Memory budget: bytes, K/M/G suffix, or a percentage of the dataset.
    #[arg(long, alias = "cache")]
    memory: Option<MemorySpec>,
    #[arg(long)]
    num_buckets: Option<u64>,
    #[arg(long)]
    candidates: Option<usize>,
    #[arg(long)]
    no_mu: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    prefetch_depth: Option<usize>,
    #[arg(long)]
    deterministic: bool,
    #[arg(long)]
    no_direct_io: bool,
    /// Compare with the exact oracle after the join.
    #[arg(long)]
    eval: bool,
    /// Extra key=value overrides.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "info")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData(a) => {
            let h = gen_synthetic(
                SynthParams { n: a.n, dim: a.dim, clusters: a.clusters, spread: a.spread, seed: a.seed },
                &a.out,
            )?;
            println!("wrote {} vectors of dim {} to {}", h.count, h.dim, a.out.display());
        }
        Command::Bucketize(a) => cmd_bucketize(a)?,
        Command::Graph(a) => cmd_graph(a)?,
        Command::Orchestrate(a) => cmd_orchestrate(a)?,
        Command::SimulateCache(a) => cmd_simulate(a)?,
        Command::Join(a) => cmd_join(a)?,
        Command::Oracle(a) => {
            let h = open_auto(&a.data)?;
            let set = brute_force_join(&h, a.epsilon, a.max_n)?;
            let mut w = ResultWriter::create(&a.out, PairsHeader { epsilon: a.epsilon as f64, count: h.count })?;
            let pairs: Vec<_> = set.iter().collect();
            w.write_results(&pairs)?;
            w.finish()?;
            println!("pairs={}", set.len());
        }
        Command::Eval(a) => {
            let (he, engine) = read_pairs(&a.engine)?;
            let (_, oracle) = read_pairs(&a.oracle)?;
            let engine = PairSet::from_pairs(engine, Source::Engine);
            let oracle = PairSet::from_pairs(oracle, Source::Oracle);
            match a.data {
                Some(d) => {
                    let h = open_auto(&d)?;
                    let report = evaluate(&engine, &oracle, &h.read_all()?, h.dim, he.epsilon as f32);
                    print!("{}", format_eval(&report));
                }
                None => {
                    println!("recall={:.6}", recall(&engine, &oracle));
                    println!("engine_pairs={}\noracle_pairs={}", engine.len(), oracle.len());
                    println!("matched={}", engine.intersection_len(&oracle));
                }
            }
        }
        Command::Calibrate(a) => {
            let h = open_auto(&a.data)?;
            let c = calibrate_epsilon(&h, a.target_neighbors, a.samples, a.seed)?;
            println!("epsilon={}\nachieved_average={:.3}\nsamples={}", c.epsilon, c.achieved, c.samples);
            if a.check {
                let fresh = average_neighbors(&h, c.epsilon, a.samples, a.seed.wrapping_add(1))?;
                println!("fresh_sample_average={fresh:.3}");
            }
        }
        Command::Pipeline(a) => cmd_pipeline(a)?,
    }
    Ok(())
}

fn cmd_bucketize(a: Bucketize) -> Result<()> {
    let h = open_auto(&a.data)?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let memory = a.memory.resolve(h.vector_bytes());
    let params = BucketizeParams {
        num_centers: a.num_buckets.unwrap_or_else(|| default_num_centers(h.count)),
        seed: a.seed,
        index: IndexParams { graph_degree: a.graph_degree, ef_construction: a.ef_construction },
        layout: LayoutParams {
            memory_budget: memory,
            max_bucket_bytes: Some(((memory as f64 * a.split_fraction) as u64 / 4096) * 4096),
            block_bytes: DEFAULT_BLOCK_BYTES,
            ef_search: a.ef_search,
        },
    };
    let (index, store, stats) =
        bucketize(&h, &params, &a.out_dir.join(STORE_DATA), &a.out_dir.join(STORE_META))?;
    save_index(&index, &a.out_dir.join(INDEX_FILE))?;
    println!("centers={}\nbuckets={}", index.len(), store.num_buckets());
    println!("bytes_written={}\nwrite_amplification={:.6}", stats.bytes_written, stats.write_amplification());
    println!("peak_memory={}\nmemory_budget={memory}", stats.peak_memory);
    Ok(())
}

fn index_beside(store: &Path) -> PathBuf {
    store.with_file_name(INDEX_FILE)
}

fn cmd_graph(a: Graph) -> Result<()> {
    let store = BucketStore::load(&a.store)?;
    let index = load_index(&a.index.unwrap_or_else(|| index_beside(&a.store)))?;
    let mut params = GraphParams::new(a.epsilon, PruneBudget::new(a.lambda, store.dim, !a.no_mu));
    params.candidates = a.candidates;
    if let Some(r) = a.ball_radius {
        params.ball = BallRadius::Fixed(r);
    }
    let (graph, stats) = build_bucket_graph(&index, &store, &params)?;
    let meta = GraphMeta { epsilon: a.epsilon, lambda: a.lambda, apply_mu: !a.no_mu, store_key: store_key(&store) };
    save_graph(&graph, &meta, &a.out)?;
    if let Some(p) = a.stats {
        write_stats_csv(&stats, &p)?;
    }
    println!("nodes={}\nedges={}", graph.num_nodes(), graph.num_edges());
    println!("candidate_pairs={}", graph.candidate_pairs(&store.bucket_counts()));
    Ok(())
}

fn cmd_orchestrate(a: Orchestrate) -> Result<()> {
    let store = BucketStore::load(&a.store)?;
    let (graph, meta) = load_graph(&a.graph)?;
    let key = store_key(&store);
    if meta.store_key != key {
        bail!("graph {} was built for a different bucket store", a.graph.display());
    }
    let cache = a.cache_bytes.resolve(store.count * store.dim as u64 * 4);
    let order = if a.identity_order { Ordering::Identity } else { Ordering::Reordered };
    let plan = orchestrate(&graph, key, round_up_page(store.max_extent_bytes()), cache, order)?;
    save_plan(&plan, &a.out)?;
    println!("capacity={}\ntasks={}", plan.capacity(), plan.schedule.tasks.len());
    println!("planned_misses={}\nplanned_hit_rate={:.6}", plan.eviction.misses, plan.eviction.hit_rate());
    Ok(())
}

fn cmd_simulate(a: SimulateCache) -> Result<()> {
    let (seq, capacity) = match (a.plan, a.seq) {
        (Some(p), _) => {
            let plan = load_plan(&p)?;
            (plan.schedule.access_seq, a.capacity.unwrap_or(plan.eviction.capacity))
        }
        (None, Some(s)) => {
            let text = fs::read_to_string(&s).with_context(|| format!("reading {}", s.display()))?;
            let seq = text
                .split_whitespace()
                .map(|t| t.parse::<u32>().with_context(|| format!("bad bucket id `{t}`")))
                .collect::<Result<Vec<u32>>>()?;
            let Some(c) = a.capacity else { bail!("--capacity is required with --seq") };
            (seq, c)
        }
        (None, None) => bail!("give --plan or --seq"),
    };
    let paired = seq.len() % 2 == 0 && capacity >= 2;
    let mut out = std::io::stdout().lock();
    writeln!(out, "policy,capacity,accesses,misses,hits,hit_rate")?;
    for policy in Policy::ALL {
        let r = if paired {
            simulate_tasks(&seq, capacity, policy)?
        } else {
            ssjoin::core::cache::simulate_policy(&seq, capacity, policy)?
        };
        writeln!(out, "{},{},{},{},{},{:.6}", policy.name(), capacity, seq.len(), r.misses, r.hits, r.hit_rate())?;
    }
    Ok(())
}

fn cmd_join(a: Join) -> Result<()> {
    let h = open_auto(&a.data)?;
    let store = BucketStore::load(&a.store)?;
    if store.count != h.count || store.dim != h.dim {
        bail!("store {} does not match dataset {}", a.store.display(), a.data.display());
    }
    let (graph, meta) = load_graph(&a.graph)?;
    if let Some(l) = a.lambda {
        if (l - meta.lambda).abs() > 1e-12 {
            bail!("graph was built for lambda {} but {l} was requested", meta.lambda);
        }
    }
    let epsilon = a.epsilon.unwrap_or(meta.epsilon);
    if epsilon > meta.epsilon {
        log::warn!("joining at epsilon {epsilon} with a graph built for {}; pairs may be missed", meta.epsilon);
    }
    let plan = load_plan(&a.plan)?;
    let opts = JoinOptions {
        epsilon,
        cache_bytes: a.cache_bytes.resolve(h.vector_bytes()),
        prefetch_depth: a.prefetch_depth,
        deterministic: a.deterministic,
        direct_io: !a.no_direct_io,
    };
    let mut w = ResultWriter::create(&a.out, PairsHeader { epsilon: epsilon as f64, count: h.count })?;
    let stats = run_join(&store, &plan, graph.fingerprint(), store_key(&store), &opts, &mut w)?;
    w.finish()?;
    print!("{}", stats.to_kv());
    if let Some(p) = a.stats_csv {
        stats.append_csv(&p)?;
    }
    Ok(())
}

fn cmd_pipeline(a: Pipeline) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => JoinConfig::load(p)?,
        None => JoinConfig::default(),
    };
    if let Some(v) = a.epsilon {
        cfg.epsilon = Some(v);
    }
    if let Some(v) = a.target_neighbors {
        cfg.target_neighbors = v;
    }
    if let Some(v) = a.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = a.memory {
        cfg.memory = v;
    }
    if let Some(v) = a.num_buckets {
        cfg.num_buckets = Some(v);
    }
    if let Some(v) = a.candidates {
        cfg.candidates = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.prefetch_depth {
        cfg.prefetch_depth = v;
    }
    cfg.apply_mu &= !a.no_mu;
    cfg.deterministic |= a.deterministic;
    cfg.direct_io &= !a.no_direct_io;
    cfg.evaluate |= a.eval;
    for kv in &a.set {
        let (k, v) = kv.split_once('=').with_context(|| format!("expected KEY=VALUE, got `{kv}`"))?;
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    let report = run_pipeline(&cfg, &a.data, &a.out_dir)?;
    println!("epsilon={}", report.epsilon);
    println!("skipped={}", report.skipped.join(","));
    println!("buckets={}\nedges={}\ncandidate_pairs={}", report.num_buckets, report.num_edges, report.candidate_pairs);
    print!("{}", report.stats.to_kv());
    if let Some(e) = &report.eval {
        print!("{}", format_eval(e));
    }
    Ok(())
}

//! End-to-end run with content-addressed phase reuse.
//!
//! Each phase records a key in `manifest.txt` computed from its inputs and
//! the settings it depends on. A phase whose key matches and whose artifacts
//! load cleanly is skipped.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ssjoin_core::bucket::round_up_page;
use ssjoin_core::eval::{PairSet, Source};
use ssjoin_core::fingerprint::Fnv;
use ssjoin_core::graph::{BallRadius, GraphParams, PruneBudget};
use ssjoin_core::hnsw::IndexParams;

use crate::bucketize::{bucketize, default_num_centers, BucketStore, BucketizeParams, LayoutParams, LayoutStats};
use crate::config::JoinConfig;
use crate::dataset::{open_auto, DatasetHandle};
use crate::error::{Error, IoContext, Result};
use crate::executor::{run_join, JoinOptions};
use crate::graph_io::{build_bucket_graph, load_graph, save_graph, store_key, write_stats_csv, GraphMeta};
use crate::index_file::{load_index, save_index};
use crate::oracle::{brute_force_join, calibrate_epsilon, evaluate, EvalReport};
use crate::orchestrate::{load_plan, orchestrate, save_plan, Ordering};
use crate::results::{read_pairs, PairsHeader, ResultWriter};
use crate::stats::RunStats;

pub const INDEX_FILE: &str = "centers.cidx";
pub const STORE_DATA: &str = "store.bks";
pub const STORE_META: &str = "store.bkm";
pub const GRAPH_FILE: &str = "graph.bdg";
pub const GRAPH_STATS: &str = "graph_stats.csv";
pub const PLAN_FILE: &str = "schedule.plan";
pub const RESULTS_FILE: &str = "results.pairs";
pub const STATS_TEXT: &str = "stats.txt";
pub const STATS_CSV: &str = "stats.csv";
pub const CONFIG_FILE: &str = "config.txt";
pub const EVAL_FILE: &str = "eval.txt";
const MANIFEST: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub epsilon: f32,
    pub memory_budget: u64,
    pub stats: RunStats,
    pub skipped: Vec<&'static str>,
    pub layout: Option<LayoutStats>,
    pub num_buckets: usize,
    pub num_edges: usize,
    pub candidate_pairs: u64,
    pub eval: Option<EvalReport>,
    pub out_dir: PathBuf,
}

/// Bucket budget, cache budget and the split threshold derived from one
/// memory budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budgets {
    pub memory: u64,
    pub layout: u64,
    pub max_bucket_bytes: u64,
}

pub fn budgets(cfg: &JoinConfig, handle: &DatasetHandle) -> Budgets {
    let memory = cfg.memory.resolve(handle.vector_bytes());
    let max_bucket_bytes = ((memory as f64 * cfg.split_fraction) as u64 / 4096) * 4096;
    let layout = cfg.layout_memory.map_or(memory, |m| m.resolve(handle.vector_bytes()));
    Budgets { memory, layout, max_bucket_bytes }
}

fn manifest(dir: &Path) -> BTreeMap<String, String> {
    fs::read_to_string(dir.join(MANIFEST))
        .unwrap_or_default()
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

fn save_manifest(dir: &Path, m: &BTreeMap<String, String>) -> Result<()> {
    let text: String = m.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    let path = dir.join(MANIFEST);
    let tmp = crate::codec::temp_path(&path);
    fs::write(&tmp, text).at(&tmp)?;
    fs::rename(&tmp, &path).at(&path)
}

fn key_hex(parts: &[u64]) -> String {
    let mut h = Fnv::new();
    for &p in parts {
        h.write_u64(p);
    }
    format!("{:016x}", h.finish())
}

/// Runs bucketize, graph, orchestrate and join (plus evaluation when
/// configured), writing artifacts and stats to `out_dir`.
pub fn run_pipeline(cfg: &JoinConfig, data: &Path, out_dir: &Path) -> Result<PipelineReport> {
    cfg.validate()?;
    // fail before touching the output directory
    let handle = open_auto(data)?;
    let created = !out_dir.exists();
    fs::create_dir_all(out_dir).at(out_dir)?;
    let result = pipeline_inner(cfg, &handle, out_dir);
    if result.is_err() && created {
        // only an empty directory is removed; complete artifacts stay reusable
        let _ = fs::remove_dir(out_dir);
    }
    result
}

fn pipeline_inner(cfg: &JoinConfig, handle: &DatasetHandle, dir: &Path) -> Result<PipelineReport> {
    let mut man = manifest(dir);
    let mut skipped = Vec::new();
    let mut times = crate::stats::PhaseTimes::default();
    let budget = budgets(cfg, handle);
    let data_key = handle.content_key()?;

    let epsilon = match cfg.epsilon {
        Some(e) => e,
        None => {
            let cal_key = key_hex(&[data_key, cfg.target_neighbors.to_bits(), cfg.calibration_samples as u64, cfg.seed]);
            match man.get("calibrated_epsilon").and_then(|v| v.split_once(':')) {
                Some((k, v)) if k == cal_key => v.parse().map_err(|_| Error::InvalidArgument("bad manifest".into()))?,
                _ => {
                    let c = calibrate_epsilon(handle, cfg.target_neighbors, cfg.calibration_samples.min(handle.count as usize), cfg.seed)?;
                    log::info!("calibrated epsilon {} (sample average {:.1} neighbors)", c.epsilon, c.achieved);
                    man.insert("calibrated_epsilon".into(), format!("{cal_key}:{}", c.epsilon));
                    save_manifest(dir, &man)?;
                    c.epsilon
                }
            }
        }
    };

    let m = cfg.num_buckets.unwrap_or_else(|| default_num_centers(handle.count));
    let bucket_key = key_hex(&[
        data_key,
        m,
        cfg.seed,
        cfg.graph_degree as u64,
        cfg.ef_construction as u64,
        cfg.ef_search as u64,
        budget.layout,
        budget.max_bucket_bytes,
    ]);
    let (index_path, data_path, meta_path) = (dir.join(INDEX_FILE), dir.join(STORE_DATA), dir.join(STORE_META));
    let reuse = man.get("bucketize") == Some(&bucket_key);
    let loaded = if reuse {
        load_index(&index_path).and_then(|i| Ok((i, BucketStore::load(&meta_path)?))).ok()
    } else {
        None
    };
    let (index, store, layout) = match loaded {
        Some((i, s)) if s.data_path.exists() => {
            skipped.push("bucketize");
            (i, s, None)
        }
        _ => {
            let t = Instant::now();
            let params = BucketizeParams {
                num_centers: m,
                seed: cfg.seed,
                index: IndexParams { graph_degree: cfg.graph_degree, ef_construction: cfg.ef_construction },
                layout: LayoutParams {
                    memory_budget: budget.layout,
                    max_bucket_bytes: Some(budget.max_bucket_bytes),
                    block_bytes: cfg.block_bytes,
                    ef_search: cfg.ef_search,
                },
            };
            man.remove("bucketize");
            let (index, store, ls) = bucketize(handle, &params, &data_path, &meta_path)?;
            save_index(&index, &index_path)?;
            man.insert("bucketize".into(), bucket_key.clone());
            save_manifest(dir, &man)?;
            times.bucketize = t.elapsed().as_secs_f64();
            log::info!(
                "bucketized into {} buckets ({} centers), write amplification {:.4}",
                store.num_buckets(),
                index.len(),
                ls.write_amplification()
            );
            (index, store, Some(ls))
        }
    };
    let skey = store_key(&store);

    let ball_bits = cfg.ball_radius.map_or(u64::MAX, f64::to_bits);
    let graph_key = key_hex(&[
        skey,
        epsilon.to_bits() as u64,
        cfg.lambda.to_bits(),
        cfg.candidates as u64,
        cfg.apply_mu as u64,
        ball_bits,
    ]);
    let graph_path = dir.join(GRAPH_FILE);
    let graph = match (man.get("graph") == Some(&graph_key)).then(|| load_graph(&graph_path).ok()).flatten() {
        Some((g, meta)) if meta.store_key == skey => {
            skipped.push("graph");
            g
        }
        _ => {
            let t = Instant::now();
            let mut params = GraphParams::new(epsilon, PruneBudget::new(cfg.lambda, store.dim, cfg.apply_mu));
            params.candidates = cfg.candidates;
            if let Some(r) = cfg.ball_radius {
                params.ball = BallRadius::Fixed(r);
            }
            man.remove("graph");
            let (g, cstats) = build_bucket_graph(&index, &store, &params)?;
            let meta = GraphMeta { epsilon, lambda: cfg.lambda, apply_mu: cfg.apply_mu, store_key: skey };
            save_graph(&g, &meta, &graph_path)?;
            write_stats_csv(&cstats, &dir.join(GRAPH_STATS))?;
            man.insert("graph".into(), graph_key.clone());
            save_manifest(dir, &man)?;
            times.graph = t.elapsed().as_secs_f64();
            g
        }
    };

    let cache_bytes = budget.memory;
    let slot = round_up_page(store.max_extent_bytes());
    let plan_key = key_hex(&[graph.fingerprint(), skey, cache_bytes, slot]);
    let plan_path = dir.join(PLAN_FILE);
    let plan = match (man.get("orchestrate") == Some(&plan_key)).then(|| load_plan(&plan_path).ok()).flatten() {
        Some(p) if p.graph_fingerprint == graph.fingerprint() => {
            skipped.push("orchestrate");
            p
        }
        _ => {
            let t = Instant::now();
            man.remove("orchestrate");
            let p = orchestrate(&graph, skey, slot, cache_bytes, Ordering::Reordered)?;
            save_plan(&p, &plan_path)?;
            man.insert("orchestrate".into(), plan_key);
            save_manifest(dir, &man)?;
            times.orchestrate = t.elapsed().as_secs_f64();
            p
        }
    };

    let opts = JoinOptions {
        epsilon,
        cache_bytes,
        prefetch_depth: cfg.prefetch_depth,
        deterministic: cfg.deterministic,
        direct_io: cfg.direct_io,
    };
    let results_path = dir.join(RESULTS_FILE);
    let mut writer = ResultWriter::create(&results_path, PairsHeader { epsilon: epsilon as f64, count: handle.count })?;
    let mut stats = run_join(&store, &plan, graph.fingerprint(), skey, &opts, &mut writer)?;
    writer.finish()?;
    let execute = stats.times.execute;
    stats.times = times;
    stats.times.execute = execute;
    fs::write(dir.join(STATS_TEXT), stats.to_kv()).at(dir.join(STATS_TEXT))?;
    stats.append_csv(&dir.join(STATS_CSV))?;

    let mut effective = cfg.clone();
    effective.epsilon = Some(epsilon);
    effective.num_buckets = Some(m);
    fs::write(dir.join(CONFIG_FILE), effective.to_text()).at(dir.join(CONFIG_FILE))?;

    let eval = if cfg.evaluate {
        let oracle = brute_force_join(handle, epsilon, cfg.oracle_max_n)?;
        let (_, pairs) = read_pairs(&results_path)?;
        let engine = PairSet::from_pairs(pairs, Source::Engine);
        let vectors = handle.read_all()?;
        let report = evaluate(&engine, &oracle, &vectors, handle.dim, epsilon);
        fs::write(dir.join(EVAL_FILE), format_eval(&report)).at(dir.join(EVAL_FILE))?;
        Some(report)
    } else {
        None
    };

    Ok(PipelineReport {
        epsilon,
        memory_budget: budget.layout,
        stats,
        skipped,
        layout,
        num_buckets: store.num_buckets(),
        num_edges: graph.num_edges(),
        candidate_pairs: graph.candidate_pairs(&store.bucket_counts()),
        eval,
        out_dir: dir.to_path_buf(),
    })
}

pub fn format_eval(r: &EvalReport) -> String {
    format!(
        "recall={:.6}\nprecision={:.6}\nengine_pairs={}\noracle_pairs={}\nmatched={}\nviolations={}\ndistance_warnings={}\n",
        r.recall, r.precision, r.engine_pairs, r.oracle_pairs, r.matched, r.violations, r.distance_warnings
    )
}

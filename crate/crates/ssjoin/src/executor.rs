//! Plan-driven join execution: a loader thread reads buckets in plan order
//! into a byte-bounded cache while the caller's thread verifies tasks.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::sync_channel;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use ssjoin_core::bucket::record_bytes;
use ssjoin_core::cache::Step;
use ssjoin_core::verify::{verify_pair, verify_rows, ResultPair};

use crate::bucketize::{BucketPayload, BucketStore};
use crate::direct_io::{AlignedBuf, DirectReader};
use crate::error::{Error, Result};
use crate::memory::MemoryAccountant;
use crate::orchestrate::Plan;
use crate::results::PairSink;
use crate::stats::RunStats;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JoinOptions {
    pub epsilon: f32,
    pub cache_bytes: u64,
    /// Loads the loader may run ahead of compute.
    pub prefetch_depth: usize,
    /// Verify on one thread and emit strictly in task order.
    pub deterministic: bool,
    pub direct_io: bool,
}

impl JoinOptions {
    pub fn new(epsilon: f32, cache_bytes: u64) -> Self {
        JoinOptions {
            epsilon,
            cache_bytes,
            prefetch_depth: 2,
            deterministic: false,
            direct_io: true,
        }
    }
}

struct Loaded {
    payload: BucketPayload,
    charge: u64,
}

fn check_plan(store: &BucketStore, plan: &Plan, graph_fingerprint: u64, store_key: u64, opts: &JoinOptions) -> Result<()> {
    let mismatch = |m: String| Err(Error::PlanMismatch(m));
    if plan.num_buckets != store.num_buckets() {
        return mismatch(format!("plan has {} buckets, store has {}", plan.num_buckets, store.num_buckets()));
    }
    if plan.graph_fingerprint != graph_fingerprint {
        return mismatch("plan was made for a different graph".into());
    }
    if plan.store_key != store_key {
        return mismatch("plan was made for a different bucket store".into());
    }
    if plan.slot_bytes < store.max_extent_bytes() {
        return mismatch("plan slots are smaller than the largest bucket".into());
    }
    if plan.eviction.steps.len() != plan.schedule.access_seq.len() {
        return mismatch("eviction plan and access sequence differ in length".into());
    }
    if plan.capacity() as u64 * plan.slot_bytes > opts.cache_bytes {
        return Err(Error::BudgetInfeasible {
            budget: opts.cache_bytes,
            reason: format!("plan needs {} slots of {} bytes", plan.capacity(), plan.slot_bytes),
        });
    }
    if !(opts.epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    Ok(())
}

/// Executes every task of `plan` and streams epsilon pairs to `sink`.
///
/// `graph_fingerprint` and `store_key` identify the graph and store the
/// caller expects; a plan made for anything else is rejected.
pub fn run_join(
    store: &BucketStore,
    plan: &Plan,
    graph_fingerprint: u64,
    store_key: u64,
    opts: &JoinOptions,
    sink: &mut dyn PairSink,
) -> Result<RunStats> {
    check_plan(store, plan, graph_fingerprint, store_key, opts)?;
    let started = Instant::now();
    let cache = MemoryAccountant::new(opts.cache_bytes);
    let abort = AtomicBool::new(false);
    let loads: Vec<u32> = plan
        .eviction
        .steps
        .iter()
        .filter_map(|s| match *s {
            Step::Load { bucket, .. } => Some(bucket),
            Step::Hit => None,
        })
        .collect();
    let rec = record_bytes(store.dim);
    let mut reader = DirectReader::open(&store.data_path, opts.direct_io)?;

    let (tx, rx) = sync_channel::<Result<Loaded>>(opts.prefetch_depth.max(1));
    let mut stats = RunStats {
        capacity: plan.capacity() as u64,
        cache_bytes: opts.cache_bytes,
        planned_misses: plan.eviction.misses,
        tasks: plan.schedule.tasks.len() as u64,
        ..RunStats::default()
    };

    let outcome = std::thread::scope(|scope| {
        let cache = &cache;
        let abort = &abort;
        let loads = &loads;
        let reader = &mut reader;
        let loader = scope.spawn(move || -> (u64, u64, bool) {
            let mut buf = AlignedBuf::default();
            let mut useful = 0u64;
            for &b in loads {
                let bucket = &store.buckets[b as usize];
                let charge = bucket.extent.length;
                let item = cache.acquire(charge, abort).and_then(|()| {
                    store.read_bucket(b, reader, &mut buf).inspect_err(|_| cache.release(charge))
                });
                let failed = item.is_err();
                if item.is_ok() {
                    useful += bucket.count * rec;
                }
                let sent = tx.send(item.map(|payload| Loaded { payload, charge }));
                if failed || sent.is_err() {
                    break;
                }
            }
            (reader.bytes_read(), useful, reader.is_direct())
        });

        let result = execute(store, plan, opts, sink, &rx, cache, &mut stats);
        if result.is_err() {
            abort.store(true, Ordering::Relaxed);
        }
        drop(rx);
        let (total, useful, direct) = loader.join().expect("loader thread panicked");
        stats.bytes_total = total;
        stats.bytes_useful = useful;
        stats.direct_io = direct;
        result
    });
    outcome?;
    stats.peak_resident_bytes = cache.peak();
    stats.times.execute = started.elapsed().as_secs_f64();
    Ok(stats)
}

fn execute(
    store: &BucketStore,
    plan: &Plan,
    opts: &JoinOptions,
    sink: &mut dyn PairSink,
    rx: &std::sync::mpsc::Receiver<Result<Loaded>>,
    cache: &MemoryAccountant,
    stats: &mut RunStats,
) -> Result<()> {
    let mut resident: Vec<Option<(Arc<BucketPayload>, u64)>> = vec![None; store.num_buckets()];
    let mut resident_count = 0u64;
    let mut out = Vec::new();
    for (t, &(a, b)) in plan.schedule.tasks.iter().enumerate() {
        for (k, &bucket) in [a, b].iter().enumerate() {
            match plan.eviction.steps[2 * t + k] {
                Step::Hit => {
                    if resident[bucket as usize].is_none() {
                        return Err(Error::PlanMismatch(format!("task {t}: bucket {bucket} planned as a hit but not resident")));
                    }
                    stats.cache_hits += 1;
                }
                Step::Load { bucket: target, evict } => {
                    if target != bucket {
                        return Err(Error::PlanMismatch(format!("task {t}: plan loads {target}, task needs {bucket}")));
                    }
                    if let Some(e) = evict {
                        let (payload, charge) = resident[e as usize]
                            .take()
                            .ok_or_else(|| Error::PlanMismatch(format!("task {t}: evicting non-resident bucket {e}")))?;
                        // the payload is dropped here; no verifier holds it between tasks
                        drop(payload);
                        cache.release(charge);
                        resident_count -= 1;
                    }
                    let loaded = rx
                        .recv()
                        .map_err(|_| Error::PlanMismatch("loader stopped early".into()))??;
                    if loaded.payload.bucket != bucket {
                        return Err(Error::PlanMismatch(format!("loader delivered {} instead of {bucket}", loaded.payload.bucket)));
                    }
                    resident[bucket as usize] = Some((Arc::new(loaded.payload), loaded.charge));
                    resident_count += 1;
                    stats.cache_misses += 1;
                    stats.peak_resident_buckets = stats.peak_resident_buckets.max(resident_count);
                    if resident_count > plan.capacity() as u64 {
                        return Err(Error::PlanMismatch(format!("{resident_count} buckets resident, capacity {}", plan.capacity())));
                    }
                }
            }
        }
        let pa = resident[a as usize].as_ref().map(|r| Arc::clone(&r.0)).unwrap();
        let pb = resident[b as usize].as_ref().map(|r| Arc::clone(&r.0)).unwrap();
        out.clear();
        stats.distance_computations += verify_task(&pa, &pb, a == b, opts, &mut out);
        stats.pairs += out.len() as u64;
        sink.emit(&out)?;
    }
    for (payload, charge) in resident.into_iter().flatten() {
        drop(payload);
        cache.release(charge);
    }
    Ok(())
}

/// Rows of the task's first bucket handed to one verifier.
const ROWS_PER_CHUNK: usize = 64;

fn verify_task(a: &BucketPayload, b: &BucketPayload, same: bool, opts: &JoinOptions, out: &mut Vec<ResultPair>) -> u64 {
    if opts.deterministic || a.len() <= ROWS_PER_CHUNK {
        return verify_pair(a.as_ref(), b.as_ref(), opts.epsilon, same, out);
    }
    let chunks: Vec<(Vec<ResultPair>, u64)> = (0..a.len())
        .step_by(ROWS_PER_CHUNK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let mut local = Vec::new();
            let rows = start..(start + ROWS_PER_CHUNK).min(a.len());
            let dc = verify_rows(a.as_ref(), rows, b.as_ref(), opts.epsilon, same, &mut local);
            (local, dc)
        })
        .collect();
    let mut dc = 0;
    for (pairs, n) in chunks {
        out.extend(pairs);
        dc += n;
    }
    dc
}

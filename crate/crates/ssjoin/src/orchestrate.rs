//! Task ordering, eviction planning and the `.plan` file.

use std::path::Path;

use ssjoin_core::cache::{belady_task_plan, simulate_tasks, EvictionPlan, Policy, SimResult, Step};
use ssjoin_core::graph::BucketGraph;
use ssjoin_core::reorder::{reorder, window_size};
use ssjoin_core::schedule::{make_schedule, TaskSchedule};

use crate::codec::{open_decoder, write_atomic};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SSJPLAN\0";
const VERSION: u32 = 1;

/// A schedule plus its eviction plan, tied to one graph and store.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub schedule: TaskSchedule,
    pub eviction: EvictionPlan,
    pub graph_fingerprint: u64,
    pub store_key: u64,
    pub num_buckets: usize,
    /// Bytes charged per cache slot (the largest padded extent).
    pub slot_bytes: u64,
    pub cache_bytes: u64,
}

impl Plan {
    pub fn capacity(&self) -> usize {
        self.eviction.capacity
    }
}

/// Cache slots that fit in `cache_bytes` when every slot holds the largest bucket.
pub fn capacity_for(cache_bytes: u64, slot_bytes: u64, num_buckets: usize) -> usize {
    if slot_bytes == 0 {
        return num_buckets.max(2);
    }
    (cache_bytes / slot_bytes).min(num_buckets.max(2) as u64) as usize
}

/// Which node order to schedule with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ordering {
    /// Windowed greedy reordering.
    Reordered,
    /// Bucket id order.
    Identity,
}

pub fn schedule_for(graph: &BucketGraph, capacity: usize, ordering: Ordering) -> Result<TaskSchedule> {
    let n = graph.num_nodes();
    let (perm, window) = match ordering {
        Ordering::Reordered => {
            let r = reorder(graph, capacity);
            (r.perm, r.window)
        }
        Ordering::Identity => ((0..n as u32).collect(), window_size(graph, capacity)),
    };
    Ok(make_schedule(graph, &perm, window)?)
}

/// Reorders, schedules and plans evictions for `cache_bytes` of bucket cache.
pub fn orchestrate(
    graph: &BucketGraph,
    store_key: u64,
    slot_bytes: u64,
    cache_bytes: u64,
    ordering: Ordering,
) -> Result<Plan> {
    let n = graph.num_nodes();
    let capacity = capacity_for(cache_bytes, slot_bytes, n);
    if capacity < 2 {
        return Err(Error::BudgetInfeasible {
            budget: cache_bytes,
            reason: format!("room for {capacity} buckets of {slot_bytes} bytes; a task needs two"),
        });
    }
    let schedule = schedule_for(graph, capacity, ordering)?;
    let eviction = belady_task_plan(&schedule.access_seq, n, capacity)?;
    Ok(Plan {
        schedule,
        eviction,
        graph_fingerprint: graph.fingerprint(),
        store_key,
        num_buckets: n,
        slot_bytes,
        cache_bytes,
    })
}

/// Hits and misses of a policy on the pinned task replay of a schedule.
pub fn simulate(schedule: &TaskSchedule, capacity: usize, policy: Policy) -> Result<SimResult> {
    Ok(simulate_tasks(&schedule.access_seq, capacity, policy)?)
}

pub fn save_plan(plan: &Plan, path: &Path) -> Result<()> {
    let s = &plan.schedule;
    write_atomic(path, |e| {
        e.bytes(MAGIC)?;
        e.u32(VERSION)?;
        e.u32(plan.num_buckets as u32)?;
        e.u32(plan.eviction.capacity as u32)?;
        e.u64(s.window as u64)?;
        e.u64(plan.graph_fingerprint)?;
        e.u64(plan.store_key)?;
        e.u64(plan.slot_bytes)?;
        e.u64(plan.cache_bytes)?;
        e.u32s(&s.perm)?;
        e.u64(s.tasks.len() as u64)?;
        for &(a, b) in &s.tasks {
            e.u32(a)?;
            e.u32(b)?;
        }
        for step in &plan.eviction.steps {
            match *step {
                Step::Hit => e.u8(0)?,
                Step::Load { bucket, evict: None } => {
                    e.u8(1)?;
                    e.u32(bucket)?;
                }
                Step::Load { bucket, evict: Some(v) } => {
                    e.u8(2)?;
                    e.u32(bucket)?;
                    e.u32(v)?;
                }
            }
        }
        Ok(())
    })
}

pub fn load_plan(path: &Path) -> Result<Plan> {
    let mut d = open_decoder(path)?;
    d.header(MAGIC, VERSION)?;
    let n = d.u32()? as usize;
    let capacity = d.u32()? as usize;
    let window = d.u64()? as usize;
    let graph_fingerprint = d.u64()?;
    let store_key = d.u64()?;
    let slot_bytes = d.u64()?;
    let cache_bytes = d.u64()?;
    let perm = d.u32s(n)?;
    let num_tasks = d.u64()? as usize;
    let mut tasks = Vec::with_capacity(num_tasks);
    let mut access_seq = Vec::with_capacity(2 * num_tasks);
    for _ in 0..num_tasks {
        let (a, b) = (d.u32()?, d.u32()?);
        if a as usize >= n || b as usize >= n {
            return Err(d.bad("task refers to a missing bucket"));
        }
        tasks.push((a, b));
        access_seq.extend([a, b]);
    }
    let mut steps = Vec::with_capacity(access_seq.len());
    let (mut hits, mut misses) = (0, 0);
    for _ in 0..access_seq.len() {
        let step = match d.u8()? {
            0 => {
                hits += 1;
                Step::Hit
            }
            1 => Step::Load { bucket: d.u32()?, evict: None },
            2 => Step::Load { bucket: d.u32()?, evict: Some(d.u32()?) },
            _ => return Err(d.bad("unknown plan step")),
        };
        if matches!(step, Step::Load { .. }) {
            misses += 1;
        }
        steps.push(step);
    }
    d.finish()?;
    let eviction = EvictionPlan { capacity, steps, misses, hits };
    eviction
        .replay(&access_seq, true)
        .map_err(|e| Error::PlanMismatch(format!("{}: {e}", path.display())))?;
    Ok(Plan {
        schedule: TaskSchedule { perm, tasks, access_seq, window },
        eviction,
        graph_fingerprint,
        store_key,
        num_buckets: n,
        slot_bytes,
        cache_bytes,
    })
}

//! Eviction planning and cache-policy simulation over a known access sequence.
//!
//! [`belady_plan`] implements the offline optimal policy: on a miss with a full
//! cache it evicts the resident bucket whose next access lies farthest in the
//! future (never-again buckets first, lowest id on ties). The access positions
//! of every bucket are collected in a first pass and a max-heap keyed by next
//! access drives the second pass.

use alloc::collections::{BTreeMap, BinaryHeap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use crate::error::{Error, Result};

const NEVER: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Hit,
    Load { bucket: u32, evict: Option<u32> },
}

/// One action per access of the sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvictionPlan {
    pub capacity: usize,
    pub steps: Vec<Step>,
    pub misses: u64,
    pub hits: u64,
}

impl EvictionPlan {
    pub fn hit_rate(&self) -> f64 {
        hit_rate(self.hits, self.misses)
    }

    /// Replays the plan against `access_seq` and checks that the cache never
    /// exceeds capacity and that every access finds its bucket resident. With
    /// `pairs`, both operands of every task `(seq[2t], seq[2t+1])` must be
    /// resident together. Returns the peak number of resident buckets.
    pub fn replay(&self, access_seq: &[u32], pairs: bool) -> core::result::Result<usize, &'static str> {
        if self.steps.len() != access_seq.len() {
            return Err("plan length differs from the access sequence");
        }
        let mut resident: Vec<u32> = Vec::new();
        let mut peak = 0;
        for (i, (&b, step)) in access_seq.iter().zip(&self.steps).enumerate() {
            match *step {
                Step::Hit => {
                    if !resident.contains(&b) {
                        return Err("hit on a bucket that is not resident");
                    }
                }
                Step::Load { bucket, evict } => {
                    if bucket != b || resident.contains(&b) {
                        return Err("load does not match the access");
                    }
                    if let Some(e) = evict {
                        let pos = resident.iter().position(|&r| r == e).ok_or("evicting a non-resident bucket")?;
                        resident.swap_remove(pos);
                    }
                    resident.push(b);
                }
            }
            peak = peak.max(resident.len());
            if resident.len() > self.capacity {
                return Err("cache over capacity");
            }
            if pairs && i % 2 == 1 && !resident.contains(&access_seq[i - 1]) {
                return Err("task operand evicted before the task ran");
            }
        }
        Ok(peak)
    }
}

pub fn hit_rate(hits: u64, misses: u64) -> f64 {
    let total = hits + misses;
    if total == 0 {
        1.0
    } else {
        hits as f64 / total as f64
    }
}

/// Optimal eviction plan for a raw access sequence. Requires `capacity >= 2`.
pub fn belady_plan(access_seq: &[u32], num_buckets: usize, capacity: usize) -> Result<EvictionPlan> {
    if capacity < 2 {
        return Err(Error::CapacityTooSmall { capacity });
    }
    Ok(belady(access_seq, num_buckets, capacity, false))
}

/// Eviction plan for a flattened task sequence: while the second operand of a
/// task is loaded, the first operand is never chosen as the victim.
pub fn belady_task_plan(access_seq: &[u32], num_buckets: usize, capacity: usize) -> Result<EvictionPlan> {
    if capacity < 2 {
        return Err(Error::CapacityTooSmall { capacity });
    }
    if access_seq.len() % 2 != 0 {
        return Err(Error::InvalidArgument("task sequence must have even length"));
    }
    Ok(belady(access_seq, num_buckets, capacity, true))
}

fn belady(seq: &[u32], num_buckets: usize, capacity: usize, pin_partner: bool) -> EvictionPlan {
    let m = num_buckets.max(seq.iter().map(|&b| b as usize + 1).max().unwrap_or(0));
    // pass 1: access positions per bucket
    let mut positions: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (i, &b) in seq.iter().enumerate() {
        positions[b as usize].push(i);
    }
    let mut seen = vec![0usize; m];
    let mut next_of = vec![NEVER; m];
    let mut resident = vec![false; m];
    let mut size = 0usize;
    let mut heap: BinaryHeap<(usize, Reverse<u32>)> = BinaryHeap::new();
    let mut steps = Vec::with_capacity(seq.len());
    let (mut hits, mut misses) = (0u64, 0u64);

    // pass 2
    for (i, &b) in seq.iter().enumerate() {
        let bi = b as usize;
        seen[bi] += 1;
        let next = positions[bi].get(seen[bi]).copied().unwrap_or(NEVER);
        if resident[bi] {
            hits += 1;
            steps.push(Step::Hit);
        } else {
            misses += 1;
            let mut evict = None;
            if size == capacity {
                let partner = (pin_partner && i % 2 == 1).then(|| seq[i - 1]);
                let mut held = None;
                while let Some((key, Reverse(v))) = heap.pop() {
                    if !resident[v as usize] || next_of[v as usize] != key {
                        continue;
                    }
                    if Some(v) == partner {
                        held = Some((key, Reverse(v)));
                        continue;
                    }
                    evict = Some(v);
                    break;
                }
                if let Some(h) = held {
                    heap.push(h);
                }
                let v = evict.expect("a full cache always has a victim");
                resident[v as usize] = false;
                size -= 1;
            }
            resident[bi] = true;
            size += 1;
            steps.push(Step::Load { bucket: b, evict });
        }
        next_of[bi] = next;
        heap.push((next, Reverse(b)));
    }
    EvictionPlan {
        capacity,
        steps,
        misses,
        hits,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    Lru,
    Fifo,
    Belady,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::Lru, Policy::Fifo, Policy::Belady];

    pub fn name(self) -> &'static str {
        match self {
            Policy::Lru => "lru",
            Policy::Fifo => "fifo",
            Policy::Belady => "belady",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimResult {
    pub misses: u64,
    pub hits: u64,
}

impl SimResult {
    pub fn hit_rate(&self) -> f64 {
        hit_rate(self.hits, self.misses)
    }
}

/// Replays `access_seq` through a cache of `capacity` buckets.
pub fn simulate_policy(access_seq: &[u32], capacity: usize, policy: Policy) -> Result<SimResult> {
    simulate(access_seq, capacity, policy, false)
}

/// Like [`simulate_policy`] but treats the sequence as task pairs and never
/// evicts the first operand while loading the second.
pub fn simulate_tasks(access_seq: &[u32], capacity: usize, policy: Policy) -> Result<SimResult> {
    if capacity < 2 {
        return Err(Error::CapacityTooSmall { capacity });
    }
    simulate(access_seq, capacity, policy, true)
}

fn simulate(seq: &[u32], capacity: usize, policy: Policy, pairs: bool) -> Result<SimResult> {
    if capacity == 0 {
        return Err(Error::CapacityTooSmall { capacity });
    }
    if policy == Policy::Belady {
        let plan = belady(seq, 0, capacity, pairs);
        return Ok(SimResult {
            misses: plan.misses,
            hits: plan.hits,
        });
    }
    let m = seq.iter().map(|&b| b as usize + 1).max().unwrap_or(0);
    // stamp: last use (LRU) or insertion time (FIFO)
    let mut stamp: Vec<Option<usize>> = vec![None; m];
    let mut order: BTreeMap<usize, u32> = BTreeMap::new();
    let mut fifo: VecDeque<u32> = VecDeque::new();
    let (mut hits, mut misses) = (0u64, 0u64);
    for (i, &b) in seq.iter().enumerate() {
        let bi = b as usize;
        let partner = (pairs && i % 2 == 1).then(|| seq[i - 1]);
        if let Some(t) = stamp[bi] {
            hits += 1;
            if policy == Policy::Lru {
                order.remove(&t);
                order.insert(i, b);
                stamp[bi] = Some(i);
            }
            continue;
        }
        misses += 1;
        match policy {
            Policy::Lru => {
                if order.len() == capacity {
                    let (&t, &v) = order
                        .iter()
                        .find(|(_, &v)| Some(v) != partner)
                        .expect("capacity >= 2 leaves a victim");
                    order.remove(&t);
                    stamp[v as usize] = None;
                }
                order.insert(i, b);
            }
            Policy::Fifo => {
                if fifo.len() == capacity {
                    let pos = fifo
                        .iter()
                        .position(|&v| Some(v) != partner)
                        .expect("capacity >= 2 leaves a victim");
                    let v = fifo.remove(pos).unwrap();
                    stamp[v as usize] = None;
                }
                fifo.push_back(b);
            }
            Policy::Belady => unreachable!(),
        }
        stamp[bi] = Some(i);
    }
    Ok(SimResult { misses, hits })
}

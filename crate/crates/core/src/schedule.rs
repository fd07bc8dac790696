//! Task order induced by a node permutation.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::BucketGraph;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSchedule {
    /// `perm[new position] = original bucket id`.
    pub perm: Vec<u32>,
    /// Bucket pairs in processing order; `(b, b)` is an intra-bucket task.
    pub tasks: Vec<(u32, u32)>,
    /// Flattened task endpoints, `2 * tasks.len()` long.
    pub access_seq: Vec<u32>,
    pub window: usize,
}

pub fn is_permutation(perm: &[u32], n: usize) -> bool {
    if perm.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p as usize >= n || core::mem::replace(&mut seen[p as usize], true) {
            return false;
        }
    }
    true
}

/// Visits nodes in `perm` order and emits each node's out-edges ordered by the
/// neighbor's position in `perm`. When the graph checks self pairs, a bucket's
/// intra-bucket task is emitted right before the first task that touches it,
/// so it always precedes that bucket's own out-edges.
pub fn make_schedule(graph: &BucketGraph, perm: &[u32], window: usize) -> Result<TaskSchedule> {
    let n = graph.num_nodes();
    if !is_permutation(perm, n) {
        return Err(Error::InvalidArgument("perm is not a permutation of the bucket ids"));
    }
    let mut position = vec![0u32; n];
    for (i, &v) in perm.iter().enumerate() {
        position[v as usize] = i as u32;
    }
    let extra = if graph.self_check() { n } else { 0 };
    let mut tasks = Vec::with_capacity(graph.num_edges() + extra);
    let mut nbrs = Vec::new();
    let mut checked = vec![!graph.self_check(); n];
    let mut touch = |b: u32, tasks: &mut Vec<(u32, u32)>| {
        if !core::mem::replace(&mut checked[b as usize], true) {
            tasks.push((b, b));
        }
    };
    for &v in perm {
        touch(v, &mut tasks);
        nbrs.clear();
        nbrs.extend_from_slice(graph.out_neighbors(v));
        nbrs.sort_unstable_by_key(|&u| position[u as usize]);
        for &u in &nbrs {
            touch(u, &mut tasks);
            tasks.push((v, u));
        }
    }
    let access_seq = tasks.iter().flat_map(|&(a, b)| [a, b]).collect();
    Ok(TaskSchedule {
        perm: perm.to_vec(),
        tasks,
        access_seq,
        window,
    })
}

//! Greedy sliding-window node reordering.
//!
//! Nodes are placed one at a time; the next node is the unplaced one whose
//! out-neighborhood overlaps most with the out-neighborhoods of the last `w`
//! placed nodes. Overlap scores are maintained incrementally: only nodes that
//! share an out-neighbor with the node entering or leaving the window change.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use crate::graph::BucketGraph;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reordering {
    /// `perm[new position] = original node id`.
    pub perm: Vec<u32>,
    pub window: usize,
}

/// `max(1, floor(C / d_avg))` with `d_avg = |E| / max(1, n)`. An edgeless
/// graph gets a window spanning every node.
pub fn window_size(graph: &BucketGraph, capacity: usize) -> usize {
    let n = graph.num_nodes().max(1);
    let edges = graph.num_edges();
    if edges == 0 {
        return n;
    }
    // floor(C * n / E) == floor(C / (E / n))
    ((capacity as u128 * n as u128) / edges as u128).max(1) as usize
}

/// State exposed to an observer before each greedy choice.
#[derive(Debug)]
pub struct ReorderStep<'a> {
    /// Position being filled (1-based positions start at index 1 here; the
    /// start node occupies index 0).
    pub position: usize,
    /// Nodes currently inside the window, oldest first.
    pub window: &'a [u32],
    /// Incremental overlap score of every node (meaningful for unplaced ones).
    pub scores: &'a [i64],
    pub placed: &'a [bool],
    /// Node the greedy step selected.
    pub chosen: u32,
}

pub fn reorder(graph: &BucketGraph, capacity: usize) -> Reordering {
    let window = window_size(graph, capacity);
    reorder_with_window(graph, window, |_| {})
}

/// Runs the greedy placement with an explicit window and calls `observer`
/// once per greedy step.
pub fn reorder_with_window<F>(graph: &BucketGraph, window: usize, mut observer: F) -> Reordering
where
    F: FnMut(&ReorderStep<'_>),
{
    let n = graph.num_nodes();
    let window = window.max(1);
    if n == 0 {
        return Reordering {
            perm: Vec::new(),
            window,
        };
    }
    let mut in_nbrs: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (a, b) in graph.edges() {
        in_nbrs[b as usize].push(a);
    }

    let start = (0..n as u32)
        .max_by_key(|&v| (graph.out_neighbors(v).len(), Reverse(v)))
        .unwrap();

    let mut scores = vec![0i64; n];
    let mut placed = vec![false; n];
    let mut perm = Vec::with_capacity(n);
    let mut heap: BinaryHeap<(i64, Reverse<u32>)> = BinaryHeap::with_capacity(n);

    placed[start as usize] = true;
    perm.push(start);
    let shift = |u: u32, delta: i64, scores: &mut [i64], placed: &[bool], heap: &mut BinaryHeap<(i64, Reverse<u32>)>| {
        for &x in graph.out_neighbors(u) {
            for &v in &in_nbrs[x as usize] {
                scores[v as usize] += delta;
                if !placed[v as usize] {
                    heap.push((scores[v as usize], Reverse(v)));
                }
            }
        }
    };
    shift(start, 1, &mut scores, &placed, &mut heap);
    for v in 0..n as u32 {
        if !placed[v as usize] && scores[v as usize] == 0 {
            heap.push((0, Reverse(v)));
        }
    }

    for position in 1..n {
        let chosen = loop {
            let (s, Reverse(v)) = heap.pop().expect("every unplaced node has a live heap entry");
            if !placed[v as usize] && scores[v as usize] == s {
                break v;
            }
        };
        let lo = position.saturating_sub(window);
        observer(&ReorderStep {
            position,
            window: &perm[lo..position],
            scores: &scores,
            placed: &placed,
            chosen,
        });
        placed[chosen as usize] = true;
        perm.push(chosen);
        shift(chosen, 1, &mut scores, &placed, &mut heap);
        if position >= window {
            let leaving = perm[position - window];
            shift(leaving, -1, &mut scores, &placed, &mut heap);
        }
    }
    Reordering { perm, window }
}

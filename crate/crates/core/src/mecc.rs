//! Exhaustive minimum edge cover with cache, for tiny graphs only.
//!
//! An edge is covered once both endpoints are resident at the same time. The
//! search is a breadth-first walk over `(resident set, covered edges)` states
//! where each move loads one node and, if the cache is full, evicts any one
//! resident node. The first level that covers every edge is the optimum.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::BucketGraph;

pub const DEFAULT_MAX_NODES: usize = 8;
/// Hard cap: edge sets must fit in a 64-bit mask.
const MAX_EXHAUSTIVE: usize = 11;

/// Length of the shortest load sequence covering every edge of `graph`.
pub fn mecc_optimal(graph: &BucketGraph, capacity: usize, max_nodes: usize) -> Result<usize> {
    let n = graph.num_nodes();
    if n > max_nodes || n > MAX_EXHAUSTIVE {
        return Err(Error::TooLarge {
            size: n,
            limit: max_nodes.min(MAX_EXHAUSTIVE),
        });
    }
    let edges: Vec<(u32, u32)> = graph.edges().collect();
    if edges.is_empty() {
        return Ok(0);
    }
    if capacity < 2 {
        return Err(Error::CapacityTooSmall { capacity });
    }
    // incident[v][u] = bit of edge (v, u)
    let mut incident = [[0u64; 16]; 16];
    for (k, &(a, b)) in edges.iter().enumerate() {
        incident[a as usize][b as usize] = 1 << k;
        incident[b as usize][a as usize] = 1 << k;
    }
    let full: u64 = if edges.len() == 64 { u64::MAX } else { (1u64 << edges.len()) - 1 };

    let mut frontier: Vec<(u16, u64)> = alloc::vec![(0, 0)];
    let mut seen: BTreeSet<(u16, u64)> = BTreeSet::new();
    seen.insert((0, 0));
    let mut loads = 0;
    while !frontier.is_empty() {
        loads += 1;
        let mut next = Vec::new();
        for &(cache, covered) in &frontier {
            let resident = cache.count_ones() as usize;
            for v in 0..n {
                let bit = 1u16 << v;
                if cache & bit != 0 {
                    continue;
                }
                let bases: Vec<u16> = if resident < capacity {
                    alloc::vec![cache]
                } else {
                    (0..n).filter(|&u| cache & (1 << u) != 0).map(|u| cache & !(1 << u)).collect()
                };
                for base in bases {
                    let mut gained = covered;
                    for u in 0..n {
                        if base & (1 << u) != 0 {
                            gained |= incident[v][u];
                        }
                    }
                    if gained == full {
                        return Ok(loads);
                    }
                    let state = (base | bit, gained);
                    if seen.insert(state) {
                        next.push(state);
                    }
                }
            }
        }
        frontier = next;
    }
    unreachable!("every edge is coverable with capacity >= 2")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_of_three() {
        let g = BucketGraph::from_edges(3, [(0, 1), (1, 2)], true);
        assert_eq!(mecc_optimal(&g, 2, 8).unwrap(), 3);
    }

    #[test]
    fn complete_four() {
        let edges = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        let g = BucketGraph::from_edges(4, edges, true);
        assert_eq!(mecc_optimal(&g, 2, 8).unwrap(), 7);
        // with room for everything each node loads once
        assert_eq!(mecc_optimal(&g, 4, 8).unwrap(), 4);
    }

    #[test]
    fn too_large() {
        let g = BucketGraph::from_edges(9, [(0, 8)], true);
        assert!(matches!(mecc_optimal(&g, 2, 8), Err(Error::TooLarge { .. })));
    }
}

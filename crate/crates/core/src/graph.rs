//! Bucket dependency graph.
//!
//! For every bucket the nearest centers are fetched from the center index,
//! filtered with the triangle inequality and then pruned probabilistically so
//! that the expected fraction of missed neighbors stays below `1 - lambda`.
//! Each bucket inserts its surviving candidates as `(min, max)` edges; the
//! graph is the union of those lists.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::fingerprint::Fnv;
use crate::hnsw::{CenterIndex, SearchScratch};

/// Directed graph over buckets: edge `(i, j)` with `i < j` means "verify pair".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketGraph {
    adjacency: Vec<Vec<u32>>,
    self_check: bool,
}

impl BucketGraph {
    /// Builds a graph from arbitrary endpoint pairs. Pairs are oriented as
    /// `(min, max)`, deduplicated, and self loops are dropped (those are
    /// covered by `self_check`).
    pub fn from_edges<I>(num_nodes: usize, edges: I, self_check: bool) -> Self
    where
        I: IntoIterator<Item = (u32, u32)>,
    {
        let mut adjacency = vec![Vec::new(); num_nodes];
        for (a, b) in edges {
            if a == b {
                continue;
            }
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            assert!((hi as usize) < num_nodes, "edge endpoint {hi} out of range");
            adjacency[lo as usize].push(hi);
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        BucketGraph {
            adjacency,
            self_check,
        }
    }

    pub fn from_adjacency(adjacency: Vec<Vec<u32>>, self_check: bool) -> Option<Self> {
        let n = adjacency.len();
        for (i, list) in adjacency.iter().enumerate() {
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return None;
            }
            if list.iter().any(|&j| j as usize <= i || j as usize >= n) {
                return None;
            }
        }
        Some(BucketGraph {
            adjacency,
            self_check,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    pub fn self_check(&self) -> bool {
        self.self_check
    }

    pub fn out_neighbors(&self, node: u32) -> &[u32] {
        &self.adjacency[node as usize]
    }

    pub fn adjacency(&self) -> &[Vec<u32>] {
        &self.adjacency
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.iter().map(move |&j| (i as u32, j)))
    }

    pub fn has_edge(&self, a: u32, b: u32) -> bool {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.adjacency[lo as usize].binary_search(&hi).is_ok()
    }

    /// FNV-1a over the node count, the flag and every adjacency list.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::new();
        h.write(&(self.adjacency.len() as u64).to_le_bytes());
        h.write(&[self.self_check as u8]);
        for list in &self.adjacency {
            h.write(&(list.len() as u32).to_le_bytes());
            for v in list {
                h.write(&v.to_le_bytes());
            }
        }
        h.finish()
    }

    /// Number of vector pairs the graph asks to verify, given bucket sizes.
    pub fn candidate_pairs(&self, counts: &[u64]) -> u64 {
        let cross: u64 = self.edges().map(|(a, b)| counts[a as usize] * counts[b as usize]).sum();
        let own: u64 = if self.self_check {
            counts.iter().map(|&c| c * c.saturating_sub(1) / 2).sum()
        } else {
            0
        };
        cross + own
    }
}

/// `pi^(-1/2) * Gamma((d-1)/2) / Gamma(d/2)`, computed in log space.
/// Infinite for `d = 1`.
pub fn arc_volume_constant(dim: usize) -> f64 {
    if dim <= 1 {
        return f64::INFINITY;
    }
    let d = dim as f64;
    libm::exp(libm::lgamma((d - 1.0) / 2.0) - libm::lgamma(d / 2.0)) / libm::sqrt(PI)
}

/// Recall target and the constant that scales arc terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneBudget {
    pub lambda: f64,
    pub mu: f64,
    pub apply_mu: bool,
}

impl PruneBudget {
    pub fn new(lambda: f64, dim: usize, apply_mu: bool) -> Self {
        assert!(lambda > 0.0 && lambda <= 1.0, "lambda must lie in (0, 1]");
        PruneBudget {
            lambda,
            mu: arc_volume_constant(dim),
            apply_mu,
        }
    }

    pub fn error_budget(&self) -> f64 {
        1.0 - self.lambda
    }

    fn term(&self, x: f64) -> f64 {
        let arc = libm::acos(x.min(1.0));
        if arc == 0.0 {
            0.0
        } else if self.apply_mu {
            self.mu * arc
        } else {
            arc
        }
    }
}

/// Up to `l` nearest other centers of `group`, ascending by exact distance.
pub fn candidate_buckets(
    index: &CenterIndex,
    scratch: &mut SearchScratch,
    group: u32,
    l: usize,
    ef: usize,
) -> Vec<(u32, f32)> {
    let query = index.center(group);
    let k = (l + 1).min(index.len());
    let mut found = index.search_with(scratch, query, k, ef.max(k));
    found.retain(|&(id, _)| id != group);
    found.truncate(l);
    found
}

/// Whether the bucket pair may hold an epsilon pair:
/// `|c_a - c_b| - r_a - r_b <= eps`.
#[inline]
pub fn may_contain_neighbors(center_dist: f32, radius_a: f32, radius_b: f32, epsilon: f32) -> bool {
    center_dist as f64 - radius_a as f64 - radius_b as f64 <= epsilon as f64
}

/// Keeps exactly the candidates that pass the triangle test against `group`.
pub fn triangle_filter(
    group: u32,
    candidates: &[(u32, f32)],
    radii: &[f32],
    epsilon: f32,
) -> Vec<(u32, f32)> {
    let r = radii[group as usize];
    candidates
        .iter()
        .copied()
        .filter(|&(j, d)| may_contain_neighbors(d, r, radii[j as usize], epsilon))
        .collect()
}

/// Drops the farthest survivors while the accumulated arc estimate stays
/// below `1 - lambda`.
///
/// `survivors` must be ascending by center distance. `ball_radius` is the
/// radius of the ball that stands in for the bucket's neighborhood. For each
/// survivor `x = (d / 2) / ball_radius`; survivors with `x >= 1` add nothing
/// and are dropped for free.
pub fn probabilistic_prune(
    survivors: &[(u32, f32)],
    budget: &PruneBudget,
    ball_radius: f64,
) -> Vec<(u32, f32)> {
    debug_assert!(survivors.windows(2).all(|w| w[0].1 <= w[1].1));
    if budget.error_budget() <= 0.0 {
        return survivors.to_vec();
    }
    let mut keep = survivors.len();
    let mut sum = 0.0f64;
    for &(_, d) in survivors.iter().rev() {
        let x = if ball_radius > 0.0 {
            (d as f64 / 2.0) / ball_radius
        } else {
            f64::INFINITY
        };
        sum += budget.term(x);
        if sum >= budget.error_budget() {
            break;
        }
        keep -= 1;
    }
    survivors[..keep].to_vec()
}

/// Which ball radius the pruning rule uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BallRadius {
    /// `r_b + epsilon`.
    RadiusPlusEpsilon,
    /// A fixed value for experiments.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphParams {
    pub epsilon: f32,
    pub budget: PruneBudget,
    /// Initial candidate width L.
    pub candidates: usize,
    /// Double L while the farthest candidate still passes the triangle test.
    pub adaptive: bool,
    /// Lower bound on the search beam.
    pub ef_floor: usize,
    pub ball: BallRadius,
}

impl GraphParams {
    pub fn new(epsilon: f32, budget: PruneBudget) -> Self {
        GraphParams {
            epsilon,
            budget,
            candidates: 256,
            adaptive: true,
            ef_floor: 128,
            ball: BallRadius::RadiusPlusEpsilon,
        }
    }
}

/// Per-center counters for the candidate pipeline.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CandidateStats {
    pub group: u32,
    pub width: usize,
    pub candidates: usize,
    pub after_triangle: usize,
    pub after_prune: usize,
    /// The L-th candidate still passed the triangle test: the list may be cut short.
    pub truncated: bool,
}

/// Candidate search, triangle filter and pruning for one center.
/// Centers whose group is empty (`counts[g] == 0`) never become candidates.
pub fn group_candidates(
    index: &CenterIndex,
    scratch: &mut SearchScratch,
    radii: &[f32],
    counts: &[u64],
    group: u32,
    params: &GraphParams,
) -> (Vec<u32>, CandidateStats) {
    let mut stats = CandidateStats {
        group,
        ..CandidateStats::default()
    };
    let others = index.len() - 1;
    if others == 0 || counts[group as usize] == 0 {
        return (Vec::new(), stats);
    }
    let mut width = params.candidates.clamp(1, others);
    let (cands, survivors) = loop {
        let ef = width.max(params.ef_floor);
        let cands = candidate_buckets(index, scratch, group, width, ef);
        let farthest_passes = cands.last().is_some_and(|&(j, d)| {
            may_contain_neighbors(d, radii[group as usize], radii[j as usize], params.epsilon)
        });
        if params.adaptive && farthest_passes && width < others {
            width = (width * 2).min(others);
            continue;
        }
        stats.truncated = farthest_passes && width < others;
        let nonempty: Vec<(u32, f32)> = cands
            .iter()
            .copied()
            .filter(|&(j, _)| counts[j as usize] > 0)
            .collect();
        let survivors = triangle_filter(group, &nonempty, radii, params.epsilon);
        break (cands, survivors);
    };
    stats.width = width;
    stats.candidates = cands.len();
    stats.after_triangle = survivors.len();
    let ball = match params.ball {
        BallRadius::RadiusPlusEpsilon => radii[group as usize] as f64 + params.epsilon as f64,
        BallRadius::Fixed(r) => r,
    };
    let kept = probabilistic_prune(&survivors, &params.budget, ball);
    stats.after_prune = kept.len();
    (kept.into_iter().map(|(j, _)| j).collect(), stats)
}

/// Expands per-center candidate lists into a graph over physical buckets.
///
/// `group_buckets[g]` lists the bucket ids that share center `g`. Every bucket
/// of `g` is paired with every bucket of each kept center, and sibling buckets
/// of one center are paired with each other.
pub fn expand_groups(kept: &[Vec<u32>], group_buckets: &[Vec<u32>], num_buckets: usize) -> BucketGraph {
    let mut edges = Vec::new();
    for (g, list) in kept.iter().enumerate() {
        let own = &group_buckets[g];
        for (i, &a) in own.iter().enumerate() {
            for &b in &own[i + 1..] {
                edges.push((a, b));
            }
        }
        for &h in list {
            for &a in own {
                for &b in &group_buckets[h as usize] {
                    edges.push((a, b));
                }
            }
        }
    }
    // siblings of groups that produced no list still need pairing
    for (g, own) in group_buckets.iter().enumerate() {
        if g >= kept.len() {
            for (i, &a) in own.iter().enumerate() {
                for &b in &own[i + 1..] {
                    edges.push((a, b));
                }
            }
        }
    }
    BucketGraph::from_edges(num_buckets, edges, true)
}

/// Sequential graph construction over all centers.
pub fn build_graph(
    index: &CenterIndex,
    radii: &[f32],
    counts: &[u64],
    group_buckets: &[Vec<u32>],
    num_buckets: usize,
    params: &GraphParams,
) -> (BucketGraph, Vec<CandidateStats>) {
    let mut scratch = SearchScratch::default();
    let (kept, stats): (Vec<_>, Vec<_>) = (0..index.len() as u32)
        .map(|g| group_candidates(index, &mut scratch, radii, counts, g, params))
        .unzip();
    (expand_groups(&kept, group_buckets, num_buckets), stats)
}

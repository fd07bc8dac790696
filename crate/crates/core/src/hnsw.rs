//! Hierarchical proximity-graph index over the bucket centers.
//!
//! The index is built once, repaired so that every layer is symmetric and the
//! bottom layer is a single connected component, and then only read. Searches
//! take `&self` and may run from many threads.

use alloc::collections::{BinaryHeap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};

use rand::Rng;

use crate::distance::l2_sq;
use crate::error::{Error, Result};
use crate::sample::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexParams {
    /// Max neighbors per node on upper layers; the bottom layer allows twice this.
    pub graph_degree: usize,
    pub ef_construction: usize,
}

impl Default for IndexParams {
    fn default() -> Self {
        IndexParams {
            graph_degree: 16,
            ef_construction: 200,
        }
    }
}

/// `(squared distance, node)` ordered by distance, then id.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cand(f32, u32);

impl Eq for Cand {}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Reusable per-thread search state.
#[derive(Debug, Default)]
pub struct SearchScratch {
    visited: Vec<u32>,
    epoch: u32,
}

impl SearchScratch {
    fn reset(&mut self, n: usize) {
        if self.visited.len() != n || self.epoch == u32::MAX {
            self.visited.clear();
            self.visited.resize(n, 0);
            self.epoch = 0;
        }
        self.epoch += 1;
    }

    #[inline]
    fn visit(&mut self, id: u32) -> bool {
        let slot = &mut self.visited[id as usize];
        if *slot == self.epoch {
            false
        } else {
            *slot = self.epoch;
            true
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CenterIndex {
    dim: usize,
    centers: Vec<f32>,
    levels: Vec<u8>,
    /// `layers[l][node]` is the adjacency of `node` on layer `l`; empty when
    /// the node does not reach that layer.
    layers: Vec<Vec<Vec<u32>>>,
    entry_point: u32,
    params: IndexParams,
}

impl CenterIndex {
    /// Builds the index over `centers`, a row-major `M x dim` array.
    pub fn build(centers: &[f32], dim: usize, params: IndexParams, seed: u64) -> Result<Self> {
        if dim == 0 || centers.is_empty() || centers.len() % dim != 0 {
            return Err(Error::InvalidArgument("centers must be a non-empty M x dim array"));
        }
        if params.graph_degree < 2 {
            return Err(Error::InvalidArgument("graph_degree must be at least 2"));
        }
        if let Some(pos) = centers.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput { row: pos / dim });
        }
        let n = centers.len() / dim;
        let level_mult = 1.0 / libm::log(params.graph_degree as f64);
        let mut rng = rng(seed);
        let levels: Vec<u8> = (0..n)
            .map(|_| {
                let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
                let l = libm::floor(-libm::log(u) * level_mult);
                l.min(30.0) as u8
            })
            .collect();
        let top = *levels.iter().max().unwrap() as usize;
        let mut index = CenterIndex {
            dim,
            centers: centers.to_vec(),
            levels,
            layers: vec![vec![Vec::new(); n]; top + 1],
            entry_point: 0,
            params,
        };
        let mut scratch = SearchScratch::default();
        let mut max_level = index.levels[0] as usize;
        for node in 1..n as u32 {
            index.insert(node, &mut max_level, &mut scratch);
        }
        index.repair();
        Ok(index)
    }

    /// Reassembles an index from its serialized parts, checking structure.
    pub fn from_parts(
        dim: usize,
        centers: Vec<f32>,
        levels: Vec<u8>,
        layers: Vec<Vec<Vec<u32>>>,
        entry_point: u32,
        params: IndexParams,
    ) -> Result<Self> {
        if dim == 0 || centers.is_empty() || centers.len() % dim != 0 {
            return Err(Error::InvalidArgument("centers must be a non-empty M x dim array"));
        }
        let n = centers.len() / dim;
        if levels.len() != n || layers.is_empty() || (entry_point as usize) >= n {
            return Err(Error::InvalidArgument("index parts disagree on node count"));
        }
        for layer in &layers {
            if layer.len() != n || layer.iter().flatten().any(|&v| v as usize >= n) {
                return Err(Error::InvalidArgument("adjacency references a missing node"));
            }
        }
        Ok(CenterIndex {
            dim,
            centers,
            levels,
            layers,
            entry_point,
            params,
        })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> IndexParams {
        self.params
    }

    pub fn entry_point(&self) -> u32 {
        self.entry_point
    }

    pub fn centers(&self) -> &[f32] {
        &self.centers
    }

    pub fn center(&self, id: u32) -> &[f32] {
        let s = id as usize * self.dim;
        &self.centers[s..s + self.dim]
    }

    pub fn levels(&self) -> &[u8] {
        &self.levels
    }

    pub fn layers(&self) -> &[Vec<Vec<u32>>] {
        &self.layers
    }

    pub fn neighbors(&self, layer: usize, node: u32) -> &[u32] {
        &self.layers[layer][node as usize]
    }

    fn cap(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.params.graph_degree
        } else {
            self.params.graph_degree
        }
    }

    #[inline]
    fn dist_to(&self, query: &[f32], node: u32) -> f32 {
        l2_sq(query, self.center(node))
    }

    fn insert(&mut self, node: u32, max_level: &mut usize, scratch: &mut SearchScratch) {
        let level = self.levels[node as usize] as usize;
        let query: Vec<f32> = self.center(node).to_vec();
        let mut ep = Cand(self.dist_to(&query, self.entry_point), self.entry_point);
        for layer in (level + 1..=*max_level).rev() {
            ep = self.greedy(&query, ep, layer);
        }
        let mut entries = vec![ep];
        for layer in (0..=level.min(*max_level)).rev() {
            let found = self.search_layer(&query, &entries, self.params.ef_construction, layer, scratch);
            let cap = self.cap(layer);
            let chosen = self.select_neighbors(&found, self.params.graph_degree.min(cap));
            self.layers[layer][node as usize] = chosen.iter().map(|c| c.1).collect();
            for c in &chosen {
                self.link(c.1, node, layer);
            }
            entries = found;
        }
        if level > *max_level {
            *max_level = level;
            self.entry_point = node;
        }
    }

    /// Adds `to` to the adjacency of `from`, shrinking with the selection
    /// heuristic when the list overflows.
    fn link(&mut self, from: u32, to: u32, layer: usize) {
        let cap = self.cap(layer);
        let list = &self.layers[layer][from as usize];
        if list.contains(&to) {
            return;
        }
        if list.len() < cap {
            self.layers[layer][from as usize].push(to);
            return;
        }
        let base: Vec<f32> = self.center(from).to_vec();
        let mut cands: Vec<Cand> = list
            .iter()
            .chain(core::iter::once(&to))
            .map(|&v| Cand(self.dist_to(&base, v), v))
            .collect();
        cands.sort();
        let kept = self.select_neighbors(&cands, cap);
        self.layers[layer][from as usize] = kept.iter().map(|c| c.1).collect();
    }

    /// Diversity heuristic: keep a candidate only if it is closer to the base
    /// than to every neighbor already kept. `sorted` is ascending by distance.
    fn select_neighbors(&self, sorted: &[Cand], limit: usize) -> Vec<Cand> {
        let mut kept: Vec<Cand> = Vec::with_capacity(limit);
        for &c in sorted {
            if kept.len() >= limit {
                break;
            }
            let diverse = kept
                .iter()
                .all(|k| l2_sq(self.center(c.1), self.center(k.1)) > c.0);
            if diverse {
                kept.push(c);
            }
        }
        kept
    }

    fn greedy(&self, query: &[f32], mut best: Cand, layer: usize) -> Cand {
        loop {
            let mut improved = false;
            for &nb in &self.layers[layer][best.1 as usize] {
                let c = Cand(self.dist_to(query, nb), nb);
                if c < best {
                    best = c;
                    improved = true;
                }
            }
            if !improved {
                return best;
            }
        }
    }

    /// Best-first search on one layer. Returns up to `ef` candidates sorted
    /// ascending. Expansion continues until the result set is full and the
    /// closest open candidate is worse than the worst result.
    fn search_layer(
        &self,
        query: &[f32],
        entries: &[Cand],
        ef: usize,
        layer: usize,
        scratch: &mut SearchScratch,
    ) -> Vec<Cand> {
        scratch.reset(self.len());
        let mut open: BinaryHeap<Reverse<Cand>> = BinaryHeap::new();
        let mut best: BinaryHeap<Cand> = BinaryHeap::new();
        for &e in entries {
            if scratch.visit(e.1) {
                open.push(Reverse(e));
                best.push(e);
            }
        }
        while best.len() > ef {
            best.pop();
        }
        while let Some(Reverse(c)) = open.pop() {
            if best.len() >= ef {
                if let Some(worst) = best.peek() {
                    if c > *worst {
                        break;
                    }
                }
            }
            for &nb in &self.layers[layer][c.1 as usize] {
                if !scratch.visit(nb) {
                    continue;
                }
                let cand = Cand(self.dist_to(query, nb), nb);
                if best.len() < ef || cand < *best.peek().unwrap() {
                    open.push(Reverse(cand));
                    best.push(cand);
                    if best.len() > ef {
                        best.pop();
                    }
                }
            }
        }
        best.into_sorted_vec()
    }

    /// Makes every layer symmetric within the degree caps, then joins any
    /// bottom-layer components that the pruning split off.
    fn repair(&mut self) {
        for layer in 0..self.layers.len() {
            let cap = self.cap(layer);
            let n = self.len();
            for u in 0..n {
                let mut i = 0;
                while i < self.layers[layer][u].len() {
                    let v = self.layers[layer][u][i] as usize;
                    if self.layers[layer][v].contains(&(u as u32)) {
                        i += 1;
                    } else if self.layers[layer][v].len() < cap {
                        self.layers[layer][v].push(u as u32);
                        i += 1;
                    } else {
                        self.layers[layer][u].remove(i);
                    }
                }
            }
        }
        self.connect_bottom_layer();
    }

    fn connect_bottom_layer(&mut self) {
        let n = self.len();
        let cap = self.cap(0);
        for _ in 0..n {
            let reached = self.reachable(0);
            let Some(orphan) = reached.iter().position(|r| !r) else {
                return;
            };
            let base = self.center(orphan as u32).to_vec();
            let anchor = (0..n)
                .filter(|&v| reached[v])
                .map(|v| Cand(self.dist_to(&base, v as u32), v as u32))
                .min()
                .unwrap()
                .1;
            for (a, b) in [(orphan as u32, anchor), (anchor, orphan as u32)] {
                if self.layers[0][a as usize].len() >= cap {
                    self.drop_farthest(a);
                }
                self.layers[0][a as usize].push(b);
            }
        }
    }

    /// Removes the farthest neighbor of `node` on the bottom layer (both
    /// directions), preferring neighbors that keep at least one other edge.
    fn drop_farthest(&mut self, node: u32) {
        let base = self.center(node).to_vec();
        let victim = self.layers[0][node as usize]
            .iter()
            .map(|&v| Cand(self.dist_to(&base, v), v))
            .filter(|c| self.layers[0][c.1 as usize].len() > 1)
            .max()
            .or_else(|| {
                self.layers[0][node as usize]
                    .iter()
                    .map(|&v| Cand(self.dist_to(&base, v), v))
                    .max()
            });
        if let Some(Cand(_, v)) = victim {
            self.layers[0][node as usize].retain(|&x| x != v);
            self.layers[0][v as usize].retain(|&x| x != node);
        }
    }

    /// Nodes reachable from the entry point on `layer`.
    pub fn reachable(&self, layer: usize) -> Vec<bool> {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::new();
        seen[self.entry_point as usize] = true;
        queue.push_back(self.entry_point);
        while let Some(u) = queue.pop_front() {
            for &v in &self.layers[layer][u as usize] {
                if !seen[v as usize] {
                    seen[v as usize] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    /// Returns `min(k, M)` `(center id, L2 distance)` pairs, ascending.
    pub fn search(&self, query: &[f32], k: usize, ef_search: usize) -> Vec<(u32, f32)> {
        let mut scratch = SearchScratch::default();
        self.search_with(&mut scratch, query, k, ef_search)
    }

    pub fn search_with(
        &self,
        scratch: &mut SearchScratch,
        query: &[f32],
        k: usize,
        ef_search: usize,
    ) -> Vec<(u32, f32)> {
        self.search_sq(scratch, query, k, ef_search)
            .into_iter()
            .map(|(id, d)| (id, libm::sqrtf(d)))
            .collect()
    }

    /// Same as [`search_with`](Self::search_with) but returns squared distances.
    pub fn search_sq(
        &self,
        scratch: &mut SearchScratch,
        query: &[f32],
        k: usize,
        ef_search: usize,
    ) -> Vec<(u32, f32)> {
        debug_assert_eq!(query.len(), self.dim);
        if k == 0 {
            return Vec::new();
        }
        let ef = ef_search.max(k);
        let mut ep = Cand(self.dist_to(query, self.entry_point), self.entry_point);
        for layer in (1..self.layers.len()).rev() {
            ep = self.greedy(query, ep, layer);
        }
        let mut found = self.search_layer(query, &[ep], ef, 0, scratch);
        found.truncate(k);
        found.into_iter().map(|c| (c.1, c.0)).collect()
    }

    /// Nearest center and its squared distance.
    pub fn nearest_sq(&self, scratch: &mut SearchScratch, query: &[f32], ef_search: usize) -> (u32, f32) {
        self.search_sq(scratch, query, 1, ef_search)[0]
    }
}

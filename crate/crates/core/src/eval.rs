//! Pair sets, recall and in-memory brute-force joins.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;

use crate::distance::l2_sq;
use crate::verify::ResultPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Oracle,
    Engine,
}

/// Canonical set of pairs: `id_a < id_b`, sorted, no duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    keys: Vec<(u64, u64)>,
    dists: Vec<f32>,
    pub source: Source,
}

impl PairSet {
    pub fn new(source: Source) -> Self {
        PairSet {
            keys: Vec::new(),
            dists: Vec::new(),
            source,
        }
    }

    /// Canonicalizes, sorts and deduplicates (first distance wins). Pairs with
    /// a non-finite distance or `id_a == id_b` are dropped.
    pub fn from_pairs<I: IntoIterator<Item = ResultPair>>(pairs: I, source: Source) -> Self {
        let mut all: Vec<ResultPair> = pairs
            .into_iter()
            .map(|p| ResultPair::new(p.id_a, p.id_b, p.dist))
            .filter(|p| p.id_a != p.id_b && p.dist.is_finite())
            .collect();
        all.sort_by(|x, y| x.key().cmp(&y.key()));
        all.dedup_by(|x, y| x.key() == y.key());
        PairSet {
            keys: all.iter().map(ResultPair::key).collect(),
            dists: all.iter().map(|p| p.dist).collect(),
            source,
        }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[(u64, u64)] {
        &self.keys
    }

    pub fn iter(&self) -> impl Iterator<Item = ResultPair> + '_ {
        self.keys
            .iter()
            .zip(&self.dists)
            .map(|(&(a, b), &d)| ResultPair { id_a: a, id_b: b, dist: d })
    }

    pub fn contains(&self, a: u64, b: u64) -> bool {
        let key = if a <= b { (a, b) } else { (b, a) };
        self.keys.binary_search(&key).is_ok()
    }

    /// Size of the intersection, by membership only.
    pub fn intersection_len(&self, other: &PairSet) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < self.keys.len() && j < other.keys.len() {
            match self.keys[i].cmp(&other.keys[j]) {
                core::cmp::Ordering::Less => i += 1,
                core::cmp::Ordering::Greater => j += 1,
                core::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }
}

/// `|engine ∩ oracle| / |oracle|`; 1.0 when the oracle is empty.
pub fn recall(engine: &PairSet, oracle: &PairSet) -> f64 {
    if oracle.is_empty() {
        return 1.0;
    }
    engine.intersection_len(oracle) as f64 / oracle.len() as f64
}

/// Brute-force self join processed in square tiles of `block` rows.
/// `ids[i]` names row `i`.
pub fn brute_force_blocked(vectors: &[f32], ids: &[u64], dim: usize, epsilon: f32, block: usize) -> PairSet {
    let n = ids.len();
    let block = block.max(1);
    let eps_sq = epsilon * epsilon;
    let mut out = Vec::new();
    for bi in (0..n).step_by(block) {
        let rows = bi..(bi + block).min(n);
        for bj in (bi..n).step_by(block) {
            let cols = bj..(bj + block).min(n);
            for i in rows.clone() {
                let x = &vectors[i * dim..(i + 1) * dim];
                for j in cols.clone() {
                    if j <= i {
                        continue;
                    }
                    let d = l2_sq(x, &vectors[j * dim..(j + 1) * dim]);
                    if d <= eps_sq {
                        out.push(ResultPair::new(ids[i], ids[j], libm::sqrtf(d)));
                    }
                }
            }
        }
    }
    PairSet::from_pairs(out, Source::Oracle)
}

/// Plain double loop over all unordered row pairs.
pub fn brute_force_naive(vectors: &[f32], ids: &[u64], dim: usize, epsilon: f32) -> PairSet {
    let rows: Vec<&[f32]> = vectors.chunks_exact(dim).collect();
    let mut out = Vec::new();
    for (i, x) in rows.iter().enumerate() {
        for (j, y) in rows.iter().enumerate().skip(i + 1) {
            let d = l2_sq(x, y);
            if d <= epsilon * epsilon {
                out.push(ResultPair::new(ids[i], ids[j], libm::sqrtf(d)));
            }
        }
    }
    PairSet::from_pairs(out, Source::Oracle)
}

/// Keeps the `k` smallest distances seen from a set of sampled queries, which
/// is all that is needed to invert the average neighbor-count curve.
#[derive(Debug, Clone)]
pub struct NeighborCurve {
    samples: usize,
    target: f64,
    keep: usize,
    heap: BinaryHeap<OrdF32>,
    min_nonzero: f32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF32(f32);

impl Eq for OrdF32 {}

impl Ord for OrdF32 {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl PartialOrd for OrdF32 {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl NeighborCurve {
    pub fn new(samples: usize, target_avg_neighbors: f64) -> Self {
        let keep = libm::ceil(target_avg_neighbors.max(0.0) * samples as f64) as usize;
        NeighborCurve {
            samples,
            target: target_avg_neighbors,
            keep,
            heap: BinaryHeap::with_capacity(keep + 1),
            min_nonzero: f32::INFINITY,
        }
    }

    /// Records the distance between a sampled vector and another vector.
    #[inline]
    pub fn push(&mut self, dist: f32) {
        if dist > 0.0 && dist < self.min_nonzero {
            self.min_nonzero = dist;
        }
        if self.keep == 0 {
            return;
        }
        if self.heap.len() < self.keep {
            self.heap.push(OrdF32(dist));
        } else if dist < self.heap.peek().unwrap().0 {
            self.heap.pop();
            self.heap.push(OrdF32(dist));
        }
    }

    pub fn merge(&mut self, other: NeighborCurve) {
        self.min_nonzero = self.min_nonzero.min(other.min_nonzero);
        for d in other.heap {
            self.push(d.0);
        }
    }

    /// Smallest epsilon at which the sampled vectors average `target`
    /// neighbors. With a zero target, half the smallest nonzero distance.
    pub fn epsilon(&self) -> Option<f32> {
        if self.keep == 0 || self.target <= 0.0 {
            return self.min_nonzero.is_finite().then(|| self.min_nonzero * 0.5);
        }
        if self.heap.len() < self.keep {
            return None;
        }
        self.heap.peek().map(|d| d.0)
    }

    /// Average neighbor count of the sampled vectors at `epsilon`, counting
    /// only distances the curve retained.
    pub fn average_at(&self, epsilon: f32) -> f64 {
        let n = self.heap.iter().filter(|d| d.0 <= epsilon).count();
        n as f64 / self.samples.max(1) as f64
    }
}

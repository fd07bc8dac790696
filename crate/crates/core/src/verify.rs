//! Exact verification of one bucket pair.

use alloc::vec::Vec;
use core::ops::Range;

use crate::distance::l2_sq;

/// An epsilon pair, canonicalized so that `id_a < id_b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResultPair {
    pub id_a: u64,
    pub id_b: u64,
    pub dist: f32,
}

impl ResultPair {
    pub fn new(a: u64, b: u64, dist: f32) -> Self {
        if a <= b {
            ResultPair { id_a: a, id_b: b, dist }
        } else {
            ResultPair { id_a: b, id_b: a, dist }
        }
    }

    pub fn key(&self) -> (u64, u64) {
        (self.id_a, self.id_b)
    }
}

/// Borrowed view of a decoded bucket.
#[derive(Debug, Clone, Copy)]
pub struct PayloadRef<'a> {
    pub ids: &'a [u64],
    pub vectors: &'a [f32],
    pub dim: usize,
}

impl<'a> PayloadRef<'a> {
    pub fn new(ids: &'a [u64], vectors: &'a [f32], dim: usize) -> Self {
        debug_assert_eq!(ids.len() * dim, vectors.len());
        PayloadRef { ids, vectors, dim }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &'a [f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }
}

/// Verifies every pair of the bucket pair and appends the epsilon pairs to
/// `out`. Returns the number of distance computations.
pub fn verify_pair(
    a: PayloadRef<'_>,
    b: PayloadRef<'_>,
    epsilon: f32,
    same_bucket: bool,
    out: &mut Vec<ResultPair>,
) -> u64 {
    verify_rows(a, 0..a.len(), b, epsilon, same_bucket, out)
}

/// Same as [`verify_pair`] restricted to rows `rows` of `a`. Disjoint row
/// ranges partition the work exactly, so callers can split a task across
/// workers.
pub fn verify_rows(
    a: PayloadRef<'_>,
    rows: Range<usize>,
    b: PayloadRef<'_>,
    epsilon: f32,
    same_bucket: bool,
    out: &mut Vec<ResultPair>,
) -> u64 {
    let eps_sq = epsilon * epsilon;
    let mut dc = 0u64;
    for i in rows {
        let x = a.row(i);
        let start = if same_bucket { i + 1 } else { 0 };
        for j in start..b.len() {
            let d = l2_sq(x, b.row(j));
            if d <= eps_sq {
                out.push(ResultPair::new(a.ids[i], b.ids[j], libm::sqrtf(d)));
            }
        }
        dc += (b.len() - start.min(b.len())) as u64;
    }
    dc
}

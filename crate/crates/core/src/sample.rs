//! Seeded sampling of distinct ids.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Deterministic generator used across the crate.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws `m` distinct ids uniformly from `[0, n)` with Floyd's algorithm and
/// returns them sorted ascending. Memory is O(m), never O(n).
pub fn sample_ids(n: u64, m: u64, seed: u64) -> Result<Vec<u64>> {
    if m > n {
        return Err(Error::MTooLarge {
            requested: m,
            population: n,
        });
    }
    if m == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1"));
    }
    let mut rng = rng(seed);
    let mut chosen = BTreeSet::new();
    for j in (n - m)..n {
        let t = rng.random_range(0..=j);
        if !chosen.insert(t) {
            chosen.insert(j);
        }
    }
    Ok(chosen.into_iter().collect())
}

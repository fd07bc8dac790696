//! Exact ground truth, epsilon calibration and result evaluation at desk scale.

use rayon::prelude::*;
use ssjoin_core::distance::{l2, l2_sq};
use ssjoin_core::eval::{recall, NeighborCurve, PairSet, Source};
use ssjoin_core::sample::sample_ids;
use ssjoin_core::verify::ResultPair;

use crate::dataset::{stream_blocks, DatasetHandle, DEFAULT_BLOCK_BYTES};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_N: u64 = 200_000;
const TILE_ROWS: usize = 512;

/// All pairs within `epsilon` by exhaustive comparison, in row tiles
/// processed in parallel. Refuses datasets larger than `max_n`.
pub fn brute_force_join(handle: &DatasetHandle, epsilon: f32, max_n: u64) -> Result<PairSet> {
    if handle.count > max_n {
        return Err(Error::TooLarge { what: "dataset rows for the exact oracle", size: handle.count, limit: max_n });
    }
    let vectors = handle.read_all()?;
    Ok(brute_force_vectors(&vectors, handle.dim, epsilon))
}

/// Same as [`brute_force_join`] over in-memory rows; ids are row numbers.
pub fn brute_force_vectors(vectors: &[f32], dim: usize, epsilon: f32) -> PairSet {
    let n = vectors.len() / dim;
    let eps_sq = epsilon * epsilon;
    let tiles: Vec<usize> = (0..n).step_by(TILE_ROWS).collect();
    let pairs: Vec<Vec<ResultPair>> = tiles
        .into_par_iter()
        .map(|start| {
            let mut out = Vec::new();
            for i in start..(start + TILE_ROWS).min(n) {
                let x = &vectors[i * dim..(i + 1) * dim];
                for j in i + 1..n {
                    let d = l2_sq(x, &vectors[j * dim..(j + 1) * dim]);
                    if d <= eps_sq {
                        out.push(ResultPair::new(i as u64, j as u64, d.sqrt()));
                    }
                }
            }
            out
        })
        .collect();
    PairSet::from_pairs(pairs.into_iter().flatten(), Source::Oracle)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub epsilon: f32,
    /// Average neighbors of the sampled vectors at `epsilon`.
    pub achieved: f64,
    pub samples: usize,
}

fn sampled_rows(handle: &DatasetHandle, sample_size: usize, seed: u64) -> Result<(Vec<u64>, Vec<f32>)> {
    if sample_size as u64 > handle.count {
        return Err(Error::TooLarge { what: "calibration sample", size: sample_size as u64, limit: handle.count });
    }
    let ids = sample_ids(handle.count, sample_size as u64, seed)?;
    let rows = handle.read_rows(&ids)?;
    Ok((ids, rows))
}

/// Streams the dataset once and feeds the distance from every sampled row
/// to every other row into `visit`, per worker.
fn scan_sample<T, F, M>(handle: &DatasetHandle, ids: &[u64], rows: &[f32], init: T, visit: F, merge: M) -> Result<T>
where
    T: Send + Sync + Clone,
    F: Fn(&mut T, f32) + Sync,
    M: Fn(T, T) -> T + Sync,
{
    let dim = handle.dim;
    let mut acc = init.clone();
    for block in stream_blocks(handle, DEFAULT_BLOCK_BYTES)? {
        let block = block?;
        let start = block.start_id;
        let part = (0..block.len())
            .into_par_iter()
            .fold(
                || init.clone(),
                |mut t, i| {
                    let id = start + i as u64;
                    let y = block.row(i);
                    for (s, &sid) in ids.iter().enumerate() {
                        if sid != id {
                            visit(&mut t, l2(&rows[s * dim..(s + 1) * dim], y));
                        }
                    }
                    t
                },
            )
            .reduce(|| init.clone(), &merge);
        acc = merge(acc, part);
    }
    Ok(acc)
}

/// Picks epsilon so that sampled vectors have `target` neighbors on average,
/// measured exactly against the whole dataset.
pub fn calibrate_epsilon(handle: &DatasetHandle, target: f64, sample_size: usize, seed: u64) -> Result<Calibration> {
    let (ids, rows) = sampled_rows(handle, sample_size, seed)?;
    let init = NeighborCurve::new(ids.len(), target);
    let curve = scan_sample(handle, &ids, &rows, init, |c, d| c.push(d), |mut a, b| {
        a.merge(b);
        a
    })?;
    let epsilon = curve.epsilon().ok_or_else(|| {
        Error::InvalidArgument(format!("the dataset cannot supply {target} neighbors per vector"))
    })?;
    Ok(Calibration { epsilon, achieved: curve.average_at(epsilon), samples: ids.len() })
}

/// Average neighbor count at `epsilon` over a fresh sample.
pub fn average_neighbors(handle: &DatasetHandle, epsilon: f32, sample_size: usize, seed: u64) -> Result<f64> {
    let (ids, rows) = sampled_rows(handle, sample_size, seed)?;
    let hits = scan_sample(handle, &ids, &rows, 0u64, |n, d| *n += (d <= epsilon) as u64, |a, b| a + b)?;
    Ok(hits as f64 / ids.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub recall: f64,
    pub precision: f64,
    pub engine_pairs: usize,
    pub oracle_pairs: usize,
    pub matched: usize,
    /// Engine pairs whose recomputed distance exceeds epsilon.
    pub violations: usize,
    /// Engine pairs whose stored distance is off by more than 1e-4 relative.
    pub distance_warnings: usize,
}

/// Recall against the oracle and an exact precision check of every engine
/// pair against the raw vectors.
pub fn evaluate(engine: &PairSet, oracle: &PairSet, vectors: &[f32], dim: usize, epsilon: f32) -> EvalReport {
    let eps_sq = epsilon * epsilon;
    let n = (vectors.len() / dim) as u64;
    let mut violations = 0;
    let mut warnings = 0;
    for p in engine.iter() {
        if p.id_b >= n {
            violations += 1;
            continue;
        }
        let row = |id: u64| &vectors[id as usize * dim..(id as usize + 1) * dim];
        let d2 = l2_sq(row(p.id_a), row(p.id_b));
        if d2 > eps_sq {
            violations += 1;
        }
        let d = d2.sqrt();
        if (p.dist - d).abs() > 1e-4 * d.max(f32::MIN_POSITIVE) {
            warnings += 1;
        }
    }
    if warnings > 0 {
        log::warn!("{warnings} engine distances differ from recomputed ones by more than 1e-4 relative");
    }
    let matched = engine.intersection_len(oracle);
    let precision = if engine.is_empty() { 1.0 } else { (engine.len() - violations) as f64 / engine.len() as f64 };
    EvalReport {
        recall: recall(engine, oracle),
        precision,
        engine_pairs: engine.len(),
        oracle_pairs: oracle.len(),
        matched,
        violations,
        distance_warnings: warnings,
    }
}

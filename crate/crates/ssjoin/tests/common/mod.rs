//! Builds the full engine stack by hand, phase by phase.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use ssjoin::bucketize::{bucketize, BucketStore, BucketizeParams, LayoutParams, LayoutStats};
use ssjoin::core::bucket::round_up_page;
use ssjoin::core::graph::{BucketGraph, CandidateStats, GraphParams, PruneBudget};
use ssjoin::core::hnsw::{CenterIndex, IndexParams};
use ssjoin::dataset::DatasetHandle;
use ssjoin::graph_io::{build_bucket_graph, store_key};
use ssjoin::orchestrate::{orchestrate, Ordering, Plan};

pub fn scratch_dir(group: &str, name: &str) -> PathBuf {
    let d = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(group).join(name);
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

#[derive(Debug, Clone, Copy)]
pub struct StackParams {
    pub num_centers: u64,
    pub seed: u64,
    pub layout_budget: u64,
    pub max_bucket_bytes: Option<u64>,
    pub epsilon: f32,
    pub lambda: f64,
    pub candidates: usize,
    pub cache_bytes: u64,
}

impl StackParams {
    pub fn new(num_centers: u64, epsilon: f32, cache_bytes: u64) -> Self {
        StackParams {
            num_centers,
            seed: 42,
            layout_budget: 64 << 20,
            max_bucket_bytes: None,
            epsilon,
            lambda: 0.9,
            candidates: 256,
            cache_bytes,
        }
    }
}

pub struct Stack {
    pub index: CenterIndex,
    pub store: BucketStore,
    pub layout: LayoutStats,
    pub store_key: u64,
}

pub fn bucketize_into(handle: &DatasetHandle, dir: &Path, p: &StackParams) -> Stack {
    let params = BucketizeParams {
        num_centers: p.num_centers,
        seed: p.seed,
        index: IndexParams { graph_degree: 16, ef_construction: 200 },
        layout: LayoutParams {
            memory_budget: p.layout_budget,
            max_bucket_bytes: p.max_bucket_bytes,
            block_bytes: 8 << 20,
            ef_search: 64,
        },
    };
    let (index, store, layout) = bucketize(handle, &params, &dir.join("store.bks"), &dir.join("store.bkm")).unwrap();
    let store_key = store_key(&store);
    Stack { index, store, layout, store_key }
}

pub fn graph_for(stack: &Stack, p: &StackParams) -> (BucketGraph, Vec<CandidateStats>) {
    let mut params = GraphParams::new(p.epsilon, PruneBudget::new(p.lambda, stack.store.dim, true));
    params.candidates = p.candidates;
    build_bucket_graph(&stack.index, &stack.store, &params).unwrap()
}

pub fn plan_for(stack: &Stack, graph: &BucketGraph, cache_bytes: u64, ordering: Ordering) -> Plan {
    let slot = round_up_page(stack.store.max_extent_bytes());
    orchestrate(graph, stack.store_key, slot, cache_bytes, ordering).unwrap()
}

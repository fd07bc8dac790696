mod common;

use std::fs;

use common::{bucketize_into, graph_for, plan_for, scratch_dir, StackParams};
use ssjoin::core::bucket::{record_bytes, round_up_page};
use ssjoin::core::eval::{recall, PairSet, Source};
use ssjoin::core::verify::ResultPair;
use ssjoin::dataset::{gen_synthetic, write_fbin, SynthParams};
use ssjoin::executor::{run_join, JoinOptions};
use ssjoin::oracle::brute_force_vectors;
use ssjoin::orchestrate::Ordering;
use ssjoin::results::{read_pairs, CountingSink, PairsHeader, ResultWriter, HEADER_BYTES, RECORD_BYTES};
use ssjoin::Error;

fn opts(epsilon: f32, cache_bytes: u64) -> JoinOptions {
    JoinOptions { deterministic: true, ..JoinOptions::new(epsilon, cache_bytes) }
}

#[test]
fn single_bucket_join() {
    let d = scratch_dir("join", "single");
    let h = gen_synthetic(SynthParams { n: 800, dim: 8, clusters: 2, spread: 0.05, seed: 3 }, d.join("x.fbin")).unwrap();
    let p = StackParams::new(1, 0.12, 1 << 20);
    let stack = bucketize_into(&h, &d, &p);
    let (g, _) = graph_for(&stack, &p);
    let plan = plan_for(&stack, &g, p.cache_bytes, Ordering::Reordered);
    let mut pairs = Vec::new();
    let stats = run_join(&stack.store, &plan, g.fingerprint(), stack.store_key, &opts(p.epsilon, p.cache_bytes), &mut pairs).unwrap();
    assert_eq!(stats.bytes_total, round_up_page(800 * record_bytes(8)));
    assert_eq!(stats.distance_computations, 800 * 799 / 2);
    let oracle = brute_force_vectors(&h.read_all().unwrap(), 8, p.epsilon);
    assert!(!oracle.is_empty());
    assert_eq!(PairSet::from_pairs(pairs, Source::Engine).keys(), oracle.keys());
}

#[test]
fn duplicate_vectors_pair_at_distance_zero() {
    let d = scratch_dir("join", "dupes");
    let h = write_fbin(d.join("x.fbin"), 2, &[1.0, 1.0, 5.0, 5.0, 1.0, 1.0]).unwrap();
    let p = StackParams::new(1, 0.5, 1 << 20);
    let stack = bucketize_into(&h, &d, &p);
    let (g, _) = graph_for(&stack, &p);
    let plan = plan_for(&stack, &g, p.cache_bytes, Ordering::Reordered);
    let mut pairs = Vec::new();
    run_join(&stack.store, &plan, g.fingerprint(), stack.store_key, &opts(p.epsilon, p.cache_bytes), &mut pairs).unwrap();
    assert_eq!(pairs, vec![ResultPair::new(0, 2, 0.0)]);
}

#[test]
fn plan_is_followed_exactly() {
    let d = scratch_dir("join", "fidelity");
    let h = gen_synthetic(SynthParams { n: 30_000, dim: 16, clusters: 30, spread: 0.03, seed: 4 }, d.join("x.fbin")).unwrap();
    let cache = h.vector_bytes() / 10;
    let mut p = StackParams::new(60, 0.09, cache);
    p.lambda = 1.0;
    p.max_bucket_bytes = Some(cache / 4 / 4096 * 4096);
    let stack = bucketize_into(&h, &d, &p);
    let (g, _) = graph_for(&stack, &p);
    let plan = plan_for(&stack, &g, cache, Ordering::Reordered);
    assert!(plan.capacity() < stack.store.num_buckets(), "cache must be a real constraint");

    let mut first = Vec::new();
    let a = run_join(&stack.store, &plan, g.fingerprint(), stack.store_key, &opts(p.epsilon, cache), &mut first).unwrap();
    let mut second = Vec::new();
    let b = run_join(&stack.store, &plan, g.fingerprint(), stack.store_key, &opts(p.epsilon, cache), &mut second).unwrap();
    assert_eq!(a.counters(), b.counters());
    assert_eq!(first, second, "deterministic mode emits in task order");

    assert_eq!(a.cache_misses, plan.eviction.misses);
    assert_eq!(a.planned_misses, plan.eviction.misses);
    assert!(a.peak_resident_bytes <= cache);
    assert!(a.peak_resident_buckets as usize <= plan.capacity());

    let engine = PairSet::from_pairs(first.iter().copied(), Source::Engine);
    assert_eq!(engine.len(), first.len(), "no pair emitted twice");
    let oracle = brute_force_vectors(&h.read_all().unwrap(), 16, p.epsilon);
    assert!(oracle.len() > 10_000);
    assert_eq!(recall(&engine, &oracle), 1.0);
    assert_eq!(engine.intersection_len(&oracle), engine.len());

    // the parallel path finds the same set
    let mut sink = Vec::new();
    let par = run_join(
        &stack.store,
        &plan,
        g.fingerprint(),
        stack.store_key,
        &JoinOptions::new(p.epsilon, cache),
        &mut sink,
    )
    .unwrap();
    assert_eq!(par.counters(), a.counters());
    assert_eq!(PairSet::from_pairs(sink, Source::Engine).keys(), engine.keys());
}

#[test]
fn mismatched_plans_are_rejected() {
    let d = scratch_dir("join", "mismatch");
    let h = gen_synthetic(SynthParams { n: 5_000, dim: 8, clusters: 5, spread: 0.05, seed: 8 }, d.join("x.fbin")).unwrap();
    let p = StackParams::new(10, 0.1, 1 << 20);
    let stack = bucketize_into(&h, &d, &p);
    let (g, _) = graph_for(&stack, &p);
    let plan = plan_for(&stack, &g, p.cache_bytes, Ordering::Reordered);
    let o = opts(p.epsilon, p.cache_bytes);
    let mut sink = CountingSink::default();
    assert!(matches!(
        run_join(&stack.store, &plan, g.fingerprint() ^ 1, stack.store_key, &o, &mut sink),
        Err(Error::PlanMismatch(_))
    ));
    assert!(matches!(
        run_join(&stack.store, &plan, g.fingerprint(), stack.store_key ^ 1, &o, &mut sink),
        Err(Error::PlanMismatch(_))
    ));
    let mut short = plan.clone();
    short.eviction.steps.pop();
    assert!(matches!(
        run_join(&stack.store, &short, g.fingerprint(), stack.store_key, &o, &mut sink),
        Err(Error::PlanMismatch(_))
    ));
    assert!(matches!(
        run_join(&stack.store, &plan, g.fingerprint(), stack.store_key, &opts(p.epsilon, p.cache_bytes / 64), &mut sink),
        Err(Error::BudgetInfeasible { .. })
    ));
    assert_eq!(sink.pairs, 0);
}

#[test]
fn results_file_round_trip() {
    let d = scratch_dir("join", "results");
    let header = PairsHeader { epsilon: 0.25, count: 10 };
    let empty = d.join("empty.pairs");
    let w = ResultWriter::create(&empty, header).unwrap();
    assert_eq!(w.finish().unwrap(), HEADER_BYTES);
    assert_eq!(fs::metadata(&empty).unwrap().len(), HEADER_BYTES);
    assert_eq!(read_pairs(&empty).unwrap(), (header, vec![]));

    let pairs: Vec<ResultPair> = (0..7).map(|i| ResultPair::new(i, 9 - i, i as f32 / 10.0)).collect();
    let path = d.join("seven.pairs");
    let mut w = ResultWriter::create(&path, header).unwrap();
    assert_eq!(w.write_results(&pairs[..3]).unwrap(), 3 * RECORD_BYTES);
    w.write_results(&pairs[3..]).unwrap();
    assert!(!path.exists(), "nothing at the final path before finish");
    assert_eq!(w.finish().unwrap(), HEADER_BYTES + 7 * RECORD_BYTES);
    assert_eq!(fs::metadata(&path).unwrap().len(), HEADER_BYTES + 7 * RECORD_BYTES);
    assert_eq!(read_pairs(&path).unwrap(), (header, pairs));

    // an abandoned writer leaves nothing behind
    let dropped = d.join("dropped.pairs");
    drop(ResultWriter::create(&dropped, header).unwrap());
    assert_eq!(fs::read_dir(&d).unwrap().count(), 2);
}

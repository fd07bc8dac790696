use std::fs::{self, OpenOptions};
use std::os::unix::fs::FileExt;
use std::path::PathBuf;

use ssjoin::bucketize::{assign_and_layout, bucketize, BucketStore, BucketizeParams, LayoutParams};
use ssjoin::core::bucket::{extent_bytes, record_bytes, round_up_page};
use ssjoin::core::distance::l2_sq;
use ssjoin::core::graph::{GraphParams, PruneBudget};
use ssjoin::core::hnsw::{CenterIndex, IndexParams};
use ssjoin::dataset::{gen_synthetic, write_fbin, DatasetHandle, SynthParams};
use ssjoin::direct_io::{AlignedBuf, DirectReader};
use ssjoin::graph_io::{build_bucket_graph, load_graph, save_graph, store_key, GraphMeta};
use ssjoin::index_file::{load_index, save_index};
use ssjoin::orchestrate::{load_plan, orchestrate, save_plan, Ordering};
use ssjoin::Error;

const INDEX: IndexParams = IndexParams { graph_degree: 16, ef_construction: 200 };

fn dir(name: &str) -> PathBuf {
    let d = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("layout").join(name);
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn layout_params(budget: u64) -> LayoutParams {
    LayoutParams { memory_budget: budget, max_bucket_bytes: None, block_bytes: 1 << 20, ef_search: 64 }
}

fn synthetic(d: &PathBuf, n: u64, clusters: usize) -> DatasetHandle {
    gen_synthetic(SynthParams { n, dim: 16, clusters, spread: 0.05, seed: 5 }, d.join("data.fbin")).unwrap()
}

fn build(handle: &DatasetHandle, d: &PathBuf, m: u64, layout: LayoutParams) -> (CenterIndex, BucketStore, ssjoin::bucketize::LayoutStats) {
    let params = BucketizeParams { num_centers: m, seed: 7, index: INDEX, layout };
    bucketize(handle, &params, &d.join("store.bks"), &d.join("store.bkm")).unwrap()
}

fn members(store: &BucketStore) -> Vec<Vec<u64>> {
    let mut reader = DirectReader::open(&store.data_path, true).unwrap();
    let mut buf = AlignedBuf::default();
    (0..store.num_buckets() as u32).map(|b| store.read_bucket(b, &mut reader, &mut buf).unwrap().ids).collect()
}

#[test]
fn four_vectors_two_centers() {
    let d = dir("four");
    let v = [0.0, 0.0, 0.1, 0.0, 10.0, 10.0, 10.1, 10.0, 10.0, 10.0];
    let h = write_fbin(d.join("four.fbin"), 2, &v[..8]).unwrap();
    let index = CenterIndex::build(&[0.0, 0.0, 10.0, 10.0], 2, INDEX, 1).unwrap();
    let (store, _) = assign_and_layout(&h, &index, &layout_params(1 << 20), &d.join("s.bks"), &d.join("s.bkm")).unwrap();
    assert_eq!(members(&store), vec![vec![0, 1], vec![2, 3]]);
    assert!((store.buckets[0].radius - 0.1).abs() < 1e-6);

    // a center that holds only itself has radius zero
    let h = write_fbin(d.join("three.fbin"), 2, &[0.0, 0.0, 0.1, 0.0, 10.0, 10.0]).unwrap();
    let (store, _) = assign_and_layout(&h, &index, &layout_params(1 << 20), &d.join("t.bks"), &d.join("t.bkm")).unwrap();
    assert_eq!(store.buckets[1].count, 1);
    assert_eq!(store.buckets[1].radius, 0.0);
}

#[test]
fn layout_invariants_on_synthetic_data() {
    let d = dir("synthetic");
    let h = synthetic(&d, 20_000, 40);
    let budget = 2 << 20;
    let (index, store, stats) = build(&h, &d, 40, layout_params(budget));
    store.check_layout().unwrap();

    // every id lands exactly once
    let mut ids = store.id_map().unwrap();
    ids.sort_unstable();
    assert_eq!(ids, (0..h.count).collect::<Vec<_>>());

    // radius covers the members; assignment agrees with a linear scan
    let vectors = h.read_all().unwrap();
    let row = |i: u64| &vectors[i as usize * 16..][..16];
    let mut exact = 0;
    for (b, ids) in members(&store).iter().enumerate() {
        let bucket = &store.buckets[b];
        for &id in ids {
            let dist = l2_sq(row(id), &bucket.center).sqrt();
            assert!(dist <= bucket.radius + 1e-5, "bucket {b} id {id}: {dist} > {}", bucket.radius);
            let best = (0..index.len() as u32)
                .map(|c| l2_sq(row(id), index.center(c)))
                .fold(f32::INFINITY, f32::min);
            if l2_sq(row(id), &bucket.center) <= best {
                exact += 1;
            }
        }
    }
    assert!(exact as f64 >= 0.99 * h.count as f64, "exact assignments {exact}");

    assert!(stats.write_amplification() <= 1.10, "write amplification {}", stats.write_amplification());
    assert!(stats.peak_memory <= budget, "peak {} over budget {budget}", stats.peak_memory);
    assert_eq!(stats.payload_bytes, h.count * record_bytes(16));
    assert_eq!(stats.padded_bytes, store.total_extent_bytes());

    // padding costs under one page per bucket: amp <= 1 + page / average bucket
    let m = store.num_buckets() as u64;
    assert!(stats.padded_bytes - stats.payload_bytes < m * ssjoin::core::PAGE_SIZE);
    let bound = 1.0 + ssjoin::core::PAGE_SIZE as f64 * m as f64 / stats.payload_bytes as f64;
    assert!(stats.padded_bytes as f64 / stats.payload_bytes as f64 <= bound);
}

#[test]
fn assignments_recomputed_when_memory_is_tight() {
    let d = dir("tight");
    let h = synthetic(&d, 20_000, 10);
    let (_, roomy, _) = build(&h, &d, 10, layout_params(8 << 20));
    let roomy_members = members(&roomy);
    let d2 = dir("tight2");
    let h2 = synthetic(&d2, 20_000, 10);
    let (_, tight, stats) = build(&h2, &d2, 10, layout_params(240 << 10));
    assert!(stats.reassigned);
    assert!(stats.peak_memory <= 240 << 10);
    assert_eq!(members(&tight), roomy_members);
}

#[test]
fn infeasible_budget_is_reported() {
    let d = dir("infeasible");
    let h = synthetic(&d, 5_000, 10);
    let params = BucketizeParams { num_centers: 200, seed: 7, index: INDEX, layout: layout_params(64 << 10) };
    let err = bucketize(&h, &params, &d.join("s.bks"), &d.join("s.bkm")).unwrap_err();
    assert!(matches!(err, Error::BudgetInfeasible { .. }), "{err}");
    assert!(!d.join("s.bks").exists() && !d.join("s.bkm").exists());
}

#[test]
fn oversized_groups_are_split() {
    let d = dir("split");
    let h = synthetic(&d, 20_000, 4);
    let cap = 64 << 10;
    let (_, store, _) = build(&h, &d, 4, LayoutParams { max_bucket_bytes: Some(cap), ..layout_params(4 << 20) });
    assert!(store.num_buckets() > store.num_groups());
    for group in &store.group_buckets {
        let first = &store.buckets[group[0] as usize];
        for &b in group {
            let b = &store.buckets[b as usize];
            assert!(b.extent.length <= cap);
            assert_eq!((b.center.as_slice(), b.radius), (first.center.as_slice(), first.radius));
        }
        // chained sub-buckets are contiguous on disk
        for w in group.windows(2) {
            let (a, b) = (&store.buckets[w[0] as usize], &store.buckets[w[1] as usize]);
            assert_eq!(a.extent.offset + a.extent.length, b.extent.offset);
        }
    }
}

#[test]
fn reads_are_aligned_and_repeatable() {
    let d = dir("reads");
    let h = synthetic(&d, 5_000, 8);
    let (_, store, _) = build(&h, &d, 8, layout_params(4 << 20));
    let mut reader = DirectReader::open(&store.data_path, true).unwrap();
    let mut buf = AlignedBuf::default();
    let mut expected_bytes = 0;
    for b in 0..store.num_buckets() as u32 {
        let one = store.read_bucket(b, &mut reader, &mut buf).unwrap();
        let two = store.read_bucket(b, &mut reader, &mut buf).unwrap();
        assert_eq!(one, two);
        let bucket = &store.buckets[b as usize];
        assert_eq!(bucket.extent.offset % 4096, 0);
        assert_eq!(bucket.extent.length, round_up_page(bucket.count * record_bytes(16)));
        assert_eq!(bucket.extent.length, extent_bytes(bucket.count, 16));
        expected_bytes += 2 * bucket.extent.length;
    }
    assert_eq!(reader.bytes_read(), expected_bytes);

    let reloaded = BucketStore::load(&d.join("store.bkm")).unwrap();
    assert_eq!(reloaded, store);
}

#[test]
fn corrupt_extent_is_detected() {
    let d = dir("corrupt");
    let h = synthetic(&d, 3_000, 3);
    let (_, store, _) = build(&h, &d, 3, layout_params(4 << 20));
    let victim = store.buckets.iter().find(|b| b.count * record_bytes(16) < b.extent.length).unwrap();
    // stray byte in the padding after the last record
    let file = OpenOptions::new().write(true).open(&store.data_path).unwrap();
    file.write_all_at(&[0xAB], victim.extent.offset + victim.extent.length - 1).unwrap();
    let mut reader = DirectReader::open(&store.data_path, true).unwrap();
    let err = store.read_bucket(victim.id, &mut reader, &mut AlignedBuf::default()).unwrap_err();
    assert!(matches!(err, Error::CorruptExtent { bucket, .. } if bucket == victim.id), "{err}");

    // a count that disagrees with the extent is rejected at load
    let mut bad = store.clone();
    bad.buckets[0].count += 1000;
    bad.count += 1000;
    assert!(bad.check_layout().is_err());
}

#[test]
fn index_file_round_trip() {
    let d = dir("cidx");
    let h = synthetic(&d, 5_000, 20);
    let (index, _, _) = build(&h, &d, 50, layout_params(4 << 20));
    save_index(&index, &d.join("c.cidx")).unwrap();
    assert_eq!(load_index(&d.join("c.cidx")).unwrap(), index);

    let mut raw = fs::read(d.join("c.cidx")).unwrap();
    raw.truncate(raw.len() - 3);
    fs::write(d.join("short.cidx"), raw).unwrap();
    assert!(load_index(&d.join("short.cidx")).is_err());
}

#[test]
fn graph_and_plan_files_round_trip() {
    let d = dir("graph");
    let h = synthetic(&d, 10_000, 20);
    let (index, store, _) = build(&h, &d, 20, layout_params(4 << 20));
    let params = GraphParams::new(0.1, PruneBudget::new(0.9, 16, true));
    let (g, stats) = build_bucket_graph(&index, &store, &params).unwrap();
    assert_eq!(stats.len(), 20);
    assert!(g.self_check());
    let meta = GraphMeta { epsilon: 0.1, lambda: 0.9, apply_mu: true, store_key: store_key(&store) };
    save_graph(&g, &meta, &d.join("g.bdg")).unwrap();
    let (g2, meta2) = load_graph(&d.join("g.bdg")).unwrap();
    assert_eq!((g2.fingerprint(), &g2, meta2), (g.fingerprint(), &g, meta));

    let slot = round_up_page(store.max_extent_bytes());
    let plan = orchestrate(&g, store_key(&store), slot, 8 * slot, Ordering::Reordered).unwrap();
    save_plan(&plan, &d.join("p.plan")).unwrap();
    assert_eq!(load_plan(&d.join("p.plan")).unwrap(), plan);
    assert!(matches!(
        orchestrate(&g, 0, slot, slot, Ordering::Reordered),
        Err(Error::BudgetInfeasible { .. })
    ));
}

#[test]
fn degenerate_graphs() {
    let d = dir("degenerate");
    let h = synthetic(&d, 2_000, 2);
    let (index, store, _) = build(&h, &d, 1, layout_params(4 << 20));
    let (g, _) = build_bucket_graph(&index, &store, &GraphParams::new(0.5, PruneBudget::new(0.9, 16, true))).unwrap();
    assert_eq!((g.num_nodes(), g.num_edges(), g.self_check()), (1, 0, true));

    // two far-apart centers and a tiny epsilon: no cross edge
    let v: Vec<f32> = (0..200).flat_map(|i| [if i < 100 { 0.0 } else { 50.0 }, i as f32 * 1e-4]).collect();
    let h = write_fbin(d.join("two.fbin"), 2, &v).unwrap();
    let index = CenterIndex::build(&[0.0, 0.0, 50.0, 0.01], 2, INDEX, 1).unwrap();
    let (store, _) = assign_and_layout(&h, &index, &layout_params(1 << 20), &d.join("t.bks"), &d.join("t.bkm")).unwrap();
    let (g, _) = build_bucket_graph(&index, &store, &GraphParams::new(1e-6, PruneBudget::new(0.9, 2, true))).unwrap();
    assert_eq!(g.num_edges(), 0);
    let (g, _) = build_bucket_graph(&index, &store, &GraphParams::new(60.0, PruneBudget::new(1.0, 2, true))).unwrap();
    assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1)]);
}

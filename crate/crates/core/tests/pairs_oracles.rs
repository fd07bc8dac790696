use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssjoin_core::distance::l2_sq_f64;
use ssjoin_core::eval::{brute_force_blocked, brute_force_naive, recall, PairSet, Source};
use ssjoin_core::sample::sample_ids;
use ssjoin_core::verify::{verify_pair, verify_rows, PayloadRef, ResultPair};

fn rows(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<f32> {
    (0..n * dim).map(|_| rng.random_range(0.0f32..1.0)).collect()
}

#[test]
fn verify_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dim = 8;
    let (va, vb) = (rows(&mut rng, 200, dim), rows(&mut rng, 200, dim));
    let ia: Vec<u64> = (0..200).collect();
    let ib: Vec<u64> = (200..400).collect();
    let eps = 0.6f32;
    let mut got = Vec::new();
    let dc = verify_pair(PayloadRef::new(&ia, &va, dim), PayloadRef::new(&ib, &vb, dim), eps, false, &mut got);
    assert_eq!(dc, 40_000);
    let mut want = Vec::new();
    for i in 0..200 {
        for j in 0..200 {
            let d = l2_sq_f64(&va[i * dim..][..dim], &vb[j * dim..][..dim]);
            // stay clear of the float boundary
            assert!((d.sqrt() - eps as f64).abs() > 1e-5);
            if d.sqrt() <= eps as f64 {
                want.push(ResultPair::new(ia[i], ib[j], d.sqrt() as f32));
            }
        }
    }
    let got = PairSet::from_pairs(got, Source::Engine);
    let want = PairSet::from_pairs(want, Source::Oracle);
    assert!(!want.is_empty());
    assert_eq!(got.keys(), want.keys());
    for (g, w) in got.iter().zip(want.iter()) {
        assert!((g.dist - w.dist).abs() <= 1e-5);
    }
}

#[test]
fn row_ranges_partition_the_work() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let dim = 5;
    let v = rows(&mut rng, 150, dim);
    let ids: Vec<u64> = (0..150).map(|i| i * 3).collect();
    let p = PayloadRef::new(&ids, &v, dim);
    let mut whole = Vec::new();
    let dc = verify_pair(p, p, 0.5, true, &mut whole);
    assert_eq!(dc, 150 * 149 / 2);
    let mut parts = Vec::new();
    let mut dc_parts = 0;
    for r in [0..40, 40..41, 41..150] {
        dc_parts += verify_rows(p, r, p, 0.5, true, &mut parts);
    }
    assert_eq!(dc, dc_parts);
    assert_eq!(whole, parts);
}

#[test]
fn blocked_and_naive_oracles_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let dim = 16;
    let n = 10_000;
    let v = rows(&mut rng, n, dim);
    let ids: Vec<u64> = (0..n as u64).collect();
    let eps = 0.75;
    let a = brute_force_blocked(&v, &ids, dim, eps, 512);
    let b = brute_force_naive(&v, &ids, dim, eps);
    assert!(a.len() > 1000);
    assert_eq!(a, b);
    assert_eq!(recall(&a, &b), 1.0);
}

#[test]
fn sampling_is_uniform() {
    // 1000 trials of 1000 ids out of 10^6; ids binned into 1000 bins of 1000,
    // each bin expects 1000 hits with sd ~ 31.6.
    let (n, m, trials) = (1_000_000u64, 1000u64, 1000u64);
    let mut bins = vec![0u64; 1000];
    for seed in 0..trials {
        let ids = sample_ids(n, m, seed).unwrap();
        assert_eq!(ids.len(), m as usize);
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
        for id in ids {
            bins[(id / 1000) as usize] += 1;
        }
    }
    let p = 1000.0 / n as f64;
    let expect = (trials * m) as f64 * p;
    let sd = ((trials * m) as f64 * p * (1.0 - p)).sqrt();
    for (i, &c) in bins.iter().enumerate() {
        assert!((c as f64 - expect).abs() <= 5.0 * sd, "bin {i}: {c}");
    }
}

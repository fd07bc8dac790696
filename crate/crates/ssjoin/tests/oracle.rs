use std::path::PathBuf;

use ssjoin::core::distance::l2;
use ssjoin::core::eval::{recall, PairSet, Source};
use ssjoin::core::verify::ResultPair;
use ssjoin::dataset::{gen_synthetic, write_fbin, SynthParams};
use ssjoin::oracle::{average_neighbors, brute_force_join, brute_force_vectors, calibrate_epsilon, evaluate};
use ssjoin::Error;

fn path(name: &str) -> PathBuf {
    let d = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("oracle");
    std::fs::create_dir_all(&d).unwrap();
    d.join(name)
}

#[test]
fn collinear_points_and_tiny_epsilon() {
    let eps = 0.8f32;
    let v = [0.0, 0.0, 0.4, 0.0, 0.8, 0.0];
    let set = brute_force_vectors(&v, 2, eps);
    assert_eq!(set.keys(), [(0, 1), (0, 2), (1, 2)]);
    assert!(brute_force_vectors(&v, 2, 0.39).is_empty());
}

#[test]
fn exact_join_refuses_large_inputs() {
    let h = write_fbin(path("three.fbin"), 1, &[0.0, 1.0, 2.0]).unwrap();
    assert!(matches!(brute_force_join(&h, 1.0, 2), Err(Error::TooLarge { size: 3, limit: 2, .. })));
    assert_eq!(brute_force_join(&h, 1.0, 3).unwrap().keys(), [(0, 1), (1, 2)]);
}

#[test]
fn recall_counts_missing_pairs() {
    let r = |a, b| ResultPair::new(a, b, 0.0);
    let oracle = PairSet::from_pairs((0..10).map(|i| r(i, i + 1)), Source::Oracle);
    let engine = PairSet::from_pairs((0..7).map(|i| r(i + 1, i)), Source::Engine);
    assert!((recall(&engine, &oracle) - 0.7).abs() < 1e-12);
}

#[test]
fn evaluation_rechecks_every_engine_pair() {
    let v = [0.0f32, 0.1, 0.2, 5.0];
    let oracle = brute_force_vectors(&v, 1, 0.15);
    let d = |a: usize, b: usize| l2(&v[a..a + 1], &v[b..b + 1]);
    let engine = PairSet::from_pairs(
        [ResultPair::new(0, 1, d(0, 1)), ResultPair::new(2, 3, d(2, 3)), ResultPair::new(0, 2, 0.05)],
        Source::Engine,
    );
    let rep = evaluate(&engine, &oracle, &v, 1, 0.15);
    assert_eq!((rep.engine_pairs, rep.oracle_pairs, rep.matched), (3, 2, 1));
    // (2,3) is far apart and (0,2) sits at 0.2 > 0.15 with a wrong stored distance
    assert_eq!(rep.violations, 2);
    assert_eq!(rep.distance_warnings, 1);
    assert!((rep.precision - 1.0 / 3.0).abs() < 1e-12);
    assert!((rep.recall - 0.5).abs() < 1e-12);
}

#[test]
fn calibration_hits_the_target_on_a_fresh_sample() {
    let h = gen_synthetic(SynthParams { n: 100_000, dim: 32, clusters: 100, spread: 0.05, seed: 1 }, path("cal.fbin")).unwrap();
    let c = calibrate_epsilon(&h, 100.0, 1000, 42).unwrap();
    assert!((c.achieved - 100.0).abs() < 1.0, "in-sample average {}", c.achieved);
    let fresh = average_neighbors(&h, c.epsilon, 1000, 4242).unwrap();
    assert!((80.0..=120.0).contains(&fresh), "fresh sample average {fresh} at epsilon {}", c.epsilon);

    let doubled = calibrate_epsilon(&h, 200.0, 1000, 42).unwrap();
    assert!(doubled.epsilon > c.epsilon);

    // zero neighbors: below the smallest nonzero sampled distance
    let zero = calibrate_epsilon(&h, 0.0, 200, 42).unwrap();
    assert_eq!(average_neighbors(&h, zero.epsilon, 200, 42).unwrap(), 0.0);
    assert!(zero.epsilon > 0.0);
}

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dir(name: &str) -> PathBuf {
    let d = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn ssjoin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssjoin")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> BTreeMap<String, String> {
    let out = ssjoin(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(path: &Path, n: u64, dim: u32, clusters: u32, spread: &str) {
    let out = ssjoin(&[
        "gen-data", "--n", &n.to_string(), "--dim", &dim.to_string(), "--clusters", &clusters.to_string(),
        "--spread", spread, "--seed", "1", "--out", s(path),
    ]);
    assert!(out.status.success());
}

#[test]
fn missing_dataset_fails_cleanly() {
    let d = dir("missing");
    let out_dir = d.join("run");
    let out = ssjoin(&["pipeline", "--data", s(&d.join("absent.fbin")), "--out-dir", s(&out_dir)]);
    assert!(!out.status.success());
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    assert!(!out_dir.exists());

    // an infeasible budget after the directory exists leaves no partial artifacts
    gen(&d.join("x.fbin"), 5_000, 8, 5, "0.05");
    let out = ssjoin(&[
        "pipeline", "--data", s(&d.join("x.fbin")), "--out-dir", s(&out_dir), "--epsilon", "0.1",
        "--memory", "4096", "--num-buckets", "50",
    ]);
    assert!(!out.status.success());
    let leftovers: Vec<_> = fs::read_dir(&d).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(leftovers, vec![std::ffi::OsString::from("x.fbin")]);
}

#[test]
fn rerun_skips_finished_phases() {
    let d = dir("rerun");
    let data = d.join("x.fbin");
    gen(&data, 20_000, 16, 20, "0.05");
    let run = d.join("run");
    let args = ["pipeline", "--data", s(&data), "--out-dir", s(&run), "--deterministic", "--memory", "1M"];
    let first = ok(&args);
    assert_eq!(first["skipped"], "");
    let pairs = fs::read(run.join("results.pairs")).unwrap();
    let second = ok(&args);
    assert_eq!(second["skipped"], "bucketize,graph,orchestrate");
    assert_eq!(first["epsilon"], second["epsilon"]);
    assert_eq!(fs::read(run.join("results.pairs")).unwrap(), pairs);
    for key in ["bytes_total", "cache_misses", "distance_computations", "pairs"] {
        assert_eq!(first[key], second[key], "{key}");
    }
    assert_eq!(fs::read_to_string(run.join("stats.csv")).unwrap().lines().count(), 3);

    let mut changed = args.to_vec();
    changed.extend(["--lambda", "1.0"]);
    // the graph is rebuilt; the plan is reused only if the graph came out identical
    let third = ok(&changed);
    assert!(third["skipped"] == "bucketize" || third["skipped"] == "bucketize,orchestrate", "{}", third["skipped"]);
}

#[test]
fn phase_commands_chain() {
    let d = dir("phases");
    let data = d.join("x.fbin");
    gen(&data, 10_000, 16, 10, "0.05");
    let b = ok(&["bucketize", "--data", s(&data), "--out-dir", s(&d), "--num-buckets", "20", "--memory", "4M"]);
    assert_eq!(b["centers"], "20");
    let g = ok(&[
        "graph", "--store", s(&d.join("store.bkm")), "--index", s(&d.join("centers.cidx")), "--epsilon", "0.12",
        "--lambda", "1.0", "--out", s(&d.join("g.bdg")),
    ]);
    assert!(g["edges"].parse::<u64>().unwrap() > 0);
    let o = ok(&[
        "orchestrate", "--store", s(&d.join("store.bkm")), "--graph", s(&d.join("g.bdg")), "--cache-bytes", "1M",
        "--out", s(&d.join("p.plan")),
    ]);
    let j = ok(&[
        "join", "--data", s(&data), "--store", s(&d.join("store.bkm")), "--graph", s(&d.join("g.bdg")),
        "--plan", s(&d.join("p.plan")), "--epsilon", "0.12", "--cache-bytes", "1M", "--out", s(&d.join("r.pairs")),
    ]);
    assert_eq!(j["cache_misses"], o["planned_misses"]);
    ok(&["oracle", "--data", s(&data), "--epsilon", "0.12", "--out", s(&d.join("o.pairs"))]);
    let e = ok(&["eval", "--engine", s(&d.join("r.pairs")), "--oracle", s(&d.join("o.pairs"))]);
    assert_eq!(e["recall"], "1.000000");
    assert_eq!(e["engine_pairs"], j["pairs"]);

    let sim = ssjoin(&["simulate-cache", "--plan", s(&d.join("p.plan"))]);
    let text = String::from_utf8(sim.stdout).unwrap();
    let belady = text.lines().find(|l| l.starts_with("belady,")).unwrap();
    assert_eq!(belady.split(',').nth(3).unwrap(), o["planned_misses"]);

    // a plan for another graph is refused
    ok(&[
        "graph", "--store", s(&d.join("store.bkm")), "--index", s(&d.join("centers.cidx")), "--epsilon", "0.3",
        "--out", s(&d.join("g2.bdg")),
    ]);
    let out = ssjoin(&[
        "join", "--data", s(&data), "--store", s(&d.join("store.bkm")), "--graph", s(&d.join("g2.bdg")),
        "--plan", s(&d.join("p.plan")), "--epsilon", "0.3", "--cache-bytes", "1M", "--out", s(&d.join("bad.pairs")),
    ]);
    assert!(!out.status.success());
    assert!(!d.join("bad.pairs").exists());
}

#[test]
fn cache_simulation_of_a_hand_sequence() {
    let d = dir("simulate");
    fs::write(d.join("seq.txt"), "1 2 3 1 2 3\n").unwrap();
    let out = ssjoin(&["simulate-cache", "--seq", s(&d.join("seq.txt")), "--capacity", "2"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let misses = |policy: &str| -> String {
        text.lines().find(|l| l.starts_with(policy)).unwrap().split(',').nth(3).unwrap().to_string()
    };
    assert_eq!(misses("belady"), "4");
    assert_eq!(misses("lru"), "6");
}

#[test]
fn config_file_and_overrides() {
    let d = dir("config");
    fs::write(d.join("bad.conf"), "lambda=2\n").unwrap();
    let out = ssjoin(&["pipeline", "--data", "x.fbin", "--out-dir", s(&d.join("r")), "--config", s(&d.join("bad.conf"))]);
    assert!(!out.status.success());
    let out = ssjoin(&["pipeline", "--data", "x.fbin", "--out-dir", s(&d.join("r")), "--set", "nonsense=1"]);
    assert!(!out.status.success());

    let data = d.join("x.fbin");
    gen(&data, 4_000, 8, 4, "0.05");
    fs::write(d.join("run.conf"), "epsilon=0.1\nnum_buckets=8\nlambda=0.95\nmemory=1M\n").unwrap();
    let r = ok(&[
        "pipeline", "--data", s(&data), "--out-dir", s(&d.join("r")), "--config", s(&d.join("run.conf")),
        "--set", "seed=9",
    ]);
    assert_eq!(r["epsilon"], "0.1");
    let saved = fs::read_to_string(d.join("r").join("config.txt")).unwrap();
    assert!(saved.contains("lambda=0.95\n") && saved.contains("seed=9\n") && saved.contains("num_buckets=8\n"));
}

#[test]
fn pipeline_eval_meets_recall_target() {
    let d = dir("eval");
    let data = d.join("x.fbin");
    gen(&data, 100_000, 32, 100, "0.05");
    let r = ok(&["pipeline", "--data", s(&data), "--out-dir", s(&d.join("r")), "--lambda", "0.9", "--cache", "10%", "--eval"]);
    let recall: f64 = r["recall"].parse().unwrap();
    assert!(recall >= 0.88, "recall {recall}");
    assert_eq!(r["precision"], "1.000000");
    assert_eq!(r["cache_misses"], r["planned_misses"]);
    assert!(d.join("r").join("eval.txt").exists());
}

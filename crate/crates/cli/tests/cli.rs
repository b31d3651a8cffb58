use std::path::Path;
use std::process::{Command, Output};

use bm_cli::{bench_baseline, bench_match, BenchOptions};
use bm_cluster::{Backend, ClusterConfig};
use bm_core::cost::{optimal_nin, Geometry, TimingTable};
use bm_core::fvec::{gen_dataset, FeatureSet};

fn bm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bm"))
        .args(args)
        .env_remove("BM_CONFIG")
        .output()
        .expect("bm runs")
}

fn ok(args: &[&str]) -> String {
    let out = bm(args);
    assert!(
        out.status.success(),
        "bm {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) {
    let out = bm(args);
    assert!(!out.status.success(), "bm {args:?} should fail");
    assert!(!out.stderr.is_empty());
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_is_seeded_and_unit() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.fvec");
    let b = dir.path().join("b.fvec");
    let c = dir.path().join("c.fvec");
    ok(&["gen", "--count", "200", "--dim", "64", "--seed", "9", "--out", p(&a)]);
    ok(&["gen", "--count", "200", "--dim", "64", "--seed", "9", "--out", p(&b)]);
    ok(&["gen", "--count", "200", "--dim", "64", "--seed", "10", "--out", p(&c)]);
    let (ba, bb, bc) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap(), std::fs::read(&c).unwrap());
    assert_eq!(ba, bb);
    assert_ne!(ba, bc);
    let f = FeatureSet::read_any(&ba).unwrap();
    assert_eq!((f.len(), f.dim), (200, 64));
    for i in 0..f.len() {
        let n: f64 = f.row_f64(i).iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-6);
    }
    let csv = dir.path().join("a.csv");
    ok(&["convert", "--input", p(&a), "--out", p(&csv)]);
    let back = FeatureSet::read_any(&std::fs::read(&csv).unwrap()).unwrap();
    assert_eq!(back.len(), 200);
    assert!((back.row_f64(3)[5] - f.row_f64(3)[5]).abs() < 1e-6);
}

#[test]
fn random_unit_vectors_are_nearly_orthogonal() {
    // |cos| of two independent uniform unit vectors in dimension 128 has
    // standard deviation about 1/sqrt(128); 0.5 is over 5.6 deviations out.
    let f = gen_dataset(1000, 128, 21).unwrap();
    let rows: Vec<Vec<f64>> = (0..f.len()).map(|i| f.row_f64(i)).collect();
    let mut worst: f64 = 0.0;
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let c: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
            worst = worst.max(c.abs());
        }
    }
    assert!(worst < 0.5, "max |cos| = {worst}");
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.fvec");
    fails(&["gen", "--count", "10", "--dim", "12", "--out", p(&out)]);
    fails(&["gen", "--count", "0", "--dim", "16", "--out", p(&out)]);
    fails(&["bench-match", "--fvec", p(&dir.path().join("missing.fvec"))]);
    fails(&["cost", "eval", "--n-in", "3"]);
    fails(&["cost", "eval", "--table", p(&dir.path().join("missing.csv"))]);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"S": 8192, "m": 96}"#).unwrap();
    fails(&["keygen", "--config", p(&bad), "--keys", p(&dir.path().join("k"))]);
    ok(&["gen", "--count", "10", "--dim", "64", "--out", p(&out)]);
    // Dimension mismatch against the default m = 128.
    fails(&["bench-base", "--backend", "exact", "--fvec", p(&out), "--reps", "1"]);
}

#[test]
fn cost_commands() {
    let eval = ok(&["cost", "eval"]);
    assert!(eval.contains("\n4,61.72,281.92,91.20,434.84\n"), "{eval}");
    assert_eq!(ok(&["cost", "optimize"]).trim(), "4");
    let md = ok(&["cost", "eval", "--format", "md"]);
    assert!(md.contains("| N_in |"));
    let bracket = ok(&["cost", "bracket"]);
    assert_eq!(bracket.lines().count(), 7);
    assert!(bracket.lines().skip(1).all(|l| l.contains(",true,")));
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("t.csv");
    std::fs::write(&table, TimingTable::reference().to_csv()).unwrap();
    assert_eq!(ok(&["cost", "eval", "--table", p(&table)]), eval);
}

#[test]
fn local_keygen_enroll_match() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let config = ClusterConfig {
        slots: 256,
        m: 32,
        n_in: 4,
        shards: 2,
        shard_capacity: 64,
        backend: Backend::Exact,
        ..ClusterConfig::default()
    };
    std::fs::write(&cfg, config.to_json()).unwrap();
    let data = dir.path().join("d.fvec");
    let keys = dir.path().join("keys");
    let store = dir.path().join("store");
    ok(&["gen", "--count", "100", "--dim", "32", "--seed", "4", "--out", p(&data)]);
    ok(&["keygen", "--config", p(&cfg), "--keys", p(&keys)]);
    ok(&["enroll", "--config", p(&cfg), "--keys", p(&keys), "--store", p(&store), "--fvec", p(&data)]);
    let out = ok(&[
        "match", "--config", p(&cfg), "--keys", p(&keys), "--store", p(&store), "--fvec", p(&data), "--row", "57",
        "--threshold", "0.9",
    ]);
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["best_index"], 57);
    assert_eq!(v["accepted"], true);
    assert_eq!(v["candidates"], 100);
    assert!((v["best_score"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    // Enrolling again collides with occupied slots; past capacity is rejected.
    fails(&["enroll", "--config", p(&cfg), "--keys", p(&keys), "--store", p(&store), "--fvec", p(&data)]);
    fails(&[
        "enroll", "--config", p(&cfg), "--keys", p(&keys), "--store", p(&store), "--fvec", p(&data), "--start",
        "100",
    ]);
}

#[test]
fn modeled_report_is_deterministic_without_std() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.fvec");
    let table = dir.path().join("t.csv");
    std::fs::write(&table, TimingTable::reference().to_csv()).unwrap();
    ok(&["gen", "--count", "300", "--dim", "32", "--seed", "2", "--out", p(&data)]);
    let args = [
        "bench-match", "--backend", "exact", "--slots", "256", "--m", "32", "--shards", "3", "--fvec", p(&data),
        "--reps", "1", "--timing", p(&table), "--n-in-list", "2,4,8",
    ];
    let a = ok(&args);
    let b = ok(&args);
    assert_eq!(a, b);
    assert!(!a.contains("_std"));
    assert_eq!(a.lines().count(), 4);
    let mut repeated = args.to_vec();
    repeated[12] = "3";
    let c = ok(&repeated);
    assert!(c.lines().next().unwrap().ends_with("total_std"));
    assert_eq!(c, ok(&repeated));
}

#[test]
fn modeled_argmin_matches_cost_model() {
    let config = ClusterConfig {
        backend: Backend::Exact,
        shards: 1,
        ..ClusterConfig::default()
    };
    let data = gen_dataset(2048, 128, 5).unwrap();
    let opts = BenchOptions {
        reps: 1,
        timing: Some(TimingTable::reference()),
        ..BenchOptions::default()
    };
    let report = bench_match(&config, &data, &[2, 4, 8, 16], &opts).unwrap();
    let measured = report.argmin_matching().unwrap().n_in;
    let predicted = optimal_nin(&TimingTable::reference(), &Geometry::new(128, 2048, 8192), &[2, 4, 8, 16]).unwrap();
    assert_eq!(measured, predicted, "{}", report.to_csv());
    assert_eq!(report.predicted_nin, Some(predicted));
    let m: Vec<f64> = report.rows.iter().map(|r| r.matching_ms.mean).collect();
    assert!(m[0] > m[1] && m[3] > m[2], "not U-shaped: {m:?}");
}

#[test]
fn baseline_ordering_over_dimension() {
    let opts = BenchOptions {
        reps: 1,
        timing: Some(TimingTable::reference()),
        ..BenchOptions::default()
    };
    let mut base = Vec::new();
    for m in [16, 128, 256] {
        let config = ClusterConfig {
            backend: Backend::Exact,
            shards: 1,
            m,
            n_in: 4,
            ..ClusterConfig::default()
        };
        let data = gen_dataset(1024, m, 8).unwrap();
        let r = bench_baseline(&config, &data, &opts).unwrap();
        let b = r.row("Base").unwrap();
        let split = r.row("4").unwrap();
        if m >= 128 {
            assert!(b.rotations > split.rotations);
        }
        assert!(r.notes.iter().any(|n| n.contains("0.000e0")), "{:?}", r.notes);
        base.push(b.matching_ms.mean);
    }
    assert!(base[0] < base[1] && base[1] < base[2], "{base:?}");
}

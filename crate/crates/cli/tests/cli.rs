use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fling::model::FunctionalDataset;

fn fling(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fling")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = fling(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, seed: u64, extra: &[&str]) {
    let seed = seed.to_string();
    let mut args = vec!["simulate", "--out", path(dir), "--seed", &seed, "--p", "3", "--n", "12", "--d", "20"];
    args.extend_from_slice(extra);
    ok(&args);
}

fn fit(dataset: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec!["fit", "--dataset", path(dataset), "--out", path(out), "--K", "2", "--L", "8", "--iterations", "40"];
    args.extend_from_slice(extra);
    ok(&args);
}

fn read_matrix(p: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(p)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

/// `seed,p,d,n,TPR,FDR,MCC` row printed by `evaluate`.
fn metrics(stdout: &str) -> [f64; 3] {
    let row: Vec<f64> = stdout.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    [row[4], row[5], row[6]]
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    simulate(&a, 5, &[]);
    simulate(&b, 5, &[]);
    simulate(&c, 6, &[]);
    for file in ["dataset.csv", "truth_adjacency.csv", "truth_effects.csv", "metadata.json"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    assert_ne!(fs::read(a.join("dataset.csv")).unwrap(), fs::read(c.join("dataset.csv")).unwrap());
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 5);
    assert_eq!(meta["config"]["p"], 3);
}

#[test]
fn simulated_records_have_the_requested_shape() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), 1, &[]);
    let ds = FunctionalDataset::read_csv(dir.path().join("dataset.csv")).unwrap();
    assert_eq!((ds.n(), ds.p()), (12, 3));
    assert!(ds.curves().iter().all(|c| c.len() == 20));
    let rows = fs::read_to_string(dir.path().join("dataset.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 12 * 3 * 20);
}

#[test]
fn uneven_grids_vary_per_curve() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), 2, &["--grid", "uneven"]);
    let ds = FunctionalDataset::read_csv(dir.path().join("dataset.csv")).unwrap();
    let lens: std::collections::BTreeSet<usize> = ds.curves().iter().map(|c| c.len()).collect();
    assert!(lens.len() > 1, "lengths {lens:?}");
    assert!(lens.iter().all(|&l| l <= 20));
}

#[test]
fn simulated_data_round_trips_through_fit() {
    let dir = tempfile::tempdir().unwrap();
    let (sim, out) = (dir.path().join("sim"), dir.path().join("fit"));
    simulate(&sim, 3, &[]);
    fit(&sim.join("dataset.csv"), &out, &["--seed", "4"]);
    for file in ["edge_ppi.csv", "adjacency.csv", "graph.dot", "basis.csv", "trace.csv", "b_mean.csv", "summary.json", "checkpoint.json", "run.json"] {
        assert!(out.join(file).is_file(), "missing {file}");
    }
    let ppi = read_matrix(&out.join("edge_ppi.csv"));
    assert_eq!(ppi.len(), 3);
    assert!(ppi.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    let basis = fs::read_to_string(out.join("basis.csv")).unwrap();
    assert_eq!(basis.lines().next(), Some("t,phi_1,phi_2"));
    // 40 iterations, burn-in 20, thin 5.
    assert_eq!(fs::read_to_string(out.join("trace.csv")).unwrap().lines().count(), 1 + 4);
    assert!(fs::read_to_string(out.join("graph.dot")).unwrap().starts_with("digraph"));

    let again = dir.path().join("again");
    fit(&sim.join("dataset.csv"), &again, &["--seed", "4"]);
    assert_eq!(fs::read(out.join("edge_ppi.csv")).unwrap(), fs::read(again.join("edge_ppi.csv")).unwrap());
    assert_eq!(fs::read(out.join("trace.csv")).unwrap(), fs::read(again.join("trace.csv")).unwrap());
}

#[test]
fn multiple_chains_average_their_inclusion_probabilities() {
    let dir = tempfile::tempdir().unwrap();
    let (sim, out) = (dir.path().join("sim"), dir.path().join("fit"));
    simulate(&sim, 7, &[]);
    fit(&sim.join("dataset.csv"), &out, &["--chains", "3"]);
    let chains: Vec<_> = (0..3).map(|c| read_matrix(&out.join(format!("chain-{c}/edge_ppi.csv")))).collect();
    let avg = read_matrix(&out.join("edge_ppi.csv"));
    for j in 0..3 {
        for l in 0..3 {
            let mean = chains.iter().map(|m| m[j][l]).sum::<f64>() / 3.0;
            assert!((avg[j][l] - mean).abs() < 1e-12);
        }
    }
    assert!(out.join("chain-2/summary.json").is_file());
    assert!(out.join("adjacency.csv").is_file());
}

#[test]
fn candidate_list_selects_k() {
    let dir = tempfile::tempdir().unwrap();
    let (sim, out) = (dir.path().join("sim"), dir.path().join("fit"));
    simulate(&sim, 8, &[]);
    let ds = sim.join("dataset.csv");
    ok(&["fit", "--dataset", path(&ds), "--out", path(&out), "--K-candidates", "1,2,3", "--L", "8", "--iterations", "20"]);
    let run: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    let k = run["hyperparameters"]["k"].as_u64().unwrap();
    assert!((1..=3).contains(&k));
    assert_eq!(run["k_candidates"], serde_json::json!([1, 2, 3]));
}

#[test]
fn malformed_rows_report_their_line() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("bad.csv");
    fs::write(&ds, "subject_id,function_id,grid_point,value\ns1,X1,0.5,1.0\ns1,X2,0.5,oops\n").unwrap();
    let out = fling(&["fit", "--dataset", path(&ds), "--out", path(dir.path()), "--K", "1"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(":3:") && err.contains("value"), "{err}");
}

#[test]
fn evaluate_scores_adjacency_files() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        fs::write(&p, text).unwrap();
        p
    };
    let chain = write("chain.csv", "0,0,0\n1,0,0\n0,1,0\n");
    let reversed = write("reversed.csv", "0,1,0\n0,0,1\n0,0,0\n");
    let empty = write("empty.csv", "0,0,0\n0,0,0\n0,0,0\n");
    let small = write("small.csv", "0,0\n1,0\n");

    let eval = |est: &Path, truth: &Path| metrics(&ok(&["evaluate", "--estimated", path(est), "--truth", path(truth)]));
    assert_eq!(eval(&chain, &chain), [1.0, 0.0, 1.0]);
    assert_eq!(eval(&empty, &chain)[0], 0.0);
    let [tpr, fdr, mcc] = eval(&reversed, &chain);
    assert_eq!((tpr, fdr), (0.0, 1.0));
    assert!((mcc + 0.5).abs() < 1e-12);

    let out = fling(&["evaluate", "--estimated", path(&small), "--truth", path(&chain)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension mismatch"));

    let csv = dir.path().join("m/metrics.csv");
    ok(&["evaluate", "--estimated", path(&chain), "--truth", path(&chain), "--seed", "11", "--out", path(&csv)]);
    assert_eq!(fs::read_to_string(&csv).unwrap(), "seed,p,d,n,TPR,FDR,MCC\n11,3,0,0,1.0,0.0,1.0\n");
}

#[test]
fn example1_demo_reports_pooled_and_group_slopes() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["demo", "example1", "--out", path(dir.path()), "--seed", "1"]);
    let text = fs::read_to_string(dir.path().join("example1_slopes.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    for direction in ["causal", "anti-causal"] {
        let n = rows.iter().filter(|r| r.split(',').nth(1) == Some(direction)).count();
        assert_eq!(n, 5, "{direction}");
    }
    assert!(rows[0].starts_with("pooled,causal,1000,"));
}

#[test]
fn example2_demo_certifies_or_explains() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["demo", "example2", "--out", path(dir.path())]);
    let cert: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("example2_certificate.json")).unwrap()).unwrap();
    assert!(cert["verdict"]["max_difference"].as_f64().unwrap() < 1e-10);
    assert!((cert["verdict"]["b_prime"].as_f64().unwrap() - 0.7).abs() < 1e-12);

    let out = fling(&["demo", "example2", "--out", path(dir.path()), "--tau1-prime", "2.0"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("infeasible") && err.contains("tau1' + sigma1'"), "{err}");
}

#[test]
fn export_rethresholds_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let (sim, out, exp) = (dir.path().join("sim"), dir.path().join("fit"), dir.path().join("exp"));
    simulate(&sim, 9, &[]);
    fit(&sim.join("dataset.csv"), &out, &[]);
    ok(&["export", "--summary", path(&out.join("summary.json")), "--out", path(&exp), "--threshold", "0.01", "--dataset", path(&sim.join("dataset.csv"))]);
    let ppi = read_matrix(&out.join("edge_ppi.csv"));
    let adj = read_matrix(&exp.join("adjacency.csv"));
    // Cycle repair may drop edges, never add them.
    for j in 0..3 {
        for l in 0..3 {
            assert!(adj[j][l] == 0.0 || ppi[j][l] >= 0.01);
        }
    }
    assert!(fs::read_to_string(exp.join("graph.dot")).unwrap().contains("\"X1\""));
    assert!(!fling(&["export", "--summary", path(&out.join("summary.json")), "--out", path(&exp), "--threshold", "1.5"]).status.success());
}

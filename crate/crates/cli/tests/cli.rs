use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gglink(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gglink"))
        .args(args)
        .current_dir(cwd)
        .env_remove("GGLINK_THREADS")
        .output()
        .expect("failed to launch gglink")
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = gglink(args, cwd);
    assert!(
        out.status.success(),
        "gglink {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_graph(dir: &Path, n: usize, m: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = BTreeSet::new();
    while edges.len() < m {
        let (u, v) = (rng.random_range(0..n), rng.random_range(0..n));
        if u != v {
            edges.insert((u, v));
        }
    }
    let mut text = String::from("src,dst\n");
    for (u, v) in edges {
        text.push_str(&format!("{u},{v}\n"));
    }
    fs::write(dir.join("edges.csv"), text).unwrap();
}

const FAST: &[&str] = &[
    "--epochs",
    "3",
    "--hidden-dim",
    "8",
    "--embedding-dim",
    "4",
    "-q",
];

#[test]
fn split_defaults_and_rerun() {
    let dir = tempfile::tempdir().unwrap();
    write_graph(dir.path(), 100, 400, 1);
    ok(
        &["split", "edges.csv", "--out", "a", "--seed", "5", "-q"],
        dir.path(),
    );
    ok(
        &["split", "edges.csv", "--out", "b", "--seed", "5", "-q"],
        dir.path(),
    );
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/meta.json")).unwrap()).unwrap();
    assert_eq!(meta["features"], "identity");
    assert_eq!(meta["counts"]["train"], 340);
    assert_eq!(meta["counts"]["val_pos"], 20);
    assert_eq!(meta["counts"]["test_pos"], 40);
    for name in [
        "meta.json",
        "train_edges.csv",
        "val_pos.csv",
        "val_neg.csv",
        "test_pos.csv",
        "test_neg.csv",
    ] {
        assert_eq!(
            fs::read(dir.path().join("a").join(name)).unwrap(),
            fs::read(dir.path().join("b").join(name)).unwrap(),
            "{name} differs"
        );
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "split");
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn train_eval_consistency_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    write_graph(dir.path(), 80, 320, 2);
    ok(&["split", "edges.csv", "--out", "split", "-q"], dir.path());
    let mut args = vec!["train", "split", "--out", "t1"];
    args.extend(FAST);
    ok(&args, dir.path());
    args[3] = "t2";
    ok(&args, dir.path());
    let r1 = fs::read(dir.path().join("t1/report.json")).unwrap();
    assert_eq!(r1, fs::read(dir.path().join("t2/report.json")).unwrap());
    assert_eq!(
        fs::read(dir.path().join("t1/checkpoint.json")).unwrap(),
        fs::read(dir.path().join("t2/checkpoint.json")).unwrap()
    );

    let out = ok(&["eval", "t1/checkpoint.json", "split"], dir.path());
    let eval: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let report: serde_json::Value = serde_json::from_slice(&r1).unwrap();
    assert_eq!(eval["auc"], report["test"]["auc"]);
    assert_eq!(eval["ap"], report["test"]["ap"]);
}

#[test]
fn config_precedence() {
    let dir = tempfile::tempdir().unwrap();
    write_graph(dir.path(), 60, 240, 3);
    ok(&["split", "edges.csv", "--out", "split", "-q"], dir.path());
    fs::write(
        dir.path().join("cfg.toml"),
        "learning_rate = 0.02\nmax_epochs = 2\nhidden_dim = 8\nembedding_dim = 4\n",
    )
    .unwrap();
    ok(
        &[
            "train", "split", "--out", "t", "--config", "cfg.toml", "--epochs", "3", "-q",
        ],
        dir.path(),
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("t/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["config"]["learning_rate"], 0.02);
    assert_eq!(report["config"]["max_epochs"], 3);
    assert_eq!(report["config"]["batch_size"], 128);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("t/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["config"]["max_epochs"], 3);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    write_graph(dir.path(), 60, 240, 4);
    fs::write(dir.path().join("bad.toml"), "learning_rat = 0.1\n").unwrap();
    fs::write(dir.path().join("broken.csv"), "0,1\n2,x\n").unwrap();
    fs::write(dir.path().join("tiny.csv"), "0,1\n1,2\n").unwrap();
    ok(&["split", "edges.csv", "--out", "split", "-q"], dir.path());

    let out = gglink(
        &["train", "split", "--out", "t", "--config", "bad.toml"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rat"));

    assert_eq!(
        gglink(&["split", "broken.csv", "--out", "x"], dir.path())
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        gglink(&["split", "tiny.csv", "--out", "x"], dir.path())
            .status
            .code(),
        Some(4)
    );
    assert_eq!(
        gglink(&["split", "missing.csv", "--out", "x"], dir.path())
            .status
            .code(),
        Some(5)
    );
    assert_eq!(
        gglink(&["eval", "missing.json", "split"], dir.path())
            .status
            .code(),
        Some(5)
    );
    assert_eq!(
        gglink(&["train", "split", "--out", "t", "--lr=-1"], dir.path())
            .status
            .code(),
        Some(4)
    );
}

#[test]
fn decoder_guards() {
    let dir = tempfile::tempdir().unwrap();
    write_graph(dir.path(), 60, 240, 5);
    ok(&["split", "edges.csv", "--out", "split", "-q"], dir.path());
    let mut args = vec!["train", "split", "--out", "g"];
    args.extend(FAST);
    ok(&args, dir.path());

    let out = gglink(
        &["eval", "g/checkpoint.json", "split", "--decoder", "sym"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(4));
    ok(
        &["eval", "g/checkpoint.json", "split", "--decoder", "gravity"],
        dir.path(),
    );

    let out = ok(
        &[
            "train",
            "split",
            "--out",
            "s",
            "--decoder",
            "sym",
            "--epochs",
            "1",
            "--hidden-dim",
            "4",
            "--embedding-dim",
            "4",
        ],
        dir.path(),
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("direction-blind"));
}

#[test]
fn crossval_outputs() {
    let dir = tempfile::tempdir().unwrap();
    write_graph(dir.path(), 80, 320, 6);
    let mut args = vec![
        "crossval",
        "edges.csv",
        "--folds",
        "2",
        "--seed",
        "7",
        "--out",
        "cv",
        "--dataset",
        "toy",
    ];
    args.extend(FAST);
    let out = ok(&args, dir.path());
    let line = String::from_utf8(out.stdout).unwrap();
    assert!(
        line.starts_with("AUC ") && line.contains(" ± ") && line.contains(", AP "),
        "{line}"
    );

    let exp: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("cv/experiment.json")).unwrap())
            .unwrap();
    assert_eq!(exp["fold_seeds"], serde_json::json!([7, 8]));
    assert_eq!(exp["folds"].as_array().unwrap().len(), 2);
    let csv = fs::read_to_string(dir.path().join("cv/properties.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "dataset,nodes,edges,features,model,auc_mean,auc_std,ap_mean,ap_std"
    );
    assert!(lines
        .next()
        .unwrap()
        .starts_with("toy,80,320,0,sage-gravity,"));
}

#[test]
fn remapped_ids() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::new();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let u = 1000 * rng.random_range(1..40u64);
        let v = 1000 * rng.random_range(1..40u64);
        if u != v {
            text.push_str(&format!("{u},{v}\n"));
        }
    }
    fs::write(dir.path().join("sparse.csv"), text).unwrap();
    ok(
        &["split", "sparse.csv", "--out", "split", "--remap-ids", "-q"],
        dir.path(),
    );
    let map = fs::read_to_string(dir.path().join("split/id_map.csv")).unwrap();
    let mut lines = map.lines();
    assert_eq!(lines.next().unwrap(), "original_id,dense_id");
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[1], "0");
    assert_eq!(first[0].parse::<u64>().unwrap() % 1000, 0);
}

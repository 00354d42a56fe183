use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn tiedheads(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tiedheads"))
        .args(args)
        .env_remove("TIEDHEADS_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_identity(dir: &Path, n: usize) -> String {
    let mut text = format!("EMB1 {n} {n}\n");
    for i in 0..n {
        let row: Vec<&str> = (0..n).map(|j| if i == j { "1" } else { "0" }).collect();
        text.push_str(&row.join(" "));
        text.push('\n');
    }
    let path = dir.join("identity.emb");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn score_identity_top1_is_the_query_column() {
    let tmp = TempDir::new().unwrap();
    let m = write_identity(tmp.path(), 4);
    let out = tmp.path().join("run");
    let o = tiedheads(&["score", "--matrix", &m, "--h", "1,0,0,0", "--topk", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1);
    assert_eq!(text.split('\t').next(), Some("0"));
    assert_eq!(fs::read_to_string(out.join("scores.tsv")).unwrap(), text);
    assert_eq!(manifest(&out)["exit_code"], 0);
}

#[test]
fn topk_is_clamped_to_vocabulary() {
    let tmp = TempDir::new().unwrap();
    let m = write_identity(tmp.path(), 3);
    let out = tmp.path().join("run");
    let o = tiedheads(&["score", "--matrix", &m, "--h", "0 0 1", "--topk", "10", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let ids: Vec<String> = stdout(&o).lines().map(|l| l.split('\t').next().unwrap().to_string()).collect();
    assert_eq!(ids, ["2", "0", "1"]);
}

#[test]
fn baseline_and_sqnorm_differ_on_scaled_column() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("w.emb");
    fs::write(&path, "EMB1 2 2\n2 0\n0 1\n").unwrap();
    let m = path.to_str().unwrap();
    let out = tmp.path().join("run");
    let run = |head: &str| {
        let o = tiedheads(&["score", "--matrix", m, "--h", "2,0", "--head", head, "--topk", "1", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
        stdout(&o)
    };
    assert_eq!(run("baseline"), "0\t4\n");
    assert_eq!(run("sqnorm-output"), "0\t1\n");
}

#[test]
fn unknown_suite_is_a_usage_error() {
    let o = tiedheads(&["verify", "--suite", "nonsense"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn malformed_matrix_exits_one_with_manifest() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("bad.emb");
    fs::write(&path, "EMB1 2 3\n1 0\n").unwrap();
    let out = tmp.path().join("run");
    let o = tiedheads(&["score", "--matrix", path.to_str().unwrap(), "--h", "1,0", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(manifest(&out)["exit_code"], 1);
}

#[test]
fn recover_finds_single_column() {
    let tmp = TempDir::new().unwrap();
    let m = write_identity(tmp.path(), 8);
    let out = tmp.path().join("run");
    let o = tiedheads(&["recover", "--matrix", &m, "--h", "0,0,0,0,0,1,0,0", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["support"], serde_json::json!([5]));
    assert!((v["alpha"]["5"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!(v["residual"].as_f64().unwrap() < 1e-12);
    assert!(out.join("recovery.json").exists());
}

#[test]
fn recover_guards() {
    let tmp = TempDir::new().unwrap();
    let m = write_identity(tmp.path(), 4);
    let out = tmp.path().join("run");
    let o = tiedheads(&["recover", "--matrix", &m, "--h", "1,0,0,0", "--max-support", "0", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(manifest(&out)["exit_code"], 1);

    let big = write_identity(tmp.path(), 25);
    let h = vec!["0"; 25].join(",");
    let o = tiedheads(&["recover", "--matrix", &big, "--h", &h, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn histogram_has_requested_rows_and_counts_every_column() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("w.emb");
    let mut text = String::from("EMB1 1 10\n");
    for i in 0..10 {
        text.push_str(&format!("{}\n", 1.0 + i as f64));
    }
    fs::write(&path, text).unwrap();
    let out = tmp.path().join("run");
    let o = tiedheads(&["histogram", "--matrix", path.to_str().unwrap(), "--bins", "4", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(out.join("histogram.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("bin_lower,bin_upper,count"));
    let counts: Vec<u64> = lines.map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(counts.len(), 4);
    assert_eq!(counts.iter().sum::<u64>(), 10);
}

#[test]
fn train_zero_steps_writes_artifacts_and_histogram_reads_checkpoint() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("train");
    let o = tiedheads(&[
        "train", "--head", "sqnorm-output", "--steps", "0", "--dim", "8", "--ffn-dim", "16", "--vocab", "10",
        "--seq-len", "4", "--batch-size", "2", "--eval-batches", "1", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("final accuracy"));
    let metrics = fs::read_to_string(out.join("metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 1);
    let m = manifest(&out);
    assert_eq!(m["params"]["head_kind"], "sqnorm-output");
    assert_eq!(m["params"]["label_smoothing"], 0.1);

    let hist = tmp.path().join("hist");
    let ckpt = out.join("checkpoint.txt");
    let o = tiedheads(&["histogram", "--matrix", ckpt.to_str().unwrap(), "--bins", "5", "--out", hist.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read_to_string(hist.join("histogram.csv")).unwrap().lines().count(), 6);
}

#[test]
fn train_rejects_tiny_vocabulary() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let o = tiedheads(&["train", "--vocab", "2", "--steps", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(manifest(&out)["exit_code"], 1);
}

#[test]
fn train_divergence_exits_three() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let o = tiedheads(&[
        "train", "--lr", "1e300", "--warmup", "1", "--steps", "3", "--dim", "8", "--ffn-dim", "16", "--vocab", "10",
        "--seq-len", "4", "--batch-size", "2", "--eval-batches", "1", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(manifest(&out)["exit_code"], 3);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let o = tiedheads(&[
            "train", "--task", "cipher", "--steps", "4", "--dim", "8", "--ffn-dim", "16", "--vocab", "10",
            "--seq-len", "4", "--batch-size", "2", "--eval-every", "2", "--eval-batches", "1", "--seed", "7",
            "--out", out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        (
            fs::read(out.join("metrics.jsonl")).unwrap(),
            fs::read(out.join("checkpoint.txt")).unwrap(),
        )
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn seed_is_read_from_environment() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let o = Command::new(env!("CARGO_BIN_EXE_tiedheads"))
        .args(["verify", "--suite", "gradcheck", "--out", out.to_str().unwrap()])
        .env("TIEDHEADS_SEED", "42")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(manifest(&out)["seed"], 42);
    assert!(fs::read_to_string(out.join("verify.tsv")).unwrap().lines().skip(1).all(|l| l.contains("\tPASS\t")));
}

#[test]
fn compare_writes_one_row_per_head() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let o = tiedheads(&[
        "compare", "--heads", "baseline,cosine", "--seeds", "2", "--steps", "2", "--dim", "8", "--ffn-dim", "16",
        "--vocab", "10", "--seq-len", "4", "--batch-size", "2", "--eval-batches", "1", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("comparison.json")).unwrap()).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
    assert_eq!(v["seeds"], serde_json::json!([1, 2]));
}

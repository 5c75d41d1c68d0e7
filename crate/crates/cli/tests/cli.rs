use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pirank::data::{read_letor_file, ParseOptions};

fn pirank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pirank"))
        .args(args)
        .env_remove("PIRANK_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = pirank(args);
    assert!(
        out.status.success(),
        "pirank {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

/// One document and one query feature, so the label is monotone in the
/// document feature and a linear scorer can rank perfectly.
fn easy_data(dir: &Path) {
    ok(&[
        "gen-synthetic",
        "--n",
        "60",
        "--list-size",
        "12",
        "--doc-features",
        "1",
        "--query-features",
        "1",
        "--split",
        "0.6,0.2,0.2",
        "--seed",
        "3",
        "--out-dir",
        p(dir),
    ]);
}

#[test]
fn synthetic_data_is_reproducible_and_parses() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&[
            "gen-synthetic",
            "--n",
            "25",
            "--list-size",
            "7",
            "--seed",
            "11",
            "--out-dir",
            p(out),
        ]);
    }
    for f in ["data.txt", "data.meta"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let groups = read_letor_file(a.join("data.txt"), &ParseOptions::default()).unwrap();
    assert_eq!(groups.len(), 25);
    assert!(groups.iter().all(|g| g.len() == 7 && g.num_features == 12));
}

#[test]
fn split_files_partition_the_queries() {
    let dir = tempfile::tempdir().unwrap();
    easy_data(dir.path());
    let count = |f: &str| {
        read_letor_file(dir.path().join(f), &ParseOptions::default())
            .unwrap()
            .len()
    };
    assert_eq!(count("train.txt") + count("valid.txt") + count("test.txt"), 60);
    assert_eq!(count("train.txt"), 36);
}

#[test]
fn equal_label_bounds_warn() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&[
        "gen-synthetic",
        "--n",
        "3",
        "--label-min",
        "2",
        "--label-max",
        "2",
        "--out-dir",
        p(dir.path()),
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning: label bounds are equal"));
}

#[test]
fn trained_linear_scorer_ranks_easy_data() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    easy_data(d);
    let run = d.join("run");
    ok(&[
        "train",
        "--train",
        p(&d.join("train.txt")),
        "--valid",
        p(&d.join("valid.txt")),
        "--hidden",
        "none",
        "--lr",
        "0.05",
        "--epochs",
        "30",
        "--batch-size",
        "4",
        "--seed",
        "1",
        "--out-dir",
        p(&run),
    ]);
    // this seed starts with the scorer pointing the wrong way
    let (header, epochs) = csv(&run.join("epochs.csv"));
    let col = header.iter().position(|h| h == "ndcg@10").unwrap();
    assert!(epochs[0][col].parse::<f64>().unwrap() < 0.6);
    let eval = d.join("eval");
    ok(&[
        "evaluate",
        "--model",
        p(&run.join("model.ckpt")),
        "--data",
        p(&d.join("test.txt")),
        "--out-dir",
        p(&eval),
    ]);
    let (_, rows) = csv(&eval.join("summary.csv"));
    let ndcg10: f64 = rows.iter().find(|r| r[0] == "ndcg@10").unwrap()[1].parse().unwrap();
    assert!(ndcg10 >= 0.9, "test ndcg@10 {ndcg10}");

    // summary means are the per-query means
    let (header, per_query) = csv(&eval.join("metrics.csv"));
    for (c, name) in header.iter().enumerate().skip(1) {
        let vals: Vec<f64> = per_query.iter().filter_map(|r| r[c].parse().ok()).collect();
        let row = rows.iter().find(|r| &r[0] == name).unwrap();
        assert_eq!(row[2], vals.len().to_string(), "{name}");
        if vals.is_empty() {
            // labels below 1 leave the reciprocal rank undefined
            assert_eq!(row[1], "");
            continue;
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let reported: f64 = row[1].parse().unwrap();
        assert!((mean - reported).abs() <= 1e-12, "{name}: {mean} vs {reported}");
    }
}

#[test]
fn zero_learning_rate_keeps_metrics_flat() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    easy_data(d);
    let run = d.join("run");
    ok(&[
        "train",
        "--train",
        p(&d.join("train.txt")),
        "--lr",
        "0",
        "--epochs",
        "4",
        "--out-dir",
        p(&run),
    ]);
    let (header, rows) = csv(&run.join("epochs.csv"));
    assert_eq!(header[..4], ["epoch", "step", "loss", "tau"]);
    assert_eq!(rows.len(), 5);
    for r in &rows {
        assert_eq!(r[4..], rows[0][4..], "metrics moved with lr 0");
    }
}

#[test]
fn tiny_temperature_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    easy_data(d);
    let out = pirank(&[
        "train",
        "--train",
        p(&d.join("train.txt")),
        "--tau",
        "0.001",
        "--depth",
        "1",
        "--lr",
        "1",
        "--epochs",
        "3",
        "--out-dir",
        p(&d.join("run")),
    ]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    let aborted = out.status.code() == Some(3) && stderr.contains("try a larger --tau");
    assert!(
        aborted || (out.status.success() && stderr.contains("warning")),
        "{stderr}"
    );
}

fn write_metrics(path: &Path, values: &[f64]) {
    let mut s = String::from("qid,ndcg@10,rp\n");
    for (q, v) in values.iter().enumerate() {
        s.push_str(&format!("q{q},{v},{}\n", 10.0 * v));
    }
    fs::write(path, s).unwrap();
}

#[test]
fn comparison_bolds_ties_and_not_clear_losers() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let base = [0.4, 0.55, 0.7, 0.62, 0.8, 0.33];
    write_metrics(&d.join("a.csv"), &base);
    write_metrics(&d.join("same.csv"), &base);
    write_metrics(&d.join("worse.csv"), &base.map(|v| v - 0.1));

    let self_cmp = d.join("self");
    ok(&[
        "evaluate",
        "--metrics",
        p(&d.join("a.csv")),
        "--compare",
        &format!("twin={}", p(&d.join("same.csv"))),
        "--out-dir",
        p(&self_cmp),
    ]);
    let (header, rows) = csv(&self_cmp.join("comparison.csv"));
    let bold = header.iter().position(|h| h == "bold").unwrap();
    assert!(rows.iter().all(|r| r[bold] == "true"));

    let shifted = d.join("shifted");
    ok(&[
        "evaluate",
        "--metrics",
        p(&d.join("a.csv")),
        "--compare",
        p(&d.join("worse.csv")),
        "--out-dir",
        p(&shifted),
    ]);
    let (_, rows) = csv(&shifted.join("comparison.csv"));
    let cell =
        |metric: &str, method: &str| rows.iter().find(|r| r[0] == metric && r[1] == method).unwrap()[bold].clone();
    assert_eq!(cell("ndcg@10", "model"), "true");
    assert_eq!(cell("ndcg@10", "worse"), "false");
    // rp is lower-is-better, so the shifted run wins there
    assert_eq!(cell("rp", "worse"), "true");
    assert_eq!(cell("rp", "model"), "false");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(pirank(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(
        pirank(&["train", "--train", "x", "--loss", "nope", "--out-dir", p(d)])
            .status
            .code(),
        Some(1)
    );
    let missing = pirank(&["train", "--train", p(&d.join("missing.txt")), "--out-dir", p(d)]);
    assert_eq!(missing.status.code(), Some(2));
    fs::write(d.join("bad.txt"), "1 qid:1 1:x\n").unwrap();
    assert_eq!(
        pirank(&["train", "--train", p(&d.join("bad.txt")), "--out-dir", p(d)])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(pirank(&["evaluate", "--out-dir", p(d)]).status.code(), Some(1));
    assert_eq!(pirank(&["--version"]).status.code(), Some(0));
}

#[test]
fn manifest_reruns_the_same_command() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&[
        "gen-synthetic",
        "--n",
        "9",
        "--list-size",
        "5",
        "--seed",
        "4",
        "--phi",
        "normal:0:2",
        "--out-dir",
        p(&a),
    ]);
    let manifest = a.join("manifest.txt");
    let text = fs::read_to_string(&manifest).unwrap();
    assert!(text.contains("seed = 4") && text.contains("phi = normal:0:2"), "{text}");
    ok(&["gen-synthetic", "--config", p(&manifest), "--out-dir", p(&b)]);
    assert_eq!(
        fs::read(a.join("data.txt")).unwrap(),
        fs::read(b.join("data.txt")).unwrap()
    );
}

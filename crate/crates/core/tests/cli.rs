use std::path::{Path, PathBuf};

use afnn::cli::{eval_summary_path, run};
use afnn::metrics::load_csv;
use serde_json::Value;

fn afnn(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut argv = vec!["afnn"];
    argv.extend_from_slice(args);
    let code = run(argv, &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn ok(args: &[&str]) -> String {
    let (code, out) = afnn(args);
    assert_eq!(code, 0, "afnn {args:?} failed: {out}");
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Every file under `root`, relative, sorted.
fn tree(root: &Path) -> Vec<PathBuf> {
    fn walk(dir: &Path, root: &Path, out: &mut Vec<PathBuf>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                walk(&path, root, out);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}

#[test]
fn usage_errors_exit_two_and_help_exits_zero() {
    assert_eq!(afnn(&["--help"]).0, 0);
    assert_eq!(afnn(&[]).0, 2);
    assert_eq!(afnn(&["frobnicate"]).0, 2);
    assert_eq!(afnn(&["gen-data", "--out", "/tmp/x", "--bogus"]).0, 2);
    assert_eq!(afnn(&["gradcheck", "--ops", "softplus"]).0, 2);
}

#[test]
fn gen_data_counts_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(&["gen-data", "--out", p(d), "--domains", "4", "--per-domain", "10", "--size", "32", "--seed", "3"]);
    }
    let files = tree(&a);
    assert_eq!(files, tree(&b));
    for f in &files {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f:?}");
    }
    let manifests: Vec<_> = files.iter().filter(|f| f.ends_with("manifest.json")).collect();
    assert_eq!(manifests.len(), 8);
    let mut total = 0;
    for m in manifests {
        let v: Value = serde_json::from_slice(&std::fs::read(a.join(m)).unwrap()).unwrap();
        total += v["entries"].as_array().unwrap().len();
    }
    assert_eq!(total, 40);
    assert_eq!(afnn(&["gen-data", "--out", p(&a), "--per-domain", "0"]).0, 2);
}

#[test]
fn train_eval_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = root.join("data");
    ok(&["gen-data", "--out", p(&data), "--per-domain", "8", "--size", "32"]);
    let before = tree(root);

    let ckpts: Vec<PathBuf> = ["a", "b"].iter().map(|n| root.join(format!("runs/{n}.afnn"))).collect();
    for c in &ckpts {
        let started = std::time::Instant::now();
        let out = ok(&["train", "--preset", "smoke", "--data", p(&data), "--unseen", "0", "--out", p(c)]);
        assert!(started.elapsed().as_secs() < 60);
        assert!(out.contains("trained"));
    }
    for suffix in ["", ".history.csv", ".summary.json"] {
        let read = |c: &PathBuf| std::fs::read(format!("{}{suffix}", c.display())).unwrap();
        assert_eq!(read(&ckpts[0]), read(&ckpts[1]), "{suffix}");
    }

    let csvs: Vec<PathBuf> = ["a", "b"].iter().map(|n| root.join(format!("metrics/{n}.csv"))).collect();
    for (c, csv) in ckpts.iter().zip(&csvs) {
        ok(&["eval", "--ckpt", p(c), "--data", p(&data), "--unseen", "0", "--out", p(csv), "--run-id", "smoke"]);
    }
    assert_eq!(std::fs::read(&csvs[0]).unwrap(), std::fs::read(&csvs[1]).unwrap());

    let records = load_csv(&csvs[0]).unwrap();
    let test_samples = 8 - (8.0f64 * 0.8).floor() as usize;
    assert_eq!(records.len(), 2 * test_samples);
    let summary: Value = serde_json::from_slice(&std::fs::read(eval_summary_path(&csvs[0])).unwrap()).unwrap();
    assert_eq!(summary["samples"], test_samples);
    for (key, label) in [("OD", "OD"), ("OC", "OC")] {
        let dscs: Vec<f64> = records.iter().filter(|r| r.structure.label() == label).map(|r| r.dsc).collect();
        let mean = dscs.iter().sum::<f64>() / dscs.len() as f64;
        let reported = summary["means"][key]["dsc"].as_f64().unwrap();
        assert!((reported - mean).abs() <= 1e-12, "{key}: {reported} vs {mean}");
    }

    let report = root.join("report.md");
    ok(&["report", "--in", p(&csvs[0]), "--out", p(&report)]);
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.contains("| smoke") && text.contains("OD Avg."));

    // Outputs land only where the flags pointed.
    let mut expected = before;
    for c in &ckpts {
        let rel = c.strip_prefix(root).unwrap().to_path_buf();
        expected.push(rel.clone());
        expected.push(PathBuf::from(format!("{}.history.csv", rel.display())));
        expected.push(PathBuf::from(format!("{}.summary.json", rel.display())));
    }
    for csv in &csvs {
        let rel = csv.strip_prefix(root).unwrap().to_path_buf();
        expected.push(PathBuf::from(format!("{}.summary.json", rel.display())));
        expected.push(rel);
    }
    expected.push(PathBuf::from("report.md"));
    expected.sort();
    assert_eq!(tree(root), expected);
}

#[test]
fn config_and_domain_mismatches_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = root.join("data");
    ok(&["gen-data", "--out", p(&data), "--per-domain", "8", "--size", "32"]);
    assert_eq!(afnn(&["train", "--preset", "smoke", "--data", p(&data), "--unseen", "7", "--out", p(&root.join("x"))]).0, 2);

    let ckpt = root.join("m.afnn");
    ok(&["train", "--preset", "smoke", "--data", p(&data), "--unseen", "1", "--out", p(&ckpt)]);
    let other = root.join("other.json");
    std::fs::write(&other, r#"{"seed": 99}"#).unwrap();
    let csv = p(&root.join("m.csv")).to_string();
    assert_eq!(afnn(&["eval", "--ckpt", p(&ckpt), "--data", p(&data), "--unseen", "1", "--out", &csv, "--config", p(&other)]).0, 2);
    assert_eq!(afnn(&["eval", "--ckpt", p(&ckpt), "--data", p(&data), "--unseen", "9", "--out", &csv]).0, 2);

    let bad = root.join("bad.json");
    std::fs::write(&bad, r#"{"batch_size": 4, "learning_rate": 1}"#).unwrap();
    assert_eq!(afnn(&["train", "--config", p(&bad), "--data", p(&data), "--unseen", "1", "--out", p(&root.join("y"))]).0, 2);
}

#[test]
fn gap_stats_identity_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["gen-data", "--out", p(&data), "--per-domain", "5", "--size", "32"]);
    let out = ok(&["gap-stats", "--data", p(&data), "--identity"]);
    let line = |name: &str| -> String {
        out.lines().find(|l| l.starts_with(name)).unwrap().split_whitespace().last().unwrap().to_string()
    };
    assert_eq!(line("raw gap"), line("adapted gap"));
    assert_eq!(line("ratio"), "1.0000");

    let hist = dir.path().join("hist");
    ok(&["gap-stats", "--data", p(&data), "--out", p(&hist), "--svg"]);
    for f in ["raw_histograms.csv", "adapted_histograms.csv", "raw_histograms.svg", "adapted_histograms.svg"] {
        assert!(hist.join(f).is_file(), "{f}");
    }
}

#[test]
fn gradcheck_single_op_passes() {
    let out = ok(&["gradcheck", "--ops", "conv2d", "--trials", "2"]);
    assert!(out.starts_with("ok"));
}

/// `| Method | OD D0 | ... |` table under `## <metric>` as header → cells.
fn table(report: &str, metric: &str) -> Vec<Vec<String>> {
    let start = report.find(&format!("## {metric} ")).unwrap();
    report[start..]
        .lines()
        .skip(2)
        .take_while(|l| l.starts_with('|'))
        .filter(|l| !l.starts_with("|-"))
        .map(|l| l.split('|').map(|c| c.trim().to_string()).filter(|c| !c.is_empty()).collect())
        .collect()
}

#[test]
fn report_reproduces_golden_means() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.md");
    ok(&["report", "--in", p(&fixture("golden_metrics.csv")), "--out", p(&out)]);
    let text = std::fs::read_to_string(&out).unwrap();
    let golden: Value = serde_json::from_slice(&std::fs::read(fixture("golden_metrics_means.json")).unwrap()).unwrap();
    for (metric, key, decimals) in [("DSC", "dsc", 4), ("HD", "hd", 3), ("ASD", "asd", 3)] {
        let rows = table(&text, metric);
        let header = &rows[0];
        for row in &rows[1..] {
            let method = &row[0];
            for (col, cell) in header.iter().zip(row).skip(1) {
                let (structure, column) = col.split_once(' ').unwrap();
                let want = golden[method][structure][key][column].as_f64().unwrap();
                assert_eq!(cell, &format!("{want:.decimals$}"), "{method} {metric} {col}");
            }
        }
    }
    assert!(text.contains("1 with an undefined distance"));
}

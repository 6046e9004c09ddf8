use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pln_graph::bench::sequencing_like_counts;
use pln_graph::pipeline::write_counts;

fn plngraph(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plngraph"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn counts_file(dir: &Path) {
    let (data, _) = sequencing_like_counts(80, 10, 11).unwrap();
    write_counts(&data, fs::File::create(dir.join("counts.csv")).unwrap()).unwrap();
}

#[test]
fn fit_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    counts_file(tmp.path());
    let out = plngraph(
        &["fit", "--input", "counts.csv", "--output-dir", "out", "--min-variance-quantile", "0", "--path-length", "10"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("out/report.json").exists());
    let rep = plngraph(&["report", "--dir", "out", "--top-k", "3"], tmp.path());
    assert!(rep.status.success());
    let text = String::from_utf8(rep.stdout).unwrap();
    assert_eq!(text.lines().count(), 2 + 3, "{text}");
}

#[test]
fn config_file_wins_over_flags() {
    let tmp = tempfile::tempdir().unwrap();
    counts_file(tmp.path());
    fs::write(
        tmp.path().join("run.toml"),
        "input = \"counts.csv\"\noutput_dir = \"cfg-out\"\n[preprocess]\nmin_variance_quantile = 0.0\n[path]\nlength = 8\n",
    )
    .unwrap();
    let out = plngraph(&["fit", "--config", "run.toml", "--output-dir", "flag-out"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert!(tmp.path().join("cfg-out/report.json").exists());
    assert!(!tmp.path().join("flag-out").exists());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.csv"), "id,a\ns1,-1\ns2,3\n").unwrap();
    let out = plngraph(&["fit", "--input", "bad.csv"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`s1`"));

    fs::write(tmp.path().join("bad.toml"), "no_such_key = 1\n").unwrap();
    let out = plngraph(&["fit", "--config", "bad.toml"], tmp.path());
    assert_eq!(out.status.code(), Some(4));

    let out = plngraph(&["fit"], tmp.path());
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn init_and_transform() {
    let tmp = tempfile::tempdir().unwrap();
    counts_file(tmp.path());
    let common = ["--input", "counts.csv", "--min-variance-quantile", "0"];
    let out = plngraph(&[&["init"][..], &common, &["--out", "est.json"]].concat(), tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = plngraph(&[&["transform"][..], &common, &["--estimate", "est.json", "--out", "z.csv"]].concat(), tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let fresh = plngraph(&[&["transform"][..], &common, &["--out", "z2.csv"]].concat(), tmp.path());
    assert!(fresh.status.success());
    let z = fs::read(tmp.path().join("z.csv")).unwrap();
    assert_eq!(z, fs::read(tmp.path().join("z2.csv")).unwrap());
    assert!(tmp.path().join("z.variance.csv").exists() && tmp.path().join("z.json").exists());
}

#[test]
fn bench_smoke_and_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["bench", "--network", "hub", "--replicates", "2", "--p", "20", "--n", "60", "--path-length", "10"];
    let a = plngraph(&[&args[..], &["--output-dir", "a"]].concat(), tmp.path());
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = plngraph(&[&args[..], &["--output-dir", "b"]].concat(), tmp.path());
    assert!(b.status.success());
    let roc = fs::read_to_string(tmp.path().join("a/roc.csv")).unwrap();
    assert!(roc.lines().skip(1).any(|l| l.starts_with("1,hub,")));
    assert!(!roc.lines().skip(1).any(|l| l.starts_with("2,")));
    for f in ["roc.csv", "auc_summary.csv", "bench.json"] {
        assert_eq!(fs::read(tmp.path().join("a").join(f)).unwrap(), fs::read(tmp.path().join("b").join(f)).unwrap());
    }
}

#[test]
fn bench_honors_random_edge_count() {
    let tmp = tempfile::tempdir().unwrap();
    let out = plngraph(
        &["bench", "--network", "random", "--edges", "204", "--p", "50", "--replicates", "1", "--methods", "LOG", "--path-length", "5", "--output-dir", "r"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rec: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("r/bench.json")).unwrap()).unwrap();
    assert_eq!(rec[0]["edges"][0], 204);
}

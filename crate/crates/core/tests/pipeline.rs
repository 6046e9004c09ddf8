use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use pln_graph::bench::sequencing_like_counts;
use pln_graph::pipeline::{files, ingest, run_fit, write_counts, InitializerKind, Orientation, PipelineConfig};

fn write_input(dir: &Path, n: usize, p: usize, seed: u64) -> std::path::PathBuf {
    let (data, _) = sequencing_like_counts(n, p, seed).unwrap();
    let path = dir.join("counts.csv");
    write_counts(&data, fs::File::create(&path).unwrap()).unwrap();
    path
}

fn config(input: &Path, out: &Path) -> PipelineConfig {
    let mut c = PipelineConfig {
        input: Some(input.to_path_buf()),
        output_dir: out.to_path_buf(),
        ..PipelineConfig::default()
    };
    c.preprocess.min_variance_quantile = 0.0;
    c.path.length = 12;
    c
}

/// Every output except the run-specific timings file.
fn outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != files::TIMINGS)
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn ingest_reads_what_write_counts_wrote() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, _) = sequencing_like_counts(30, 6, 2).unwrap();
    let path = tmp.path().join("c.csv");
    write_counts(&data, fs::File::create(&path).unwrap()).unwrap();
    assert_eq!(ingest(&path, Orientation::SamplesAsRows).unwrap(), data);
}

#[test]
fn fit_is_deterministic_and_consistent() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_input(tmp.path(), 120, 12, 3);
    let a = run_fit(&config(&input, &tmp.path().join("a"))).unwrap();
    let b = run_fit(&config(&input, &tmp.path().join("b"))).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.degree_sum(), 2 * a.edges.len());
    assert_eq!(a.degrees.len(), 12);
    let (mut oa, mut ob) = (outputs(&tmp.path().join("a")), outputs(&tmp.path().join("b")));
    // the manifest echoes the output directory
    assert_ne!(oa.remove(files::MANIFEST), ob.remove(files::MANIFEST));
    assert_eq!(oa, ob);
    let before = outputs(&tmp.path().join("a"));
    run_fit(&config(&input, &tmp.path().join("a"))).unwrap();
    assert_eq!(before, outputs(&tmp.path().join("a")));
    for name in [files::TRANSFORMED, files::COVARIANCE, files::EDGES, files::REPORT, files::PATH] {
        assert!(oa.contains_key(name), "{name} missing");
    }
    assert!(tmp.path().join("a").join(files::TIMINGS).exists());
}

#[test]
fn resuming_matches_the_uninterrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_input(tmp.path(), 100, 10, 4);
    let out = tmp.path().join("run");
    let mut cfg = config(&input, &out);
    let first = run_fit(&cfg).unwrap();
    let before = outputs(&out);
    cfg.resume = true;
    let second = run_fit(&cfg).unwrap();
    let timings: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join(files::TIMINGS)).unwrap()).unwrap();
    assert_eq!(timings["resumed_from_checkpoint"], true);
    assert!(timings["seconds"].get("transform").is_none());
    assert_eq!(first.edges, second.edges);
    let mut after = outputs(&out);
    // the config echo differs only in the resume switch
    after.remove(files::MANIFEST);
    let mut before = before;
    before.remove(files::MANIFEST);
    assert_eq!(before, after);
}

#[test]
fn stale_checkpoint_is_ignored() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_input(tmp.path(), 80, 8, 5);
    let out = tmp.path().join("run");
    run_fit(&config(&input, &out)).unwrap();
    let mut cfg = config(&input, &out);
    cfg.resume = true;
    cfg.initializer.kind = InitializerKind::Mirna;
    run_fit(&cfg).unwrap();
    let timings: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join(files::TIMINGS)).unwrap()).unwrap();
    assert_eq!(timings["resumed_from_checkpoint"], false);
}

#[test]
fn huge_penalty_gives_an_empty_network() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_input(tmp.path(), 60, 8, 6);
    let mut cfg = config(&input, &tmp.path().join("o"));
    cfg.path.lambdas = Some(vec![1e9]);
    let r = run_fit(&cfg).unwrap();
    assert!(r.edges.is_empty());
    assert!(r.degrees.iter().all(|d| d.degree == 0));
}

#[test]
fn trend_shrinkage_initializers_run() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_input(tmp.path(), 80, 15, 7);
    let mut cfg = config(&input, &tmp.path().join("fixed"));
    cfg.initializer.kind = InitializerKind::Mirna;
    cfg.initializer.gamma = 0.5;
    run_fit(&cfg).unwrap();
    cfg.output_dir = tmp.path().join("eb");
    cfg.initializer.empirical_bayes = true;
    cfg.initializer.bootstrap_reps = 60;
    run_fit(&cfg).unwrap();
}

#[test]
fn default_preprocessing_drops_three_quarters() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_input(tmp.path(), 60, 40, 8);
    let mut cfg = config(&input, &tmp.path().join("o"));
    cfg.preprocess.min_variance_quantile = 0.75;
    let r = run_fit(&cfg).unwrap();
    assert_eq!(r.degrees.len(), 10);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("o").join(files::PREPROCESS_MANIFEST)).unwrap()).unwrap();
    assert_eq!(manifest["dropped"].as_array().unwrap().len(), 30);
    assert_eq!(manifest["size_factors"].as_array().unwrap().len(), 60);
}

#[test]
fn errors_carry_stage_and_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("bad.csv");
    fs::write(&input, "id,a,b\ns1,1,2\ns2,x,4\n").unwrap();
    let e = run_fit(&config(&input, &tmp.path().join("o"))).unwrap_err();
    assert!(e.to_string().starts_with("ingest:"), "{e}");
    assert_eq!(e.exit_code(), 2);

    let zero = tmp.path().join("zero.csv");
    fs::write(&zero, "id,a,b\ns1,0,2\ns2,0,4\ns3,0,1\n").unwrap();
    let e = run_fit(&config(&zero, &tmp.path().join("z"))).unwrap_err();
    assert!(e.to_string().starts_with("initialize:"), "{e}");
    assert_eq!(e.exit_code(), 2);
}

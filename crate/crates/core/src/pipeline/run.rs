use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{sha256_hex, InitializerKind, PipelineConfig};
use super::io::{ingest, read_real_matrix, write_counts};
use super::preprocess::{preprocess, Preprocessed};
use super::report::{NetworkReport, RunMetadata};
use crate::bench::{run_benchmark, write_summary_csv, write_tidy_csv, BenchConfig, BenchResult, NetworkKind};
use crate::error::{Error, Result};
use crate::glasso::{ebic_select, fit_path, lambda_grid};
use crate::init::{eb_gamma, fit_trend, mirna_shrink_init, mirna_shrink_init_per_variable, moment_init, InitialEstimate};
use crate::model::CountMatrix;
use crate::posterior::{transform_matrix, write_labeled_matrix, TransformSidecar, TransformedMatrix};

/// File names inside the output directory.
pub mod files {
    pub const PREPROCESSED: &str = "preprocessed_counts.csv";
    pub const DEPTH_ADJUSTED: &str = "depth_adjusted.csv";
    pub const PREPROCESS_MANIFEST: &str = "preprocess.json";
    pub const ESTIMATE: &str = "initial_estimate.json";
    pub const TRANSFORMED: &str = "transformed.csv";
    pub const POSTERIOR_VARIANCE: &str = "posterior_variance.csv";
    pub const TRANSFORM_SIDECAR: &str = "transformed.json";
    pub const CHECKPOINT: &str = "checkpoint.json";
    pub const COVARIANCE: &str = "covariance.csv";
    pub const PATH: &str = "path.csv";
    pub const EDGES: &str = "edges.tsv";
    pub const REPORT: &str = "report.json";
    pub const MANIFEST: &str = "manifest.json";
    pub const TIMINGS: &str = "timings.json";
    pub const ROC: &str = "roc.csv";
    pub const AUC_SUMMARY: &str = "auc_summary.csv";
    pub const BENCH: &str = "bench.json";
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        location: path.display().to_string(),
        message: e.to_string(),
    })
}

#[derive(Default)]
struct Timer {
    stages: BTreeMap<String, f64>,
}

impl Timer {
    fn time<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| e.at_stage(stage));
        *self.stages.entry(stage.to_string()).or_default() += start.elapsed().as_secs_f64();
        out
    }
}

/// Starting estimate chosen by the configuration, with any flags it raised.
pub fn initial_estimate(data: &CountMatrix, config: &PipelineConfig) -> Result<(InitialEstimate, Vec<String>)> {
    let init = &config.initializer;
    let mut flags = Vec::new();
    let est = match init.kind {
        InitializerKind::Moment => moment_init(data)?,
        InitializerKind::Mirna => {
            let trend = fit_trend(data)?;
            if init.empirical_bayes {
                let eb = eb_gamma(data, &trend, init.bootstrap_reps, config.seed)?;
                flags.extend(
                    eb.flagged
                        .iter()
                        .map(|v| format!("`{v}`: degenerate bootstrap, default shrinkage weight used")),
                );
                mirna_shrink_init_per_variable(data, &trend, &eb.gamma)?
            } else {
                mirna_shrink_init(data, &trend, init.gamma)?
            }
        }
    };
    flags.extend(est.flags.iter().map(|f| format!("`{}`: {}", f.variable, f.reason)));
    Ok((est, flags))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Checkpoint {
    upstream_hash: String,
}

/// Hash of everything the transformed matrix depends on.
fn upstream_hash(input_bytes: &[u8], config: &PipelineConfig) -> String {
    let key = serde_json::json!({
        "input": sha256_hex(input_bytes),
        "orientation": config.orientation,
        "preprocess": config.preprocess,
        "initializer": config.initializer,
        "large_count_threshold": config.transform.large_count_threshold,
        "rel_tol": config.transform.rel_tol,
        "seed": config.seed,
    });
    sha256_hex(key.to_string().as_bytes())
}

fn load_checkpoint(dir: &Path, data: &CountMatrix, hash: &str) -> Result<Option<TransformedMatrix>> {
    let cp_path = dir.join(files::CHECKPOINT);
    if !cp_path.exists() {
        return Ok(None);
    }
    let cp: Checkpoint = read_json(&cp_path)?;
    if cp.upstream_hash != hash {
        return Ok(None);
    }
    let sidecar: TransformSidecar = read_json(&dir.join(files::TRANSFORM_SIDECAR))?;
    let values = read_real_matrix(&dir.join(files::TRANSFORMED))?;
    let var = read_real_matrix(&dir.join(files::POSTERIOR_VARIANCE))?;
    if values.col_names != data.variable_names() || values.row_ids != data.sample_ids() {
        return Err(Error::InvalidInput("checkpoint labels do not match the data".into()));
    }
    TransformedMatrix::from_parts(
        values.values,
        var.values,
        data,
        sidecar.estimate,
        sidecar.large_count_threshold,
        sidecar.rel_tol,
    )
    .map(Some)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct RunManifest<'a> {
    package: &'static str,
    version: &'static str,
    config: &'a PipelineConfig,
    config_hash: String,
    seed: u64,
    input_sha256: String,
    flags: &'a [String],
    notes: Vec<&'static str>,
    files: Vec<&'static str>,
}

const NOTES: [&str; 3] = [
    "min_variance_quantile and depth adjustment method are configuration choices, not reproductions of a published preprocessing",
    "size factors: median of ratios to per-variable geometric means over variables positive in every sample",
    "timings and checkpoint reuse are recorded in timings.json so that all other outputs are reproducible byte for byte",
];

/// Ingest, preprocess, initialize, transform, fit the penalty path, select by
/// eBIC and write every intermediate to `config.output_dir`.
pub fn run_fit(config: &PipelineConfig) -> Result<NetworkReport> {
    config.validate()?;
    let input = config
        .input
        .as_ref()
        .ok_or_else(|| Error::Config("no input file given".into()))?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut timer = Timer::default();

    let input_bytes = fs::read(input).map_err(|e| Error::io(input, e).at_stage("ingest"))?;
    let raw = timer.time("ingest", || ingest(input, config.orientation))?;
    let Preprocessed { data, adjusted, manifest: pre } =
        timer.time("preprocess", || preprocess(&raw, &config.preprocess))?;
    timer.time("write", || {
        write_counts(&data, create(&dir.join(files::PREPROCESSED))?)?;
        if let Some(adj) = &adjusted {
            write_labeled_matrix(create(&dir.join(files::DEPTH_ADJUSTED))?, data.sample_ids(), data.variable_names(), adj)?;
        }
        write_json(&dir.join(files::PREPROCESS_MANIFEST), &pre)
    })?;
    let mut flags = pre.flags.clone();

    let hash = upstream_hash(&input_bytes, config);
    let resumed = if config.resume {
        timer.time("resume", || load_checkpoint(dir, &data, &hash))?
    } else {
        None
    };
    let resumed_from_checkpoint = resumed.is_some();
    let transformed = match resumed {
        Some(t) => {
            let (_, init_flags) = timer.time("initialize", || initial_estimate(&data, config))?;
            flags.extend(init_flags);
            t
        }
        None => {
            let (est, init_flags) = timer.time("initialize", || initial_estimate(&data, config))?;
            flags.extend(init_flags);
            timer.time("transform", || {
                transform_matrix(&data, &est, config.transform.large_count_threshold, config.transform.rel_tol)
            })?
        }
    };
    timer.time("write", || {
        write_json(&dir.join(files::ESTIMATE), &transformed.estimate)?;
        transformed.write_csv(create(&dir.join(files::TRANSFORMED))?)?;
        transformed.write_variance_csv(create(&dir.join(files::POSTERIOR_VARIANCE))?)?;
        write_json(&dir.join(files::TRANSFORM_SIDECAR), &transformed.sidecar())?;
        write_json(&dir.join(files::CHECKPOINT), &Checkpoint { upstream_hash: hash.clone() })
    })?;

    let cov = timer.time("covariance", || transformed.covariance(config.transform.covariance))?;
    let names = data.variable_names();
    timer.time("write", || write_labeled_matrix(create(&dir.join(files::COVARIANCE))?, names, names, cov.s()))?;

    let lambdas = match &config.path.lambdas {
        Some(l) => {
            let mut l = l.clone();
            l.sort_by(|a, b| b.total_cmp(a));
            l.dedup();
            l
        }
        None => {
            let grid = timer.time("path", || lambda_grid(&cov, config.path.length, config.path.ratio))?;
            if grid.degenerate {
                flags.push("no off-diagonal signal; path reduced to a single penalty".into());
            }
            grid.lambdas
        }
    };
    let path = timer.time("path", || fit_path(&cov, &lambdas, config.path.tol))?;
    for f in &path.failures {
        flags.push(format!("penalty {} not fitted: {}", f.lambda, f.message));
    }
    let (n, p) = (data.n_samples(), data.n_variables());
    let selection = timer.time("select", || ebic_select(&path, config.ebic_gamma, n, p))?;

    timer.time("write", || {
        let mut w = csv::Writer::from_writer(create(&dir.join(files::PATH))?);
        let err = |e: csv::Error| Error::InvalidInput(format!("writing path table: {e}"));
        w.write_record(["lambda_index", "lambda", "edges", "objective", "ebic"]).map_err(err)?;
        for (k, est) in path.estimates.iter().enumerate() {
            w.write_record([
                k.to_string(),
                est.lambda.to_string(),
                est.edge_count().to_string(),
                est.objective.to_string(),
                selection.scores[k].to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(dir.join(files::PATH), e))?;
        selection.estimate.write_edge_tsv(names, create(&dir.join(files::EDGES))?)
    })?;

    let metadata = RunMetadata {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config.hash(),
        seed: config.seed,
        flags: flags.clone(),
        timings_file: Some(files::TIMINGS.to_string()),
    };
    let report = NetworkReport::build(
        &selection.estimate,
        names,
        selection.index,
        Some(selection.scores[selection.index]),
        n,
        config.top_k,
        metadata,
    );
    report.check_consistent().map_err(|e| e.at_stage("report"))?;
    timer.time("write", || {
        write_json(&dir.join(files::REPORT), &report)?;
        write_json(
            &dir.join(files::MANIFEST),
            &RunManifest {
                package: env!("CARGO_PKG_NAME"),
                version: env!("CARGO_PKG_VERSION"),
                config,
                config_hash: config.hash(),
                seed: config.seed,
                input_sha256: sha256_hex(&input_bytes),
                flags: &flags,
                notes: NOTES.to_vec(),
                files: vec![
                    files::PREPROCESSED,
                    files::PREPROCESS_MANIFEST,
                    files::ESTIMATE,
                    files::TRANSFORMED,
                    files::POSTERIOR_VARIANCE,
                    files::TRANSFORM_SIDECAR,
                    files::COVARIANCE,
                    files::PATH,
                    files::EDGES,
                    files::REPORT,
                ],
            },
        )
    })?;
    write_json(
        &dir.join(files::TIMINGS),
        &serde_json::json!({
            "seconds": timer.stages,
            "resumed_from_checkpoint": resumed_from_checkpoint,
        }),
    )?;
    Ok(report)
}

/// Ingest and preprocess as configured, then write the starting estimate.
pub fn run_init(config: &PipelineConfig, out: &Path) -> Result<InitialEstimate> {
    let data = load_preprocessed(config)?;
    let (est, _) = initial_estimate(&data, config).map_err(|e| e.at_stage("initialize"))?;
    write_json(out, &est)?;
    Ok(est)
}

/// Transform with a stored estimate (or a fresh one) and write the CSVs and sidecar.
pub fn run_transform(config: &PipelineConfig, estimate: Option<&Path>, out: &Path) -> Result<TransformedMatrix> {
    let data = load_preprocessed(config)?;
    let est = match estimate {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            InitialEstimate::from_json(&text)?
        }
        None => initial_estimate(&data, config).map_err(|e| e.at_stage("initialize"))?.0,
    };
    let t = transform_matrix(&data, &est, config.transform.large_count_threshold, config.transform.rel_tol)
        .map_err(|e| e.at_stage("transform"))?;
    t.write_csv(create(out)?)?;
    let stem = out.with_extension("");
    t.write_variance_csv(create(&PathBuf::from(format!("{}.variance.csv", stem.display())))?)?;
    write_json(&out.with_extension("json"), &t.sidecar())?;
    Ok(t)
}

fn load_preprocessed(config: &PipelineConfig) -> Result<CountMatrix> {
    config.validate()?;
    let input = config
        .input
        .as_ref()
        .ok_or_else(|| Error::Config("no input file given".into()))?;
    let raw = ingest(input, config.orientation).map_err(|e| e.at_stage("ingest"))?;
    Ok(preprocess(&raw, &config.preprocess).map_err(|e| e.at_stage("preprocess"))?.data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchRunConfig {
    pub networks: Vec<NetworkKind>,
    pub bench: BenchConfig,
    pub output_dir: PathBuf,
}

impl Default for BenchRunConfig {
    fn default() -> Self {
        Self {
            networks: NetworkKind::ALL.to_vec(),
            bench: BenchConfig::default(),
            output_dir: PathBuf::from("plngraph-bench"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct BenchRecord<'a> {
    network: NetworkKind,
    config: &'a BenchConfig,
    summary: &'a [crate::bench::MethodSummary],
    failures: &'a [crate::bench::ReplicateFailure],
    edges: Vec<usize>,
    boxcox_variance_correlation: Vec<Option<f64>>,
    diagonal_inflation: Vec<f64>,
}

/// One benchmark per network kind; writes the ROC table, the AUC summary
/// and a JSON record.
pub fn run_bench(config: &BenchRunConfig) -> Result<Vec<BenchResult>> {
    if config.networks.is_empty() {
        return Err(Error::Config("no network kinds selected".into()));
    }
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let results = config
        .networks
        .iter()
        .map(|&network| {
            let cfg = BenchConfig {
                network,
                ..config.bench.clone()
            };
            run_benchmark(&cfg).map_err(|e| e.at_stage("bench"))
        })
        .collect::<Result<Vec<_>>>()?;
    write_tidy_csv(&results, create(&dir.join(files::ROC))?)?;
    write_summary_csv(&results, create(&dir.join(files::AUC_SUMMARY))?)?;
    let records: Vec<BenchRecord> = results
        .iter()
        .map(|r| BenchRecord {
            network: r.config.network,
            config: &r.config,
            summary: &r.summary,
            failures: &r.failures,
            edges: r.replicates.iter().map(|x| x.edges).collect(),
            boxcox_variance_correlation: r.replicates.iter().map(|x| x.boxcox_variance_correlation).collect(),
            diagonal_inflation: r.replicates.iter().map(|x| x.diagonal_inflation).collect(),
        })
        .collect();
    write_json(&dir.join(files::BENCH), &records)?;
    Ok(results)
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pln_graph::bench::{Method, NetworkKind};
use pln_graph::pipeline::{self, merge_settings, BenchRunConfig, NetworkReport, PipelineConfig};
use pln_graph::{Error, Result};
use toml::Value;

#[derive(Parser)]
#[command(name = "plngraph", version, about = "Poisson log-normal graphical models for count data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a network to a count matrix and write the report and intermediates.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// gLASSO input: expected_scatter or empirical.
        #[arg(long)]
        covariance: Option<String>,
        #[arg(long)]
        path_length: Option<i64>,
        #[arg(long)]
        path_ratio: Option<f64>,
        #[arg(long)]
        glasso_tol: Option<f64>,
        /// Explicit penalty; repeat for several.
        #[arg(long = "lambda")]
        lambdas: Vec<f64>,
        #[arg(long)]
        ebic_gamma: Option<f64>,
        #[arg(long)]
        top_k: Option<i64>,
        /// Reuse the transformed matrix in the output directory when it matches.
        #[arg(long)]
        resume: bool,
    },
    /// Write the starting estimate as JSON.
    Init {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "initial_estimate.json")]
        out: PathBuf,
    },
    /// Write the posterior-mean transformed matrix.
    Transform {
        #[command(flatten)]
        data: DataArgs,
        /// Starting estimate from `init`; computed afresh when absent.
        #[arg(long)]
        estimate: Option<PathBuf>,
        #[arg(long, default_value = "transformed.csv")]
        out: PathBuf,
    },
    /// Run the simulation benchmark.
    Bench(BenchArgs),
    /// Show the most connected variables of a finished fit.
    Report {
        /// Output directory of `fit`, or a report JSON file.
        #[arg(long, default_value = "plngraph-out")]
        dir: PathBuf,
        #[arg(long)]
        top_k: Option<usize>,
        /// Print the full report as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    /// TOML config file; its values win over conflicting flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// samples_as_rows or variables_as_rows.
    #[arg(long)]
    orientation: Option<String>,
    #[arg(long)]
    min_variance_quantile: Option<f64>,
    #[arg(long)]
    no_depth_adjust: bool,
    /// moment or mirna.
    #[arg(long)]
    initializer: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    empirical_bayes: bool,
    #[arg(long)]
    bootstrap_reps: Option<i64>,
    #[arg(long)]
    large_count_threshold: Option<i64>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    seed: Option<i64>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// hub, scale_free or random; repeat for several (default all).
    #[arg(long = "network")]
    networks: Vec<String>,
    #[arg(long)]
    replicates: Option<i64>,
    #[arg(long)]
    p: Option<i64>,
    #[arg(long)]
    n: Option<i64>,
    #[arg(long)]
    hubs: Option<i64>,
    /// Edge count for random networks.
    #[arg(long)]
    edges: Option<i64>,
    #[arg(long)]
    edge_weight: Option<f64>,
    #[arg(long)]
    diagonal: Option<f64>,
    /// Comma-separated subset of ORIG,LOG,BOX,ONESTEP,MODSTEP.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    #[arg(long)]
    path_length: Option<i64>,
    #[arg(long)]
    covariance: Option<String>,
    #[arg(long)]
    fixed_graph: bool,
    #[arg(long)]
    seed: Option<i64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

type Flags = Vec<(String, Value)>;

fn push<T: Into<Value>>(flags: &mut Flags, key: &str, value: Option<T>) {
    if let Some(v) = value {
        flags.push((key.to_string(), v.into()));
    }
}

fn path_value(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn data_flags(d: &DataArgs) -> Flags {
    let mut f = Flags::new();
    push(&mut f, "input", path_value(&d.input));
    push(&mut f, "orientation", d.orientation.clone());
    push(&mut f, "preprocess.min_variance_quantile", d.min_variance_quantile);
    push(&mut f, "preprocess.depth_adjust", d.no_depth_adjust.then_some(false));
    push(&mut f, "initializer.kind", d.initializer.clone());
    push(&mut f, "initializer.gamma", d.gamma);
    push(&mut f, "initializer.empirical_bayes", d.empirical_bayes.then_some(true));
    push(&mut f, "initializer.bootstrap_reps", d.bootstrap_reps);
    push(&mut f, "transform.large_count_threshold", d.large_count_threshold);
    push(&mut f, "transform.rel_tol", d.rel_tol);
    push(&mut f, "seed", d.seed);
    f
}

fn read_config(path: &Option<PathBuf>) -> Result<Option<String>> {
    path.as_ref()
        .map(|p| std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display()))))
        .transpose()
}

fn settings<T: serde::de::DeserializeOwned>(config: &Option<PathBuf>, flags: &Flags) -> Result<T> {
    let file = read_config(config)?;
    let (settings, warnings) = merge_settings(file.as_deref(), flags)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    Ok(settings)
}

fn load_report(dir: &Path) -> Result<NetworkReport> {
    let path = if dir.is_dir() { dir.join(pipeline::files::REPORT) } else { dir.to_path_buf() };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    NetworkReport::from_json(&text)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit {
            data,
            output_dir,
            covariance,
            path_length,
            path_ratio,
            glasso_tol,
            lambdas,
            ebic_gamma,
            top_k,
            resume,
        } => {
            let mut f = data_flags(&data);
            push(&mut f, "output_dir", path_value(&output_dir));
            push(&mut f, "transform.covariance", covariance);
            push(&mut f, "path.length", path_length);
            push(&mut f, "path.ratio", path_ratio);
            push(&mut f, "path.tol", glasso_tol);
            push(&mut f, "path.lambdas", (!lambdas.is_empty()).then(|| Value::Array(lambdas.into_iter().map(Value::Float).collect())));
            push(&mut f, "ebic_gamma", ebic_gamma);
            push(&mut f, "top_k", top_k);
            push(&mut f, "resume", resume.then_some(true));
            let config: PipelineConfig = settings(&data.config, &f)?;
            let report = pipeline::run_fit(&config)?;
            print!("{}", report.top_table());
            println!("outputs in {}", config.output_dir.display());
        }
        Command::Init { data, out } => {
            let config: PipelineConfig = settings(&data.config, &data_flags(&data))?;
            let est = pipeline::run_init(&config, &out)?;
            println!("starting estimate for {} variables written to {}", est.len(), out.display());
        }
        Command::Transform { data, estimate, out } => {
            let config: PipelineConfig = settings(&data.config, &data_flags(&data))?;
            let t = pipeline::run_transform(&config, estimate.as_deref(), &out)?;
            let counts = t.method_counts();
            println!(
                "{} x {} matrix written to {} ({} quadrature cells, {} mode cells)",
                t.n_samples(),
                t.n_variables(),
                out.display(),
                counts.mean_quadrature,
                counts.mode_newton
            );
        }
        Command::Bench(b) => {
            let mut f = Flags::new();
            if !b.networks.is_empty() {
                let kinds = b
                    .networks
                    .iter()
                    .map(|s| s.parse::<NetworkKind>().map(|k| Value::String(k.name().into())))
                    .collect::<Result<Vec<_>>>()?;
                f.push(("networks".into(), Value::Array(kinds)));
            }
            if !b.methods.is_empty() {
                let methods = b
                    .methods
                    .iter()
                    .map(|s| s.parse::<Method>().map(|m| Value::String(m.name().into())))
                    .collect::<Result<Vec<_>>>()?;
                f.push(("bench.methods".into(), Value::Array(methods)));
            }
            push(&mut f, "bench.replicates", b.replicates);
            push(&mut f, "bench.p", b.p);
            push(&mut f, "bench.n", b.n);
            push(&mut f, "bench.n_hubs", b.hubs);
            push(&mut f, "bench.n_edges", b.edges);
            push(&mut f, "bench.edge_weight", b.edge_weight);
            push(&mut f, "bench.diagonal", b.diagonal);
            push(&mut f, "bench.path_length", b.path_length);
            push(&mut f, "bench.transform.covariance", b.covariance);
            push(&mut f, "bench.fixed_graph", b.fixed_graph.then_some(true));
            push(&mut f, "bench.seed", b.seed);
            push(&mut f, "output_dir", path_value(&b.output_dir));
            let config: BenchRunConfig = settings(&b.config, &f)?;
            for res in pipeline::run_bench(&config)? {
                for s in &res.summary {
                    println!("{:<10} {:<8} mean AUC {:.4} (sd {:.4})", res.config.network, s.method, s.mean_auc, s.sd_auc);
                }
                if !res.failures.is_empty() {
                    eprintln!("warning: {} {} replicates failed", res.failures.len(), res.config.network);
                }
            }
            println!("outputs in {}", config.output_dir.display());
        }
        Command::Report { dir, top_k, json } => {
            let mut report = load_report(&dir)?;
            if let Some(k) = top_k {
                report = report.with_top_k(k);
            }
            if json {
                println!("{}", report.to_json());
            } else {
                print!("{}", report.top_table());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

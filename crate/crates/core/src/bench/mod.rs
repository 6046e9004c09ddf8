//! Simulation study: random graphs, latent precision matrices, sampled
//! counts, competing transformations, and structure recovery scored by ROC.

pub mod boxcox;
pub mod graphs;
pub mod roc;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glasso::{fit_path, lambda_grid, CovarianceInput, DEFAULT_PATH_LENGTH, DEFAULT_PATH_RATIO, DEFAULT_TOL};
use crate::init::{moment_init, EstimateOrigin, InitialEstimate};
use crate::model::{column_mean_var, sample_pln, CountMatrix, PlnParams};
use crate::posterior::{transform_matrix, CovarianceKind, DEFAULT_LARGE_COUNT_THRESHOLD, DEFAULT_REL_TOL};
use crate::rng::{derive_seed, rng_from_seed};

pub use boxcox::{fit_boxcox, BoxCoxFit};
pub use graphs::{gen_hub, gen_random, gen_scale_free, graph_to_precision, GraphStructure, NetworkKind};
pub use roc::{score_roc, RocCurve, RocPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Orig,
    Log,
    Box,
    Onestep,
    Modstep,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Orig, Method::Log, Method::Box, Method::Onestep, Method::Modstep];

    pub fn name(self) -> &'static str {
        match self {
            Method::Orig => "ORIG",
            Method::Log => "LOG",
            Method::Box => "BOX",
            Method::Onestep => "ONESTEP",
            Method::Modstep => "MODSTEP",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ORIG" => Ok(Method::Orig),
            "LOG" => Ok(Method::Log),
            "BOX" => Ok(Method::Box),
            "ONESTEP" | "1STEP" => Ok(Method::Onestep),
            "MODSTEP" => Ok(Method::Modstep),
            other => Err(Error::InvalidParameter(format!("unknown method `{other}`"))),
        }
    }
}

/// Transformed data for one method; Box-Cox fits are kept for BOX.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutput {
    pub values: DMatrix<f64>,
    pub covariance: CovarianceInput,
    pub boxcox: Option<Vec<BoxCoxFit>>,
}

/// Options for the two posterior-transform methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformSettings {
    pub covariance: CovarianceKind,
    pub large_count_threshold: u64,
    pub rel_tol: f64,
}

impl Default for TransformSettings {
    fn default() -> Self {
        Self {
            covariance: CovarianceKind::default(),
            large_count_threshold: DEFAULT_LARGE_COUNT_THRESHOLD,
            rel_tol: DEFAULT_REL_TOL,
        }
    }
}

/// Apply `method` and form the gLASSO input. MODSTEP starts from the true
/// latent means and marginal variances in `truth`.
pub fn apply_method(
    data: &CountMatrix,
    method: Method,
    truth: Option<&PlnParams>,
    settings: &TransformSettings,
) -> Result<MethodOutput> {
    let counts = data.to_f64();
    let plain = |values: DMatrix<f64>, boxcox| -> Result<MethodOutput> {
        let covariance = CovarianceInput::from_data(&values)?;
        Ok(MethodOutput { values, covariance, boxcox })
    };
    match method {
        Method::Orig => plain(counts, None),
        Method::Log => plain(counts.map(f64::ln_1p), None),
        Method::Box => {
            let fits: Vec<BoxCoxFit> = (0..data.n_variables()).map(|i| fit_boxcox(data.column(i))).collect();
            let values = DMatrix::from_fn(data.n_samples(), data.n_variables(), |j, i| {
                boxcox::boxcox(counts[(j, i)] + 1.0, fits[i].lambda)
            });
            plain(values, Some(fits))
        }
        Method::Onestep | Method::Modstep => {
            let est = if method == Method::Onestep {
                moment_init(data)?
            } else {
                let truth = truth.ok_or_else(|| {
                    Error::InvalidParameter("MODSTEP needs the generating parameters".into())
                })?;
                if truth.dim() != data.n_variables() {
                    return Err(Error::InvalidParameter(format!(
                        "truth has {} variables, data has {}",
                        truth.dim(),
                        data.n_variables()
                    )));
                }
                let sigma = truth.covariance();
                InitialEstimate::new(
                    data.variable_names().to_vec(),
                    truth.beta().iter().copied().collect(),
                    sigma.diagonal().iter().copied().collect(),
                    EstimateOrigin::External,
                )?
            };
            let t = transform_matrix(data, &est, settings.large_count_threshold, settings.rel_tol)?;
            let covariance = t.covariance(settings.covariance)?;
            Ok(MethodOutput { values: t.values, covariance, boxcox: None })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub n: usize,
    pub p: usize,
    pub network: NetworkKind,
    pub n_hubs: usize,
    /// Random graphs only; defaults to a sixth of all pairs.
    pub n_edges: Option<usize>,
    /// Defaults to 3 for random graphs and 1 otherwise.
    pub diagonal: Option<f64>,
    pub edge_weight: f64,
    /// Latent means are drawn uniformly from this range per replicate.
    pub beta_range: (f64, f64),
    pub methods: Vec<Method>,
    pub replicates: usize,
    pub path_length: usize,
    pub path_ratio: f64,
    pub glasso_tol: f64,
    /// Reuse one graph for all replicates instead of drawing a new one each time.
    pub fixed_graph: bool,
    pub transform: TransformSettings,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n: 150,
            p: 50,
            network: NetworkKind::Hub,
            n_hubs: 3,
            n_edges: None,
            diagonal: None,
            edge_weight: 0.25,
            beta_range: (1.0, 1.0),
            methods: Method::ALL.to_vec(),
            replicates: 100,
            path_length: DEFAULT_PATH_LENGTH,
            path_ratio: DEFAULT_PATH_RATIO,
            glasso_tol: DEFAULT_TOL,
            fixed_graph: false,
            transform: TransformSettings::default(),
            seed: 1,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidParameter("replicates must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter("no methods selected".into()));
        }
        if self.n < 2 || self.p < 2 {
            return Err(Error::InvalidParameter(format!("need n, p >= 2 (got n = {}, p = {})", self.n, self.p)));
        }
        let (lo, hi) = self.beta_range;
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParameter(format!("bad latent mean range ({lo}, {hi})")));
        }
        Ok(())
    }

    pub fn diagonal(&self) -> f64 {
        self.diagonal.unwrap_or_else(|| self.network.default_diagonal())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRoc {
    pub method: Method,
    pub roc: RocCurve,
    /// Penalties that failed to converge.
    pub path_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub edges: usize,
    pub diagonal_inflation: f64,
    pub methods: Vec<MethodRoc>,
    /// Correlation of per-variable Box-Cox parameter and count variance.
    pub boxcox_variance_correlation: Option<f64>,
    pub boxcox_fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub mean_auc: f64,
    pub sd_auc: f64,
    pub replicates: usize,
    /// Mean (FPR, TPR) at each grid position over replicates reaching it.
    pub mean_curve: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub config: BenchConfig,
    pub replicates: Vec<ReplicateResult>,
    pub failures: Vec<ReplicateFailure>,
    pub summary: Vec<MethodSummary>,
}

impl BenchResult {
    pub fn mean_auc(&self, method: Method) -> Option<f64> {
        self.summary.iter().find(|s| s.method == method).map(|s| s.mean_auc)
    }
}

fn run_replicate(config: &BenchConfig, replicate: usize) -> Result<ReplicateResult> {
    let rep_seed = derive_seed(config.seed, replicate as u64);
    let graph_seed = if config.fixed_graph {
        derive_seed(config.seed, u64::MAX)
    } else {
        derive_seed(rep_seed, 1)
    };
    let graph = graphs::generate(config.network, config.p, config.n_hubs, config.n_edges, graph_seed)?;
    let precision = graph_to_precision(&graph, config.diagonal(), config.edge_weight, derive_seed(graph_seed, 2))?;
    let mut rng = rng_from_seed(derive_seed(rep_seed, 3));
    let (lo, hi) = config.beta_range;
    let beta = DVector::from_fn(config.p, |_, _| if hi > lo { rng.random_range(lo..hi) } else { lo });
    let params = PlnParams::new(beta, precision.omega.clone())?;
    let data = sample_pln(&params, config.n, derive_seed(rep_seed, 4))?;

    let mut methods = Vec::with_capacity(config.methods.len());
    let mut correlation = None;
    let mut fallbacks = 0;
    for &method in &config.methods {
        let out = apply_method(&data, method, Some(&params), &config.transform)
            .map_err(|e| Error::NumericalFailure(format!("{method}: {e}")))?;
        if let Some(fits) = &out.boxcox {
            let lambdas: Vec<f64> = fits.iter().map(|f| f.lambda).collect();
            let variances: Vec<f64> = (0..config.p).map(|i| column_mean_var(data.column(i)).1).collect();
            correlation = boxcox::pearson(&lambdas, &variances);
            fallbacks = fits.iter().filter(|f| f.fallback).count();
        }
        let grid = lambda_grid(&out.covariance, config.path_length, config.path_ratio)?;
        let path = fit_path(&out.covariance, &grid.lambdas, config.glasso_tol)?;
        let index_of: Vec<usize> = path
            .lambdas
            .iter()
            .map(|l| grid.lambdas.iter().position(|g| g == l).expect("path penalty from grid"))
            .collect();
        let roc = roc::score_roc_indexed(&path, &index_of, &graph)?;
        methods.push(MethodRoc {
            method,
            roc,
            path_failures: path.failures.len(),
        });
    }
    Ok(ReplicateResult {
        replicate,
        edges: graph.edge_count(),
        diagonal_inflation: precision.inflation,
        methods,
        boxcox_variance_correlation: correlation,
        boxcox_fallbacks: fallbacks,
    })
}

fn summarize(config: &BenchConfig, reps: &[ReplicateResult]) -> Vec<MethodSummary> {
    config
        .methods
        .iter()
        .map(|&method| {
            let curves: Vec<&RocCurve> = reps
                .iter()
                .filter_map(|r| r.methods.iter().find(|m| m.method == method).map(|m| &m.roc))
                .collect();
            let aucs: Vec<f64> = curves.iter().map(|c| c.auc).collect();
            let k = aucs.len() as f64;
            let mean = aucs.iter().sum::<f64>() / k;
            let sd = if aucs.len() > 1 {
                (aucs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
            } else {
                0.0
            };
            let mut sums = vec![(0.0, 0.0, 0usize); config.path_length];
            for c in &curves {
                for pt in &c.points {
                    let s = &mut sums[pt.lambda_index];
                    s.0 += pt.fpr;
                    s.1 += pt.tpr;
                    s.2 += 1;
                }
            }
            let mean_curve = sums
                .into_iter()
                .filter(|s| s.2 > 0)
                .map(|(f, t, c)| (f / c as f64, t / c as f64))
                .collect();
            MethodSummary {
                method,
                mean_auc: mean,
                sd_auc: sd,
                replicates: aucs.len(),
                mean_curve,
            }
        })
        .collect()
}

/// Run all replicates (in parallel) and aggregate. Failed replicates are
/// listed and left out of the summary; the result does not depend on the
/// number of threads.
pub fn run_benchmark(config: &BenchConfig) -> Result<BenchResult> {
    config.validate()?;
    let outcomes: Vec<Result<ReplicateResult>> =
        (0..config.replicates).into_par_iter().map(|r| run_replicate(config, r)).collect();
    let mut replicates = Vec::new();
    let mut failures = Vec::new();
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(rep) => replicates.push(rep),
            Err(e) => failures.push(ReplicateFailure {
                replicate: r,
                message: e.to_string(),
            }),
        }
    }
    if replicates.is_empty() {
        return Err(Error::NumericalFailure(format!(
            "all {} replicates failed; first: {}",
            failures.len(),
            failures[0].message
        )));
    }
    let summary = summarize(config, &replicates);
    Ok(BenchResult {
        config: config.clone(),
        replicates,
        failures,
        summary,
    })
}

/// Counts resembling a sequencing experiment: a scale-free latent network,
/// latent means spread over `[-3, 10.5]` so that low-abundance variables
/// are mostly zero and the largest counts reach about a million.
pub fn sequencing_like_counts(n: usize, p: usize, seed: u64) -> Result<(CountMatrix, PlnParams)> {
    let graph = gen_scale_free(p, derive_seed(seed, 1))?;
    let precision = graph_to_precision(&graph, 1.0, 0.25, derive_seed(seed, 2))?;
    let mut rng = rng_from_seed(derive_seed(seed, 3));
    let beta = DVector::from_fn(p, |_, _| rng.random_range(-3.0..10.5));
    let params = PlnParams::new(beta, precision.omega)?;
    let data = sample_pln(&params, n, derive_seed(seed, 4))?;
    Ok((data, params))
}

/// `replicate,network,method,lambda_index,fpr,tpr`
pub fn write_tidy_csv<W: Write>(results: &[BenchResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::InvalidInput(format!("writing ROC table: {e}"));
    w.write_record(["replicate", "network", "method", "lambda_index", "fpr", "tpr"]).map_err(io)?;
    for res in results {
        for rep in &res.replicates {
            for m in &rep.methods {
                for pt in &m.roc.points {
                    w.write_record([
                        rep.replicate.to_string(),
                        res.config.network.to_string(),
                        m.method.to_string(),
                        pt.lambda_index.to_string(),
                        pt.fpr.to_string(),
                        pt.tpr.to_string(),
                    ])
                    .map_err(io)?;
                }
            }
        }
    }
    w.flush().map_err(|e| Error::InvalidInput(format!("writing ROC table: {e}")))?;
    Ok(())
}

/// `network,method,mean_auc,sd_auc`
pub fn write_summary_csv<W: Write>(results: &[BenchResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::InvalidInput(format!("writing AUC summary: {e}"));
    w.write_record(["network", "method", "mean_auc", "sd_auc"]).map_err(io)?;
    for res in results {
        for s in &res.summary {
            w.write_record([
                res.config.network.to_string(),
                s.method.to_string(),
                s.mean_auc.to_string(),
                s.sd_auc.to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::InvalidInput(format!("writing AUC summary: {e}")))?;
    Ok(())
}

//! Graphical lasso: maximize `log det Omega - tr(S Omega) - lambda sum_{i != k} |omega_ik|`
//! over positive-definite `Omega`, by block coordinate ascent over the
//! columns of the working covariance `W`, each column a lasso problem solved
//! by cyclic coordinate descent.
//!
//! Only off-diagonal entries are penalized, so `W_ii = S_ii` at every
//! iterate and any `lambda >= max_{i != k} |s_ik|` yields a diagonal estimate.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_SWEEPS: usize = 10_000;
pub const DEFAULT_PATH_LENGTH: usize = 50;
pub const DEFAULT_PATH_RATIO: f64 = 0.01;
pub const DEFAULT_EBIC_GAMMA: f64 = 0.5;
/// Relative threshold for calling an off-diagonal entry nonzero.
pub const ZERO_TOL: f64 = 1e-8;

const SYMMETRY_TOL: f64 = 1e-10;
const PSD_TOL: f64 = -1e-8;
const MAX_INNER_PASSES: usize = 100_000;

/// Sample covariance (or any symmetric PSD matrix) with its sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceInput {
    s: DMatrix<f64>,
    n: usize,
}

impl CovarianceInput {
    pub fn new(mut s: DMatrix<f64>, n: usize) -> Result<Self> {
        let p = s.nrows();
        if p == 0 || s.ncols() != p {
            return Err(Error::InvalidInput(format!(
                "covariance must be square and non-empty, got {:?}",
                s.shape()
            )));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("covariance has non-finite entries".into()));
        }
        let scale = s.diagonal().abs().max().max(1.0);
        for i in 0..p {
            for k in 0..i {
                if (s[(i, k)] - s[(k, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::InvalidInput(format!(
                        "covariance not symmetric at ({i}, {k})"
                    )));
                }
                let avg = 0.5 * (s[(i, k)] + s[(k, i)]);
                s[(i, k)] = avg;
                s[(k, i)] = avg;
            }
        }
        let min_eig = s.clone().symmetric_eigenvalues().min();
        if min_eig < PSD_TOL * scale {
            return Err(Error::InvalidInput(format!(
                "covariance is not positive semi-definite (smallest eigenvalue {min_eig:e})"
            )));
        }
        Ok(Self { s, n })
    }

    /// Covariance of the columns of `data` (rows are observations), divisor `n`.
    pub fn from_data(data: &DMatrix<f64>) -> Result<Self> {
        let n = data.nrows();
        if n < 2 {
            return Err(Error::InvalidInput("need at least 2 observations".into()));
        }
        let mut centered = data.clone();
        for mut col in centered.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        Self::new(centered.tr_mul(&centered) / n as f64, n)
    }

    pub fn s(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    /// Largest off-diagonal magnitude; the smallest penalty with an empty graph.
    pub fn lambda_max(&self) -> f64 {
        let p = self.dim();
        let mut m = 0.0f64;
        for i in 0..p {
            for k in 0..i {
                m = m.max(self.s[(i, k)].abs());
            }
        }
        m
    }

    fn mean_abs_diag(&self) -> f64 {
        self.s.diagonal().abs().mean()
    }
}

/// Off-diagonal pairs `(i, k)`, `i < k`, with
/// `|omega_ik| > ZERO_TOL * sqrt(omega_ii omega_kk)`.
pub fn support_of(omega: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let p = omega.nrows();
    let mut edges = Vec::new();
    for k in 0..p {
        for i in 0..k {
            let scale = (omega[(i, i)] * omega[(k, k)]).abs().sqrt();
            if omega[(i, k)].abs() > ZERO_TOL * scale {
                edges.push((i, k));
            }
        }
    }
    edges
}

fn log_det_pd(m: &DMatrix<f64>) -> Option<f64> {
    let chol = m.clone().cholesky()?;
    Some(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

fn off_diagonal_l1(omega: &DMatrix<f64>) -> f64 {
    let p = omega.nrows();
    let mut total = 0.0;
    for k in 0..p {
        for i in 0..p {
            if i != k {
                total += omega[(i, k)].abs();
            }
        }
    }
    total
}

/// `log det Omega - tr(S Omega) - lambda sum_{i != k} |omega_ik|`.
pub fn surrogate_objective(omega: &DMatrix<f64>, input: &CovarianceInput, lambda: f64) -> Result<f64> {
    if omega.shape() != input.s.shape() {
        return Err(Error::InvalidInput("precision and covariance shapes differ".into()));
    }
    let log_det = log_det_pd(omega)
        .ok_or_else(|| Error::InvalidInput("precision is not positive definite".into()))?;
    let trace = input.s.component_mul(omega).sum();
    Ok(log_det - trace - lambda * off_diagonal_l1(omega))
}

/// Gaussian log-likelihood `(n/2)(log det Omega - tr(S Omega))`.
pub fn gaussian_loglik(omega: &DMatrix<f64>, input: &CovarianceInput) -> Result<f64> {
    Ok(0.5 * input.n as f64 * surrogate_objective(omega, input, 0.0)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionEstimate {
    pub omega: DMatrix<f64>,
    pub lambda: f64,
    pub support: Vec<(usize, usize)>,
    pub objective: f64,
}

impl PrecisionEstimate {
    pub fn from_omega(omega: DMatrix<f64>, lambda: f64, input: &CovarianceInput) -> Result<Self> {
        let objective = surrogate_objective(&omega, input, lambda)?;
        let support = support_of(&omega);
        Ok(Self {
            omega,
            lambda,
            support,
            objective,
        })
    }

    pub fn edge_count(&self) -> usize {
        self.support.len()
    }

    pub fn is_diagonal(&self) -> bool {
        let p = self.omega.nrows();
        (0..p).all(|k| (0..p).all(|i| i == k || self.omega[(i, k)] == 0.0))
    }

    /// Edges sorted by `|omega_ik|` descending, ties by variable names.
    pub fn ranked_edges<'a>(&self, names: &'a [String]) -> Vec<(&'a str, &'a str, f64)> {
        let mut edges: Vec<_> = self
            .support
            .iter()
            .map(|&(i, k)| (names[i].as_str(), names[k].as_str(), self.omega[(i, k)]))
            .collect();
        edges.sort_by(|a, b| {
            b.2.abs()
                .total_cmp(&a.2.abs())
                .then_with(|| a.0.cmp(b.0))
                .then_with(|| a.1.cmp(b.1))
        });
        edges
    }

    /// Tab-separated `var_i var_k omega_ik`, strongest edge first.
    pub fn write_edge_tsv<W: Write>(&self, names: &[String], mut out: W) -> Result<()> {
        if names.len() != self.omega.nrows() {
            return Err(Error::InvalidInput("name count does not match the precision".into()));
        }
        let io = |e| Error::io("edge list", e);
        writeln!(out, "var_i\tvar_k\tomega_ik").map_err(io)?;
        for (a, b, w) in self.ranked_edges(names) {
            writeln!(out, "{a}\t{b}\t{w}").map_err(io)?;
        }
        Ok(())
    }

    pub fn summary(&self, ebic: Option<f64>) -> EstimateSummary {
        EstimateSummary {
            lambda: self.lambda,
            objective: self.objective,
            edges: self.edge_count(),
            ebic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub lambda: f64,
    pub objective: f64,
    pub edges: usize,
    pub ebic: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlassoOptions {
    pub tol: f64,
    pub max_sweeps: usize,
    /// Record the dual bound `-log det W - p` after every sweep.
    pub record_trace: bool,
}

impl Default for GlassoOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_sweeps: DEFAULT_MAX_SWEEPS,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlassoReport {
    pub estimate: PrecisionEstimate,
    pub sweeps: usize,
    /// Largest violation of the subgradient optimality conditions.
    pub kkt_residual: f64,
    /// Upper bound on the optimal objective after each sweep; non-increasing.
    pub dual_trace: Vec<f64>,
}

/// Largest violation of the optimality conditions at `omega`:
/// `s_ii = W_ii`; `|s_ik - W_ik| <= lambda` where `omega_ik = 0`;
/// `s_ik - W_ik = -lambda sign(omega_ik)` elsewhere, with `W = omega^-1`.
pub fn kkt_residual(omega: &DMatrix<f64>, input: &CovarianceInput, lambda: f64) -> Result<f64> {
    let w = omega
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("precision is not positive definite".into()))?
        .inverse();
    let s = &input.s;
    let p = s.nrows();
    let mut worst = 0.0f64;
    for k in 0..p {
        for i in 0..p {
            let gap = s[(i, k)] - w[(i, k)];
            let v = if i == k {
                gap.abs()
            } else {
                let scale = (omega[(i, i)] * omega[(k, k)]).abs().sqrt();
                if omega[(i, k)].abs() > ZERO_TOL * scale {
                    (gap + lambda * omega[(i, k)].signum()).abs()
                } else {
                    (gap.abs() - lambda).max(0.0)
                }
            };
            worst = worst.max(v);
        }
    }
    Ok(worst)
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

struct Solver<'a> {
    s: &'a DMatrix<f64>,
    lambda: f64,
    w: DMatrix<f64>,
    /// Column `j` holds the lasso coefficients of column `j` (zero at `j`).
    b: DMatrix<f64>,
    r: Vec<f64>,
}

impl Solver<'_> {
    /// Solve the lasso for column `j` to `inner_tol` and update `W`'s column.
    /// Returns the largest change of an entry of `W`.
    fn update_column(&mut self, j: usize, inner_tol: f64) -> Result<f64> {
        let p = self.s.nrows();
        let lambda = self.lambda;
        let r = &mut self.r;
        r.iter_mut().for_each(|v| *v = 0.0);
        for l in 0..p {
            let bl = self.b[(l, j)];
            if l != j && bl != 0.0 {
                let col = self.w.column(l);
                for k in 0..p {
                    r[k] += bl * col[k];
                }
            }
        }
        let mut full_pass = true;
        let mut passes = 0;
        loop {
            passes += 1;
            if passes > MAX_INNER_PASSES {
                return Err(Error::NumericalFailure(format!(
                    "lasso subproblem for column {j} did not converge"
                )));
            }
            let mut max_delta = 0.0f64;
            for k in 0..p {
                if k == j {
                    continue;
                }
                let old = self.b[(k, j)];
                if !full_pass && old == 0.0 {
                    continue;
                }
                let wkk = self.w[(k, k)];
                let grad = self.s[(k, j)] - (r[k] - wkk * old);
                let new = soft_threshold(grad, lambda) / wkk;
                if new != old {
                    let delta = new - old;
                    let col = self.w.column(k);
                    for l in 0..p {
                        r[l] += delta * col[l];
                    }
                    self.b[(k, j)] = new;
                    max_delta = max_delta.max(delta.abs() * wkk);
                }
            }
            if max_delta < inner_tol {
                if full_pass {
                    break;
                }
                full_pass = true;
            } else {
                full_pass = false;
            }
        }
        let mut change = 0.0f64;
        for k in 0..p {
            if k == j {
                continue;
            }
            change = change.max((r[k] - self.w[(k, j)]).abs());
            self.w[(k, j)] = r[k];
            self.w[(j, k)] = r[k];
        }
        Ok(change)
    }

    fn precision(&self) -> Result<DMatrix<f64>> {
        let p = self.s.nrows();
        let mut omega = DMatrix::zeros(p, p);
        for j in 0..p {
            let mut denom = self.s[(j, j)];
            for k in 0..p {
                if k != j {
                    denom -= self.w[(k, j)] * self.b[(k, j)];
                }
            }
            if !(denom > 0.0) {
                return Err(Error::NumericalFailure(format!(
                    "non-positive Schur complement {denom:e} in column {j}"
                )));
            }
            let d = 1.0 / denom;
            omega[(j, j)] = d;
            for k in 0..p {
                if k != j {
                    omega[(k, j)] = -self.b[(k, j)] * d;
                }
            }
        }
        let sym = (&omega + omega.transpose()) * 0.5;
        Ok(sym)
    }

    fn dual_bound(&self) -> f64 {
        log_det_pd(&self.w).map_or(f64::NAN, |ld| -ld - self.s.nrows() as f64)
    }
}

/// Fit at one penalty with the default iteration budget.
pub fn glasso_fit(
    input: &CovarianceInput,
    lambda: f64,
    warm_start: Option<&PrecisionEstimate>,
    tol: f64,
) -> Result<PrecisionEstimate> {
    let opts = GlassoOptions {
        tol,
        ..GlassoOptions::default()
    };
    glasso_fit_with(input, lambda, warm_start, &opts).map(|r| r.estimate)
}

pub fn glasso_fit_with(
    input: &CovarianceInput,
    lambda: f64,
    warm_start: Option<&PrecisionEstimate>,
    opts: &GlassoOptions,
) -> Result<GlassoReport> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("penalty {lambda} must be >= 0")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {} must be > 0", opts.tol)));
    }
    let s = &input.s;
    let p = s.nrows();
    if let Some(i) = (0..p).find(|&i| !(s[(i, i)] > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "variable {i} has non-positive variance {}",
            s[(i, i)]
        )));
    }
    if lambda == 0.0 && s.clone().cholesky().is_none() {
        return Err(Error::InvalidInput(
            "an unpenalized fit needs a strictly positive-definite covariance".into(),
        ));
    }
    let scale = input.mean_abs_diag();
    let (w, b) = match warm_start {
        Some(est) if est.omega.shape() == (p, p) => {
            let mut w = est
                .omega
                .clone()
                .cholesky()
                .ok_or_else(|| Error::InvalidInput("warm start is not positive definite".into()))?
                .inverse();
            for i in 0..p {
                w[(i, i)] = s[(i, i)];
            }
            let b = DMatrix::from_fn(p, p, |k, j| {
                if k == j {
                    0.0
                } else {
                    -est.omega[(k, j)] / est.omega[(j, j)]
                }
            });
            (w, b)
        }
        Some(_) => {
            return Err(Error::InvalidInput("warm start has the wrong dimension".into()));
        }
        None => (s.clone(), DMatrix::zeros(p, p)),
    };
    let mut solver = Solver {
        s,
        lambda,
        w,
        b,
        r: vec![0.0; p],
    };
    let mut dual_trace = Vec::new();
    let target = opts.tol * scale;
    let mut inner_tol = 0.1 * target;
    let mut last_change = f64::INFINITY;
    let mut last_kkt = f64::INFINITY;

    for sweep in 1..=opts.max_sweeps {
        let mut change = 0.0f64;
        for j in 0..p {
            change = change.max(solver.update_column(j, inner_tol)?);
        }
        if opts.record_trace {
            dual_trace.push(solver.dual_bound());
        }
        last_change = change;
        if change < target {
            if let Ok(omega) = solver.precision() {
                if let Ok(kkt) = kkt_residual(&omega, input, lambda) {
                    last_kkt = kkt;
                    if kkt <= target {
                        let estimate = PrecisionEstimate::from_omega(omega, lambda, input)?;
                        return Ok(GlassoReport {
                            estimate,
                            sweeps: sweep,
                            kkt_residual: kkt,
                            dual_trace,
                        });
                    }
                }
            }
            inner_tol = (inner_tol * 0.1).max(1e-15 * scale);
        }
    }
    Err(Error::NumericalFailure(format!(
        "graphical lasso at lambda = {lambda} did not converge in {} sweeps \
         (last change {last_change:e}, optimality residual {last_kkt:e})",
        opts.max_sweeps
    )))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaGrid {
    pub lambdas: Vec<f64>,
    /// No off-diagonal signal; the grid is a single nominal penalty.
    pub degenerate: bool,
}

/// Geometric grid from `lambda_max` down to `ratio * lambda_max`.
pub fn lambda_grid(input: &CovarianceInput, count: usize, ratio: f64) -> Result<LambdaGrid> {
    if count < 2 {
        return Err(Error::InvalidParameter(format!("grid needs >= 2 points, got {count}")));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidParameter(format!("grid ratio {ratio} not in (0, 1)")));
    }
    let top = input.lambda_max();
    if top == 0.0 {
        return Ok(LambdaGrid {
            lambdas: vec![input.mean_abs_diag()],
            degenerate: true,
        });
    }
    let step = ratio.ln() / (count - 1) as f64;
    let lambdas = (0..count)
        .map(|k| match k {
            0 => top,
            k if k == count - 1 => top * ratio,
            k => top * (step * k as f64).exp(),
        })
        .collect();
    Ok(LambdaGrid {
        lambdas,
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathFailure {
    pub lambda: f64,
    pub message: String,
}

/// Estimates along a decreasing penalty sequence. Failed penalties are listed
/// in `failures` and left out of `lambdas`/`estimates`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizationPath {
    pub input: CovarianceInput,
    pub lambdas: Vec<f64>,
    pub estimates: Vec<PrecisionEstimate>,
    pub ebic_scores: Option<Vec<f64>>,
    pub failures: Vec<PathFailure>,
}

impl RegularizationPath {
    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }
}

fn check_decreasing(lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() {
        return Err(Error::InvalidParameter("empty penalty sequence".into()));
    }
    if lambdas.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::InvalidParameter(
            "penalties must be strictly decreasing".into(),
        ));
    }
    Ok(())
}

/// Warm-started fits along `lambdas`.
pub fn fit_path(input: &CovarianceInput, lambdas: &[f64], tol: f64) -> Result<RegularizationPath> {
    check_decreasing(lambdas)?;
    let mut path = RegularizationPath {
        input: input.clone(),
        lambdas: Vec::with_capacity(lambdas.len()),
        estimates: Vec::with_capacity(lambdas.len()),
        ebic_scores: None,
        failures: Vec::new(),
    };
    for &lambda in lambdas {
        match glasso_fit(input, lambda, path.estimates.last(), tol) {
            Ok(est) => {
                path.lambdas.push(lambda);
                path.estimates.push(est);
            }
            Err(e) => path.failures.push(PathFailure {
                lambda,
                message: e.to_string(),
            }),
        }
    }
    Ok(path)
}

/// Independent cold-start fits; each penalty is solved from scratch.
pub fn fit_path_cold(
    input: &CovarianceInput,
    lambdas: &[f64],
    tol: f64,
) -> Result<RegularizationPath> {
    use rayon::prelude::*;
    check_decreasing(lambdas)?;
    let fits: Vec<Result<PrecisionEstimate>> = lambdas
        .par_iter()
        .map(|&l| glasso_fit(input, l, None, tol))
        .collect();
    let mut path = RegularizationPath {
        input: input.clone(),
        lambdas: Vec::new(),
        estimates: Vec::new(),
        ebic_scores: None,
        failures: Vec::new(),
    };
    for (&lambda, fit) in lambdas.iter().zip(fits) {
        match fit {
            Ok(est) => {
                path.lambdas.push(lambda);
                path.estimates.push(est);
            }
            Err(e) => path.failures.push(PathFailure {
                lambda,
                message: e.to_string(),
            }),
        }
    }
    Ok(path)
}

/// `-2 loglik + |E| log n + 4 |E| gamma log p`.
pub fn ebic(
    estimate: &PrecisionEstimate,
    input: &CovarianceInput,
    gamma: f64,
    n: usize,
    p: usize,
) -> Result<f64> {
    let ll = 0.5 * n as f64 * surrogate_objective(&estimate.omega, input, 0.0)?;
    let edges = estimate.edge_count() as f64;
    Ok(-2.0 * ll + edges * (n as f64).ln() + 4.0 * edges * gamma * (p as f64).ln())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EbicSelection {
    pub index: usize,
    pub lambda: f64,
    pub estimate: PrecisionEstimate,
    pub scores: Vec<f64>,
}

/// Minimum-eBIC estimate on the path; ties go to the larger penalty.
pub fn ebic_select(
    path: &RegularizationPath,
    gamma_ebic: f64,
    n: usize,
    p: usize,
) -> Result<EbicSelection> {
    if path.is_empty() {
        return Err(Error::InvalidInput("empty regularization path".into()));
    }
    if !(0.0..=1.0).contains(&gamma_ebic) {
        return Err(Error::InvalidParameter(format!("eBIC gamma {gamma_ebic} not in [0, 1]")));
    }
    let scores = path
        .estimates
        .iter()
        .map(|e| ebic(e, &path.input, gamma_ebic, n, p))
        .collect::<Result<Vec<f64>>>()?;
    // lambdas are decreasing, so the first minimum is the sparsest
    let mut best = 0;
    for (k, s) in scores.iter().enumerate() {
        if *s < scores[best] {
            best = k;
        }
    }
    Ok(EbicSelection {
        index: best,
        lambda: path.lambdas[best],
        estimate: path.estimates[best].clone(),
        scores,
    })
}

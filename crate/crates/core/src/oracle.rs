//! Exact observed-data log-likelihood of the model for one or two variables,
//! by tensor-product trapezoid quadrature over the latent coordinates, and
//! the end-to-end check that one transformation-plus-graphical-lasso step
//! does not decrease the penalized likelihood.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::glasso::{glasso_fit, CovarianceInput};
use crate::init::moment_init;
use crate::model::{sample_pln, CountMatrix, PlnParams};
use crate::posterior::{
    integration_bounds, transform_matrix, CovarianceKind, DEFAULT_LARGE_COUNT_THRESHOLD,
};

/// Cells whose log integrand is this far below the peak are skipped; their
/// total contribution is below 1e-15 relative for any grid used here.
const LOG_CUTOFF: f64 = 50.0;
/// Axes are also clipped to this many Laplace widths around the joint mode,
/// so sharply concentrated priors stay resolved.
const MODE_WIDTHS: f64 = 30.0;
/// Above this doubling change the grid is reported as too coarse.
pub const RESOLUTION_FAILURE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleGrid {
    /// Starting resolution; refined by doubling while the change exceeds `doubling_tol`.
    pub points_per_axis: usize,
    pub max_points_per_axis: usize,
    pub doubling_tol: f64,
    /// Extra prior standard deviations added on each side of the posterior interval.
    pub margin_sds: f64,
}

impl Default for OracleGrid {
    fn default() -> Self {
        Self {
            points_per_axis: 201,
            max_points_per_axis: 12_801,
            doubling_tol: 1e-6,
            margin_sds: 2.0,
        }
    }
}

impl OracleGrid {
    fn validate(&self) -> Result<()> {
        if self.points_per_axis < 201 || self.max_points_per_axis < self.points_per_axis {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 201 points per axis (got {}, max {})",
                self.points_per_axis, self.max_points_per_axis
            )));
        }
        Ok(())
    }
}

/// Integration interval of one latent coordinate.
pub fn axis_bounds(y: u64, beta: f64, sigma2: f64, margin_sds: f64) -> (f64, f64) {
    let (lo, hi) = integration_bounds(y, beta, sigma2);
    let extra = margin_sds * sigma2.sqrt();
    (lo - extra, hi + extra)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowLikelihood {
    pub log_lik: f64,
    /// Relative change of the integral between the last two resolutions.
    pub rel_change: f64,
    pub points_per_axis: usize,
}

struct RowProblem {
    y: Vec<f64>,
    log_fact: f64,
    beta: Vec<f64>,
    omega: DMatrix<f64>,
    log_norm: f64,
    bounds: Vec<(f64, f64)>,
}

impl RowProblem {
    fn log_density(&self, z: &[f64]) -> f64 {
        let p = z.len();
        let mut quad = 0.0;
        for i in 0..p {
            for k in 0..p {
                quad += (z[i] - self.beta[i]) * self.omega[(i, k)] * (z[k] - self.beta[k]);
            }
        }
        let pois: f64 = (0..p).map(|i| -z[i].exp() + self.y[i] * z[i]).sum();
        pois - self.log_fact + self.log_norm - 0.5 * quad
    }

    /// Maximizer of the (jointly concave) integrand by damped Newton, with
    /// the Laplace standard deviation of each coordinate there.
    fn peak(&self) -> (f64, Vec<(f64, f64)>) {
        let p = self.y.len();
        let mut z: Vec<f64> = (0..p)
            .map(|i| self.beta[i].clamp(self.bounds[i].0, self.bounds[i].1))
            .collect();
        let mut f = self.log_density(&z);
        for _ in 0..200 {
            let grad = DVector::from_fn(p, |i, _| {
                let mut g = self.y[i] - z[i].exp();
                for k in 0..p {
                    g -= self.omega[(i, k)] * (z[k] - self.beta[k]);
                }
                g
            });
            let mut neg_hess = self.omega.clone();
            for i in 0..p {
                neg_hess[(i, i)] += z[i].exp();
            }
            let Some(chol) = neg_hess.cholesky() else { break };
            let step = chol.solve(&grad);
            let mut t = 1.0;
            let mut moved = false;
            while t > 1e-12 {
                let cand: Vec<f64> = (0..p).map(|i| z[i] + t * step[i]).collect();
                let fc = self.log_density(&cand);
                if fc >= f {
                    moved = fc > f;
                    z = cand;
                    f = fc;
                    break;
                }
                t *= 0.5;
            }
            if !moved || step.norm() < 1e-12 {
                break;
            }
        }
        let mut neg_hess = self.omega.clone();
        for i in 0..p {
            neg_hess[(i, i)] += z[i].exp();
        }
        let widths: Vec<f64> = match neg_hess.cholesky() {
            Some(c) => c.inverse().diagonal().iter().map(|v| v.sqrt()).collect(),
            None => vec![f64::INFINITY; p],
        };
        let mode_and_width = z.into_iter().zip(widths).collect();
        (f, mode_and_width)
    }

    fn axis(&self, i: usize, points: usize) -> (Vec<f64>, f64) {
        let (lo, hi) = self.bounds[i];
        let h = (hi - lo) / (points - 1) as f64;
        ((0..points).map(|k| lo + k as f64 * h).collect(), h)
    }

    /// log of the trapezoid approximation at `points` per axis.
    fn log_integral(&self, points: usize, peak: f64) -> f64 {
        let weight = |k: usize| if k == 0 || k == points - 1 { 0.5 } else { 1.0 };
        match self.y.len() {
            1 => {
                let (z, h) = self.axis(0, points);
                let total: f64 = z
                    .iter()
                    .enumerate()
                    .map(|(k, &zk)| weight(k) * (self.log_density(&[zk]) - peak).exp())
                    .sum();
                peak + total.ln() + h.ln()
            }
            _ => {
                let (z1, h1) = self.axis(0, points);
                let (z2, h2) = self.axis(1, points);
                let d1: Vec<f64> = z1.iter().map(|z| z - self.beta[0]).collect();
                let d2: Vec<f64> = z2.iter().map(|z| z - self.beta[1]).collect();
                let head = self.log_norm - self.log_fact - peak;
                let u1: Vec<f64> = z1
                    .iter()
                    .zip(&d1)
                    .map(|(z, d)| -z.exp() + self.y[0] * z - 0.5 * self.omega[(0, 0)] * d * d)
                    .collect();
                let u2: Vec<f64> = z2
                    .iter()
                    .zip(&d2)
                    .map(|(z, d)| -z.exp() + self.y[1] * z - 0.5 * self.omega[(1, 1)] * d * d)
                    .collect();
                let cross = self.omega[(0, 1)];
                let mut total = 0.0;
                for a in 0..points {
                    let row = |b: usize| head + u1[a] + u2[b] - cross * d1[a] * d2[b];
                    // the slice is concave in b: locate its maximum by bisection on differences
                    let (mut lo, mut hi) = (0usize, points - 1);
                    while lo < hi {
                        let mid = (lo + hi) / 2;
                        if row(mid + 1) > row(mid) {
                            lo = mid + 1;
                        } else {
                            hi = mid;
                        }
                    }
                    if row(lo) < -LOG_CUTOFF {
                        continue;
                    }
                    let wa = weight(a);
                    let mut b = lo;
                    loop {
                        let v = row(b);
                        if v < -LOG_CUTOFF {
                            break;
                        }
                        total += wa * weight(b) * v.exp();
                        if b == 0 {
                            break;
                        }
                        b -= 1;
                    }
                    for b in lo + 1..points {
                        let v = row(b);
                        if v < -LOG_CUTOFF {
                            break;
                        }
                        total += wa * weight(b) * v.exp();
                    }
                }
                peak + total.ln() + h1.ln() + h2.ln()
            }
        }
    }
}

/// `log int P(y | z) phi(z; beta, omega^-1) dz` for one observation of
/// one or two variables.
pub fn exact_row_loglik(
    y_row: &[u64],
    beta: &[f64],
    omega: &DMatrix<f64>,
    grid: &OracleGrid,
) -> Result<RowLikelihood> {
    grid.validate()?;
    let p = y_row.len();
    if !(1..=2).contains(&p) || beta.len() != p || omega.shape() != (p, p) {
        return Err(Error::InvalidInput(format!(
            "the exact likelihood supports 1 or 2 variables (got {p} counts, {} means, {:?} precision)",
            beta.len(),
            omega.shape()
        )));
    }
    let chol = omega
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidParameter("precision is not positive definite".into()))?;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let cov = chol.inverse();
    let bounds = (0..p)
        .map(|i| axis_bounds(y_row[i], beta[i], cov[(i, i)], grid.margin_sds))
        .collect();
    let mut problem = RowProblem {
        y: y_row.iter().map(|&v| v as f64).collect(),
        log_fact: y_row.iter().map(|&v| ln_gamma(v as f64 + 1.0)).sum(),
        beta: beta.to_vec(),
        omega: omega.clone(),
        log_norm: 0.5 * log_det - 0.5 * p as f64 * (2.0 * std::f64::consts::PI).ln(),
        bounds,
    };
    let (peak, modes) = problem.peak();
    for (b, (m, w)) in problem.bounds.iter_mut().zip(modes) {
        b.0 = b.0.max(m - MODE_WIDTHS * w);
        b.1 = b.1.min(m + MODE_WIDTHS * w);
    }
    let mut points = grid.points_per_axis;
    let mut coarse = problem.log_integral(points, peak);
    loop {
        let fine_points = 2 * points - 1;
        let fine = problem.log_integral(fine_points, peak);
        let rel_change = (fine - coarse).exp_m1().abs();
        if rel_change <= grid.doubling_tol || 2 * fine_points - 1 > grid.max_points_per_axis {
            if rel_change > RESOLUTION_FAILURE || !fine.is_finite() {
                return Err(Error::NumericalFailure(format!(
                    "oracle grid too coarse for counts {y_row:?}: doubling to {fine_points} \
                     points changed the integral by {rel_change:e}"
                )));
            }
            return Ok(RowLikelihood {
                log_lik: fine,
                rel_change,
                points_per_axis: fine_points,
            });
        }
        points = fine_points;
        coarse = fine;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactLikelihood {
    /// `loglik - penalty`.
    pub value: f64,
    pub loglik: f64,
    pub penalty: f64,
    /// Worst grid-doubling change over the rows.
    pub max_rel_change: f64,
    /// Finest resolution any row needed.
    pub max_points_per_axis: usize,
}

/// Off-diagonal l1 penalty, matching the graphical lasso convention.
pub fn off_diagonal_penalty(omega: &DMatrix<f64>, lambda: f64) -> f64 {
    let p = omega.nrows();
    let mut total = 0.0;
    for i in 0..p {
        for k in 0..p {
            if i != k {
                total += omega[(i, k)].abs();
            }
        }
    }
    lambda * total
}

/// Sum of exact row log-likelihoods minus `lambda * sum_{i != k} |omega_ik|`.
/// Repeated rows are evaluated once.
pub fn penalized_loglik_exact(
    data: &CountMatrix,
    beta: &[f64],
    omega: &DMatrix<f64>,
    lambda: f64,
    grid: &OracleGrid,
) -> Result<ExactLikelihood> {
    let p = data.n_variables();
    if p > 2 {
        return Err(Error::InvalidInput(format!(
            "the exact likelihood supports at most 2 variables, got {p}"
        )));
    }
    let mut rows: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
    for j in 0..data.n_samples() {
        let row: Vec<u64> = (0..p).map(|i| data.get(j, i)).collect();
        *rows.entry(row).or_default() += 1;
    }
    let distinct: Vec<(&Vec<u64>, &usize)> = rows.iter().collect();
    let values = distinct
        .par_iter()
        .map(|(row, _)| exact_row_loglik(row, beta, omega, grid))
        .collect::<Result<Vec<_>>>()?;
    let mut loglik = 0.0;
    let mut max_rel_change = 0.0f64;
    let mut max_points = 0;
    for ((_, &count), v) in distinct.iter().zip(&values) {
        loglik += count as f64 * v.log_lik;
        max_rel_change = max_rel_change.max(v.rel_change);
        max_points = max_points.max(v.points_per_axis);
    }
    let penalty = off_diagonal_penalty(omega, lambda);
    Ok(ExactLikelihood {
        value: loglik - penalty,
        loglik,
        penalty,
        max_rel_change,
        max_points_per_axis: max_points,
    })
}

/// Slack allowed for the tolerance of the inner optimizer.
pub const INCREASE_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmCheckOptions {
    pub grid: OracleGrid,
    pub covariance: CovarianceKind,
    pub rel_tol: f64,
    pub glasso_tol: f64,
}

impl Default for EmCheckOptions {
    fn default() -> Self {
        Self {
            grid: OracleGrid::default(),
            covariance: CovarianceKind::ExpectedScatter,
            rel_tol: 1e-10,
            glasso_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmIncreaseReport {
    pub ell_start: f64,
    pub ell_onestep: f64,
    pub increased: bool,
    /// Graphical-lasso penalty (per-observation scale).
    pub lambda: f64,
    /// The same penalty on the summed log-likelihood scale, `n * lambda / 2`.
    pub lambda_likelihood: f64,
    pub seed: u64,
    pub n: usize,
    pub covariance: CovarianceKind,
    pub grid_points_per_axis: usize,
    pub max_rel_change: f64,
    pub beta0: Vec<f64>,
    pub omega_start: Vec<Vec<f64>>,
    pub omega_onestep: Vec<Vec<f64>>,
}

impl EmIncreaseReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|k| m[(i, k)]).collect())
        .collect()
}

pub fn verify_em_increase(data: &CountMatrix, lambda: f64, seed: u64) -> Result<EmIncreaseReport> {
    verify_em_increase_with(data, lambda, seed, &EmCheckOptions::default())
}

/// Moment start, posterior transformation, graphical lasso; then the exact
/// penalized likelihood at the start and at the fitted precision, both with
/// the starting `beta0`. The seed is recorded, not used: the data fix the run.
pub fn verify_em_increase_with(
    data: &CountMatrix,
    lambda: f64,
    seed: u64,
    opts: &EmCheckOptions,
) -> Result<EmIncreaseReport> {
    let n = data.n_samples();
    let est = moment_init(data)?;
    let omega_start = DMatrix::from_diagonal(&DVector::from_vec(est.precision_diag()));
    let transformed = transform_matrix(data, &est, DEFAULT_LARGE_COUNT_THRESHOLD, opts.rel_tol)?;
    let cov: CovarianceInput = transformed.covariance(opts.covariance)?;
    let fit = glasso_fit(&cov, lambda, None, opts.glasso_tol)?;

    let lambda_likelihood = 0.5 * n as f64 * lambda;
    let start =
        penalized_loglik_exact(data, &est.beta0, &omega_start, lambda_likelihood, &opts.grid)?;
    let onestep = penalized_loglik_exact(data, &est.beta0, &fit.omega, lambda_likelihood, &opts.grid)?;
    Ok(EmIncreaseReport {
        ell_start: start.value,
        ell_onestep: onestep.value,
        increased: onestep.value >= start.value - INCREASE_SLACK,
        lambda,
        lambda_likelihood,
        seed,
        n,
        covariance: opts.covariance,
        grid_points_per_axis: start.max_points_per_axis.max(onestep.max_points_per_axis),
        max_rel_change: start.max_rel_change.max(onestep.max_rel_change),
        beta0: est.beta0.clone(),
        omega_start: rows_of(&omega_start),
        omega_onestep: rows_of(&fit.omega),
    })
}

/// Two dependent variables with `omega_12 = +-0.4` (sign from the seed),
/// unit diagonal and latent means `(1.0, 0.5)`.
pub fn em_test_instance(seed: u64, n: usize) -> Result<CountMatrix> {
    let sign = if crate::rng::derive_seed(seed, 0) & 1 == 0 { 1.0 } else { -1.0 };
    let params = PlnParams::new(
        DVector::from_vec(vec![1.0, 0.5]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.4 * sign, 0.4 * sign, 1.0]),
    )?;
    sample_pln(&params, n, seed)
}

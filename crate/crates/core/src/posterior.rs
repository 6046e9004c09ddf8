//! Posterior summaries of one latent coordinate given its count, under the
//! diagonal starting estimate, and the matrix-wide transformation built on
//! them.
//!
//! For a count `y` and prior `N(beta, sigma2)` the unnormalized posterior is
//! `g(z) = exp(-e^z + z y) phi(z; beta, sigma2) / y!`. The posterior mean is
//! integrated over `(min(log+ y, beta) - 10 sigma, max(log+ y, beta) + 10 sigma)`
//! with `log+ y = log(max(y, 1))`; above a count threshold the posterior mode
//! stands in for the mean.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::glasso::CovarianceInput;
use crate::init::InitialEstimate;
use crate::model::CountMatrix;
use crate::quadrature;

pub const DEFAULT_REL_TOL: f64 = 1e-8;
pub const DEFAULT_LARGE_COUNT_THRESHOLD: u64 = 10_000;
/// Half-width of the integration interval, in prior standard deviations.
pub const BOUND_SDS: f64 = 10.0;
const MAX_SEGMENTS: usize = 4_000;

pub fn log_plus(y: u64) -> f64 {
    (y.max(1) as f64).ln()
}

/// Integration interval for the posterior of `z` given `y`.
pub fn integration_bounds(y: u64, beta: f64, sigma2: f64) -> (f64, f64) {
    let ly = log_plus(y);
    let s = sigma2.sqrt();
    (ly.min(beta) - BOUND_SDS * s, ly.max(beta) + BOUND_SDS * s)
}

#[inline]
fn log_kernel(z: f64, y: f64, beta: f64, sigma2: f64) -> f64 {
    let d = z - beta;
    -z.exp() + z * y - d * d / (2.0 * sigma2)
}

/// `log g(z)` including the Poisson and Gaussian normalizing constants.
pub fn log_unnormalized_posterior(z: f64, y: u64, beta: f64, sigma2: f64) -> f64 {
    let yf = y as f64;
    log_kernel(z, yf, beta, sigma2)
        - ln_gamma(yf + 1.0)
        - 0.5 * (2.0 * std::f64::consts::PI * sigma2).ln()
}

fn check_prior(beta: f64, sigma2: f64) -> Result<()> {
    if !beta.is_finite() || !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "prior must have finite mean and positive variance, got ({beta}, {sigma2})"
        )));
    }
    Ok(())
}

/// d/dz log g(z), written so that it stays accurate near `e^z = y`.
#[inline]
fn score(z: f64, y: u64, ln_y: f64, beta: f64, sigma2: f64) -> f64 {
    let prior = (z - beta) / sigma2;
    if y == 0 {
        -z.exp() - prior
    } else {
        -(y as f64) * (z - ln_y).exp_m1() - prior
    }
}

/// Maximizer of the strictly concave `log g`, by Newton's method inside a
/// shrinking bracket.
pub fn posterior_mode(y: u64, beta: f64, sigma2: f64) -> Result<f64> {
    check_prior(beta, sigma2)?;
    Ok(mode_unchecked(y, beta, sigma2))
}

fn mode_unchecked(y: u64, beta: f64, sigma2: f64) -> f64 {
    let ln_y = (y as f64).ln();
    // score(lo) >= 0 >= score(hi)
    let (mut lo, mut hi) = if y == 0 {
        let reach = sigma2 * beta.exp();
        ((beta - reach).max(-1e6).min(beta), beta)
    } else {
        (ln_y.min(beta), ln_y.max(beta))
    };
    if lo == hi {
        return lo;
    }
    let gtol = 1e-13 * (1.0 + y as f64);
    let mut z = 0.5 * (lo + hi);
    for _ in 0..500 {
        let g = score(z, y, ln_y, beta, sigma2);
        if g.abs() <= gtol {
            return z;
        }
        if g > 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        let curvature = z.exp() + 1.0 / sigma2;
        let step = z + g / curvature;
        z = if step > lo && step < hi { step } else { 0.5 * (lo + hi) };
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(lo.abs()).max(1.0) {
            break;
        }
    }
    z
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorMoments {
    pub mean: f64,
    pub variance: f64,
    pub mode: f64,
}

/// Posterior mean and variance by adaptive quadrature over the bounded
/// interval. The integrand is evaluated in log space and rescaled by its
/// value at the mode.
pub fn posterior_moments(y: u64, beta: f64, sigma2: f64, rel_tol: f64) -> Result<PosteriorMoments> {
    check_prior(beta, sigma2)?;
    if !(rel_tol > 0.0 && rel_tol <= 1e-2) {
        return Err(Error::InvalidParameter(format!(
            "relative tolerance {rel_tol} not in (0, 1e-2]"
        )));
    }
    let mode = mode_unchecked(y, beta, sigma2);
    let (lo, hi) = integration_bounds(y, beta, sigma2);
    let yf = y as f64;
    let peak = log_kernel(mode.clamp(lo, hi), yf, beta, sigma2);
    let width = 1.0 / (mode.exp() + 1.0 / sigma2).sqrt();

    let mut breaks = vec![lo, hi];
    for k in [0.0, -1.0, 1.0, -3.0, 3.0, -8.0, 8.0] {
        let b = mode + k * width;
        if b > lo && b < hi {
            breaks.push(b);
        }
    }
    breaks.sort_by(|a, b| a.total_cmp(b));
    breaks.dedup();

    let integrand = |z: f64| {
        let w = (log_kernel(z, yf, beta, sigma2) - peak).exp();
        let d = z - mode;
        [w, d * w, d * d * w, d.abs() * w]
    };
    let allowed = |v: &[f64; 4]| {
        [
            rel_tol * v[0].abs(),
            rel_tol * v[3].abs(),
            rel_tol * v[2].abs(),
            rel_tol * v[3].abs(),
        ]
    };
    let r = quadrature::integrate(integrand, &breaks, allowed, MAX_SEGMENTS).map_err(|e| {
        Error::NumericalFailure(format!(
            "posterior mean for y = {y}, beta = {beta}, sigma2 = {sigma2}: {e}"
        ))
    })?;
    let [m0, m1, m2, _] = r.value;
    if !(m0 > 0.0) {
        return Err(Error::NumericalFailure(format!(
            "posterior mass vanished for y = {y}, beta = {beta}, sigma2 = {sigma2}"
        )));
    }
    let shift = m1 / m0;
    Ok(PosteriorMoments {
        mean: mode + shift,
        variance: (m2 / m0 - shift * shift).max(0.0),
        mode,
    })
}

pub fn posterior_mean(y: u64, beta: f64, sigma2: f64, rel_tol: f64) -> Result<f64> {
    posterior_moments(y, beta, sigma2, rel_tol).map(|m| m.mean)
}

/// Second-moment matrix handed to the graphical lasso.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    /// Sample covariance of the posterior means.
    Empirical,
    /// Conditional expectation of the latent scatter about `beta0`
    /// (posterior means plus posterior variances on the diagonal).
    #[default]
    ExpectedScatter,
}

/// Which branch produced a transformed cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformMethod {
    MeanQuadrature,
    ModeNewton,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cell {
    value: f64,
    variance: f64,
    method: TransformMethod,
}

fn transform_cell(y: u64, beta: f64, sigma2: f64, threshold: u64, rel_tol: f64) -> Result<Cell> {
    if y < threshold {
        let m = posterior_moments(y, beta, sigma2, rel_tol)?;
        Ok(Cell {
            value: m.mean,
            variance: m.variance,
            method: TransformMethod::MeanQuadrature,
        })
    } else {
        let mode = mode_unchecked(y, beta, sigma2);
        Ok(Cell {
            value: mode,
            // Laplace approximation
            variance: 1.0 / (mode.exp() + 1.0 / sigma2),
            method: TransformMethod::ModeNewton,
        })
    }
}

/// Posterior-mean transformed data `Z~` with per-cell provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedMatrix {
    pub values: DMatrix<f64>,
    /// Posterior variance of each cell (Laplace approximation on the mode branch).
    pub posterior_var: DMatrix<f64>,
    pub method_used: DMatrix<TransformMethod>,
    pub estimate: InitialEstimate,
    pub sample_ids: Vec<String>,
    pub large_count_threshold: u64,
    pub rel_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodCounts {
    pub mean_quadrature: usize,
    pub mode_newton: usize,
}

/// JSON sidecar written next to the transformed CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSidecar {
    pub estimate: InitialEstimate,
    pub large_count_threshold: u64,
    pub rel_tol: f64,
    pub method_counts: MethodCounts,
}

/// Replace every count by its posterior mean (counts below `threshold`) or
/// posterior mode. Each distinct count in a column is evaluated once.
pub fn transform_matrix(
    data: &CountMatrix,
    estimate: &InitialEstimate,
    large_count_threshold: u64,
    rel_tol: f64,
) -> Result<TransformedMatrix> {
    estimate.validate()?;
    let p = data.n_variables();
    let n = data.n_samples();
    if estimate.len() != p {
        return Err(Error::InvalidParameter(format!(
            "estimate covers {} variables, data has {p}",
            estimate.len()
        )));
    }
    if estimate.variable_names.as_slice() != data.variable_names() {
        return Err(Error::InvalidParameter(
            "estimate variable names do not match the data".into(),
        ));
    }

    let columns: Vec<Vec<Cell>> = (0..p)
        .into_par_iter()
        .map(|i| {
            let col = data.column(i);
            let beta = estimate.beta0[i];
            let sigma2 = estimate.sigma0_diag[i];
            let mut cache: BTreeMap<u64, Cell> = BTreeMap::new();
            col.iter()
                .enumerate()
                .map(|(j, &y)| {
                    if let Some(c) = cache.get(&y) {
                        return Ok(*c);
                    }
                    let c = transform_cell(y, beta, sigma2, large_count_threshold, rel_tol)
                        .map_err(|e| {
                            Error::NumericalFailure(format!(
                                "cell (row {j}, column {i} `{}`): {e}",
                                data.variable_names()[i]
                            ))
                        })?;
                    cache.insert(y, c);
                    Ok(c)
                })
                .collect::<Result<Vec<Cell>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let values = DMatrix::from_fn(n, p, |j, i| columns[i][j].value);
    let posterior_var = DMatrix::from_fn(n, p, |j, i| columns[i][j].variance);
    let method_used = DMatrix::from_fn(n, p, |j, i| columns[i][j].method);
    Ok(TransformedMatrix {
        values,
        posterior_var,
        method_used,
        estimate: estimate.clone(),
        sample_ids: data.sample_ids().to_vec(),
        large_count_threshold,
        rel_tol,
    })
}

impl TransformedMatrix {
    /// Rebuild from stored means and variances. The branch of each cell is
    /// implied by its count and the threshold.
    pub fn from_parts(
        values: DMatrix<f64>,
        posterior_var: DMatrix<f64>,
        data: &CountMatrix,
        estimate: InitialEstimate,
        large_count_threshold: u64,
        rel_tol: f64,
    ) -> Result<Self> {
        let shape = (data.n_samples(), data.n_variables());
        if values.shape() != shape || posterior_var.shape() != shape || estimate.len() != shape.1 {
            return Err(Error::InvalidInput(
                "stored transform does not match the count matrix".into(),
            ));
        }
        let method_used = DMatrix::from_fn(shape.0, shape.1, |j, i| {
            if data.get(j, i) < large_count_threshold {
                TransformMethod::MeanQuadrature
            } else {
                TransformMethod::ModeNewton
            }
        });
        Ok(Self {
            values,
            posterior_var,
            method_used,
            estimate,
            sample_ids: data.sample_ids().to_vec(),
            large_count_threshold,
            rel_tol,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_variables(&self) -> usize {
        self.values.ncols()
    }

    pub fn method_counts(&self) -> MethodCounts {
        let mode_newton = self
            .method_used
            .iter()
            .filter(|m| **m == TransformMethod::ModeNewton)
            .count();
        MethodCounts {
            mean_quadrature: self.method_used.len() - mode_newton,
            mode_newton,
        }
    }

    /// Empirical covariance of the transformed data (divisor `n`).
    pub fn empirical_covariance(&self) -> Result<CovarianceInput> {
        CovarianceInput::from_data(&self.values)
    }

    pub fn covariance(&self, kind: CovarianceKind) -> Result<CovarianceInput> {
        match kind {
            CovarianceKind::Empirical => self.empirical_covariance(),
            CovarianceKind::ExpectedScatter => self.expected_scatter(),
        }
    }

    /// See [`expected_scatter`].
    pub fn expected_scatter(&self) -> Result<CovarianceInput> {
        expected_scatter(&self.values, &self.posterior_var, &self.estimate.beta0)
    }

    pub fn sidecar(&self) -> TransformSidecar {
        TransformSidecar {
            estimate: self.estimate.clone(),
            large_count_threshold: self.large_count_threshold,
            rel_tol: self.rel_tol,
            method_counts: self.method_counts(),
        }
    }

    /// Samples x variables CSV at full round-trip precision.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_labeled_matrix(out, &self.sample_ids, &self.estimate.variable_names, &self.values)
    }

    pub fn write_variance_csv<W: Write>(&self, out: W) -> Result<()> {
        write_labeled_matrix(
            out,
            &self.sample_ids,
            &self.estimate.variable_names,
            &self.posterior_var,
        )
    }
}

/// Expected latent scatter about `beta0` under the starting estimate:
/// off-diagonal entries average `(Z~_i - beta0_i)(Z~_k - beta0_k)`, the
/// diagonal additionally carries the mean posterior variance. With a diagonal
/// starting precision this is the exact conditional expectation of the
/// complete-data scatter matrix.
pub fn expected_scatter(
    values: &DMatrix<f64>,
    posterior_var: &DMatrix<f64>,
    beta0: &[f64],
) -> Result<CovarianceInput> {
    let (n, p) = values.shape();
    if posterior_var.shape() != (n, p) || beta0.len() != p {
        return Err(Error::InvalidInput(
            "posterior means, variances and beta0 have inconsistent shapes".into(),
        ));
    }
    let mut centered = values.clone();
    for (i, b) in beta0.iter().enumerate() {
        centered.column_mut(i).add_scalar_mut(-b);
    }
    let mut s = centered.tr_mul(&centered) / n as f64;
    for i in 0..p {
        s[(i, i)] += posterior_var.column(i).sum() / n as f64;
    }
    CovarianceInput::new(s, n)
}

pub(crate) fn write_labeled_matrix<W: Write>(
    out: W,
    row_ids: &[String],
    col_names: &[String],
    m: &DMatrix<f64>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::InvalidInput(format!("csv write failed: {e}"));
    let mut header = Vec::with_capacity(col_names.len() + 1);
    header.push("sample".to_string());
    header.extend(col_names.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for (j, id) in row_ids.iter().enumerate() {
        let mut rec = Vec::with_capacity(col_names.len() + 1);
        rec.push(id.clone());
        rec.extend((0..m.ncols()).map(|i| format!("{}", m[(j, i)])));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()
        .map_err(|e| Error::InvalidInput(format!("csv flush failed: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::EstimateOrigin;
    use approx::assert_abs_diff_eq;

    /// Dense trapezoid rule on the same interval; independent of the
    /// adaptive path and of the mode-centred rescaling.
    fn grid_oracle(y: u64, beta: f64, sigma2: f64, points: usize) -> (f64, f64) {
        let (lo, hi) = integration_bounds(y, beta, sigma2);
        let h = (hi - lo) / (points - 1) as f64;
        let logs: Vec<f64> = (0..points)
            .map(|k| log_unnormalized_posterior(lo + k as f64 * h, y, beta, sigma2))
            .collect();
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for (k, l) in logs.iter().enumerate() {
            let wt = if k == 0 || k == points - 1 { 0.5 } else { 1.0 };
            let z = lo + k as f64 * h;
            let g = wt * (l - top).exp();
            s0 += g;
            s1 += g * z;
            s2 += g * z * z;
        }
        let mean = s1 / s0;
        (mean, s2 / s0 - mean * mean)
    }

    #[test]
    fn degenerate_prior_returns_prior_mean() {
        for y in [0, 3, 40] {
            let m = posterior_mean(y, 0.7, 1e-10, DEFAULT_REL_TOL).unwrap();
            assert_abs_diff_eq!(m, 0.7, epsilon = 1e-6);
        }
    }

    #[test]
    fn zero_count_pulls_the_mean_down() {
        assert!(posterior_mean(0, 0.0, 1.0, DEFAULT_REL_TOL).unwrap() < 0.0);
    }

    #[test]
    fn mean_matches_dense_grid_for_y5() {
        let got = posterior_mean(5, 0.0, 1.0, DEFAULT_REL_TOL).unwrap();
        let (want, _) = grid_oracle(5, 0.0, 1.0, 1_000_000);
        assert_abs_diff_eq!(got, want, epsilon = 1e-6);
    }

    #[test]
    fn mean_and_variance_match_grid_across_parameters() {
        for &y in &[0u64, 1, 5, 50, 500] {
            for &beta in &[-2.0, 0.0, 2.0] {
                for &s2 in &[0.25, 1.0, 4.0] {
                    let m = posterior_moments(y, beta, s2, DEFAULT_REL_TOL).unwrap();
                    let (mean, var) = grid_oracle(y, beta, s2, 200_001);
                    assert!((m.mean - mean).abs() <= 1e-7 * mean.abs().max(1.0));
                    assert!((m.variance - var).abs() <= 1e-6 * var);
                    assert!(m.variance < s2, "variance did not shrink at {y} {beta} {s2}");
                    let (lo, hi) = integration_bounds(y, beta, s2);
                    assert!(m.mean > lo && m.mean < hi);
                }
            }
        }
    }

    /// Stationarity `-e^z + y - (z - beta)/sigma2 = 0` by plain bisection.
    fn bisect_mode(y: f64, beta: f64, sigma2: f64) -> f64 {
        let f = |z: f64| -z.exp() + y - (z - beta) / sigma2;
        let (mut a, mut b) = (-50.0, 50.0);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if f(m) > 0.0 {
                a = m
            } else {
                b = m
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn mode_solves_the_stationarity_equation() {
        let m = posterior_mode(0, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(m, -0.567_143_290_409_783_8, epsilon = 1e-12);
        assert_abs_diff_eq!(m, bisect_mode(0.0, 0.0, 1.0), epsilon = 1e-12);
        assert!(score(m, 0, f64::NEG_INFINITY, 0.0, 1.0).abs() < 1e-10);

        let flat = posterior_mode(10, 0.0, 1e8).unwrap();
        assert_abs_diff_eq!(flat, 10f64.ln(), epsilon = 1e-3);

        let big = posterior_mode(1_000_000, 0.0, 1.0).unwrap();
        assert!(big.is_finite());
        assert_abs_diff_eq!(big, bisect_mode(1e6, 0.0, 1.0), epsilon = 1e-9);
        assert!((big - 13.8155).abs() < 0.01);
        for &(y, b, s) in &[(3u64, 1.0, 0.5), (70, -1.0, 2.0), (1, 0.0, 1.0)] {
            let z = posterior_mode(y, b, s).unwrap();
            assert!(score(z, y, (y as f64).ln(), b, s).abs() < 1e-10);
        }
    }

    #[test]
    fn mean_and_mode_increase_with_the_count() {
        let mut prev = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for y in [0u64, 1, 2, 3, 5, 8, 13, 40, 200, 1000] {
            let mean = posterior_mean(y, 0.5, 1.3, DEFAULT_REL_TOL).unwrap();
            let mode = posterior_mode(y, 0.5, 1.3).unwrap();
            assert!(mean > prev.0 && mode > prev.1);
            prev = (mean, mode);
        }
    }

    #[test]
    fn mode_approaches_mean_for_large_counts() {
        let m = posterior_moments(10_000, 0.0, 1.0, DEFAULT_REL_TOL).unwrap();
        assert!((m.mean - m.mode).abs() < 0.01);
    }

    fn estimate(beta: Vec<f64>, sig: Vec<f64>) -> InitialEstimate {
        let names = (1..=beta.len()).map(|i| format!("V{i}")).collect();
        InitialEstimate::new(names, beta, sig, EstimateOrigin::External).unwrap()
    }

    #[test]
    fn identical_zero_cells_transform_identically() {
        let data = CountMatrix::from_values(DMatrix::zeros(2, 2)).unwrap();
        let t = transform_matrix(&data, &estimate(vec![0.0, 0.0], vec![1.0, 1.0]), 10_000, 1e-8)
            .unwrap();
        let v = t.values[(0, 0)];
        assert!(v < 0.0);
        assert!(t.values.iter().all(|x| *x == v));
        assert_eq!(t.method_counts().mean_quadrature, 4);
    }

    #[test]
    fn mode_branch_is_close_to_mean_for_moderate_counts() {
        let ys: Vec<u64> = vec![20, 35, 80, 300];
        let data = CountMatrix::from_values(DMatrix::from_fn(4, 3, |j, _| ys[j])).unwrap();
        let est = estimate(vec![-1.0, 1.0, 3.0], vec![0.3, 0.7, 1.0]);
        let by_mode = transform_matrix(&data, &est, 0, 1e-8).unwrap();
        let by_mean = transform_matrix(&data, &est, u64::MAX, 1e-8).unwrap();
        assert_eq!(by_mode.method_counts().mode_newton, 12);
        for (a, b) in by_mode.values.iter().zip(by_mean.values.iter()) {
            assert!((a - b).abs() < 0.05, "{a} vs {b}");
        }
    }

    #[test]
    fn mismatched_estimate_is_rejected() {
        let data = CountMatrix::from_values(DMatrix::zeros(2, 2)).unwrap();
        assert!(transform_matrix(&data, &estimate(vec![0.0], vec![1.0]), 10, 1e-8).is_err());
    }

    #[test]
    fn invalid_tolerance_is_rejected() {
        assert!(posterior_mean(1, 0.0, 1.0, 0.5).is_err());
        assert!(posterior_mean(1, 0.0, -1.0, 1e-8).is_err());
    }
}

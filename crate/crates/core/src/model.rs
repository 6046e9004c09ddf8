//! The Poisson log-normal graphical model: count data, latent Gaussian
//! parameters, forward sampling and the closed-form marginal moments.
//!
//! Counts follow `Y_i | Z ~ Poisson(exp(Z_i))` with `Z ~ N(beta, Omega^-1)`.
//! The conditional-dependence graph is the support of `Omega`.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Counts with samples as rows and variables as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrix {
    values: DMatrix<u64>,
    variable_names: Vec<String>,
    sample_ids: Vec<String>,
}

impl CountMatrix {
    pub fn new(
        values: DMatrix<u64>,
        variable_names: Vec<String>,
        sample_ids: Vec<String>,
    ) -> Result<Self> {
        let (n, p) = values.shape();
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "a count matrix needs at least 2 samples, got {n}"
            )));
        }
        if p < 1 {
            return Err(Error::InvalidInput("a count matrix needs at least 1 variable".into()));
        }
        if variable_names.len() != p {
            return Err(Error::InvalidInput(format!(
                "{} variable names for {p} columns",
                variable_names.len()
            )));
        }
        if sample_ids.len() != n {
            return Err(Error::InvalidInput(format!(
                "{} sample ids for {n} rows",
                sample_ids.len()
            )));
        }
        let mut seen = HashSet::with_capacity(p);
        for name in &variable_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate variable name `{name}`")));
            }
        }
        Ok(Self {
            values,
            variable_names,
            sample_ids,
        })
    }

    /// Matrix with generated names `V1..Vp` and `S1..Sn`.
    pub fn from_values(values: DMatrix<u64>) -> Result<Self> {
        let (n, p) = values.shape();
        let names = (1..=p).map(|i| format!("V{i}")).collect();
        let ids = (1..=n).map(|j| format!("S{j}")).collect();
        Self::new(values, names, ids)
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_variables(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<u64> {
        &self.values
    }

    pub fn variable_names(&self) -> &[String] {
        &self.variable_names
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn get(&self, sample: usize, variable: usize) -> u64 {
        self.values[(sample, variable)]
    }

    /// Column `i` as a contiguous slice (storage is column-major).
    pub fn column(&self, i: usize) -> &[u64] {
        let n = self.n_samples();
        &self.values.as_slice()[i * n..(i + 1) * n]
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        self.values.map(|v| v as f64)
    }

    /// Keep the listed variables, in the given order.
    pub fn select_variables(&self, keep: &[usize]) -> Result<Self> {
        let n = self.n_samples();
        let values = DMatrix::from_fn(n, keep.len(), |j, k| self.values[(j, keep[k])]);
        let names = keep.iter().map(|&i| self.variable_names[i].clone()).collect();
        Self::new(values, names, self.sample_ids.clone())
    }

    /// Rows drawn (with repetition) by index; used by the bootstrap.
    pub(crate) fn resample_rows(&self, rows: &[usize]) -> DMatrix<u64> {
        DMatrix::from_fn(rows.len(), self.n_variables(), |j, i| self.values[(rows[j], i)])
    }
}

/// Per-variable sample mean and (population) variance, the plug-in first
/// and second central moments.
pub fn column_mean_var(values: &[u64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = values
        .iter()
        .map(|&v| {
            let d = v as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    (mean, var)
}

/// Latent Gaussian mean and precision of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct PlnParams {
    beta: DVector<f64>,
    precision: DMatrix<f64>,
}

pub const SYMMETRY_TOL: f64 = 1e-10;

impl PlnParams {
    pub fn new(beta: DVector<f64>, precision: DMatrix<f64>) -> Result<Self> {
        let p = beta.len();
        if precision.shape() != (p, p) {
            return Err(Error::InvalidParameter(format!(
                "precision is {:?}, expected {p}x{p}",
                precision.shape()
            )));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParameter("beta has non-finite entries".into()));
        }
        for i in 0..p {
            for k in 0..i {
                if (precision[(i, k)] - precision[(k, i)]).abs() > SYMMETRY_TOL {
                    return Err(Error::InvalidParameter(format!(
                        "precision not symmetric at ({i}, {k})"
                    )));
                }
            }
        }
        if precision.clone().cholesky().is_none() {
            return Err(Error::InvalidParameter(
                "precision is not positive definite".into(),
            ));
        }
        Ok(Self { beta, precision })
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    /// `Sigma = Omega^-1`.
    pub fn covariance(&self) -> DMatrix<f64> {
        self.precision
            .clone()
            .cholesky()
            .expect("validated positive definite")
            .inverse()
    }
}

/// Draw `n` iid rows: `Z ~ N(beta, Omega^-1)` then `Y_i ~ Poisson(exp(Z_i))`.
pub fn sample_pln(params: &PlnParams, n: usize, seed: u64) -> Result<CountMatrix> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need n >= 2 samples, got {n}")));
    }
    let p = params.dim();
    let chol = params
        .precision
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidParameter("precision is not positive definite".into()))?;
    // Omega = L L^T, so Z = beta + L^-T e has covariance Omega^-1.
    let lt = chol.l().transpose();
    let mut rng = rng_from_seed(seed);
    let mut values = DMatrix::<u64>::zeros(n, p);
    for j in 0..n {
        let e = DVector::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
        let z = lt
            .solve_upper_triangular(&e)
            .ok_or_else(|| Error::NumericalFailure("triangular solve failed".into()))?;
        for i in 0..p {
            let rate = (params.beta[i] + z[i]).exp();
            values[(j, i)] = draw_poisson(rate, &mut rng)?;
        }
    }
    CountMatrix::from_values(values)
}

fn draw_poisson(rate: f64, rng: &mut crate::rng::Rng) -> Result<u64> {
    if rate < 1e-300 {
        return Ok(0);
    }
    if !rate.is_finite() || rate > 1e15 {
        return Err(Error::NumericalFailure(format!(
            "Poisson rate {rate:e} is out of the representable range"
        )));
    }
    let dist = Poisson::new(rate).map_err(|e| Error::NumericalFailure(e.to_string()))?;
    let draw: f64 = dist.sample(rng);
    Ok(draw as u64)
}

/// First and second raw moments of one observed coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalMoments {
    pub mean: f64,
    pub second_moment: f64,
}

impl MarginalMoments {
    /// True when either moment overflowed to infinity.
    pub fn is_saturated(&self) -> bool {
        self.mean.is_infinite() || self.second_moment.is_infinite()
    }

    pub fn variance(&self) -> f64 {
        self.second_moment - self.mean * self.mean
    }
}

/// `E(Y_i) = exp(beta + s/2)`, `E(Y_i^2) = E(Y_i) + exp(2 beta + 2 s)`.
pub fn pln_marginal_moments(beta: f64, sigma_ii: f64) -> MarginalMoments {
    let mean = (beta + 0.5 * sigma_ii).exp();
    MarginalMoments {
        mean,
        second_moment: mean + (2.0 * beta + 2.0 * sigma_ii).exp(),
    }
}

/// Floor applied to the latent variance when the moments are underdispersed.
pub const SIGMA_FLOOR: f64 = 1e-4;

/// Latent `(beta, sigma^2)` recovered from the first two raw moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentInversion {
    pub beta: f64,
    pub sigma2: f64,
    /// Moments were not overdispersed and `sigma2` was clamped to the floor.
    pub clamped: bool,
}

/// Inverts the marginal moments: `sigma^2 = log((m2 - m1) / m1^2)`,
/// `beta = log(m1^2 / sqrt(m2 - m1))`. Requires `m1 > 0`.
pub fn invert_moments(m1: f64, m2: f64) -> MomentInversion {
    debug_assert!(m1 > 0.0);
    let excess = m2 - m1;
    if excess > m1 * m1 {
        let sigma2 = (excess / (m1 * m1)).ln();
        let beta = 2.0 * m1.ln() - 0.5 * excess.ln();
        MomentInversion {
            beta,
            sigma2,
            clamped: false,
        }
    } else {
        MomentInversion {
            beta: m1.ln() - 0.5 * SIGMA_FLOOR,
            sigma2: SIGMA_FLOOR,
            clamped: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn params(beta: Vec<f64>, omega: Vec<f64>) -> PlnParams {
        let p = beta.len();
        PlnParams::new(DVector::from_vec(beta), DMatrix::from_row_slice(p, p, &omega)).unwrap()
    }

    #[test]
    fn vanishing_rate_gives_zero_counts() {
        let y = sample_pln(&params(vec![-30.0], vec![1.0]), 5, 1).unwrap();
        assert!(y.values().iter().all(|&v| v == 0));
    }

    #[test]
    fn sample_mean_matches_lognormal_mixture_mean() {
        let n = 100_000;
        let y = sample_pln(&params(vec![0.0], vec![1.0]), n, 11).unwrap();
        let (mean, var) = column_mean_var(y.column(0));
        let expected = 0.5f64.exp();
        let se = (var / n as f64).sqrt();
        assert!((mean - expected).abs() < 3.0 * se, "mean {mean} vs {expected} (se {se})");
    }

    #[test]
    fn independent_coordinates_are_uncorrelated() {
        let n = 100_000;
        let y = sample_pln(&params(vec![0.5, 0.2], vec![1.0, 0.0, 0.0, 2.0]), n, 5).unwrap();
        let (m1, v1) = column_mean_var(y.column(0));
        let (m2, v2) = column_mean_var(y.column(1));
        let cov = y
            .column(0)
            .iter()
            .zip(y.column(1))
            .map(|(&a, &b)| (a as f64 - m1) * (b as f64 - m2))
            .sum::<f64>()
            / n as f64;
        let r = cov / (v1 * v2).sqrt();
        // standard error of a null correlation is ~1/sqrt(n)
        assert!(r.abs() < 3.0 / (n as f64).sqrt(), "r = {r}");
    }

    #[test]
    fn sampling_is_deterministic_by_seed() {
        let pr = params(vec![1.0, 0.0], vec![1.0, 0.3, 0.3, 1.0]);
        assert_eq!(sample_pln(&pr, 50, 3).unwrap(), sample_pln(&pr, 50, 3).unwrap());
        assert_ne!(sample_pln(&pr, 50, 3).unwrap(), sample_pln(&pr, 50, 4).unwrap());
    }

    #[test]
    fn indefinite_precision_is_rejected() {
        let err = PlnParams::new(
            DVector::from_vec(vec![0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
    }

    #[test]
    fn marginal_moments_examples() {
        let m = pln_marginal_moments(0.0, 1e-12);
        assert_abs_diff_eq!(m.mean, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.second_moment, 2.0, epsilon = 1e-9);

        let m = pln_marginal_moments(0.0, 1.0);
        assert_abs_diff_eq!(m.mean, 1.648_721_270_700_128, epsilon = 1e-12);
        assert_abs_diff_eq!(m.second_moment, 0.5f64.exp() + 2.0f64.exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(m.second_moment, 9.037_777, epsilon = 1e-5);

        assert_abs_diff_eq!(pln_marginal_moments(2.0, 0.5).mean, 9.487_735_836, epsilon = 1e-8);
        assert!(pln_marginal_moments(400.0, 1.0).is_saturated());
    }

    #[test]
    fn exact_plug_in_inverts_to_unit_variance() {
        let inv = invert_moments(0.5f64.exp(), 0.5f64.exp() + 2.0f64.exp());
        assert_abs_diff_eq!(inv.beta, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(inv.sigma2, 1.0, epsilon = 1e-12);
        assert!(!inv.clamped);
    }

    #[test]
    fn underdispersed_moments_are_clamped() {
        // constant column of 5s
        let inv = invert_moments(5.0, 25.0);
        assert!(inv.clamped);
        assert_eq!(inv.sigma2, SIGMA_FLOOR);
        assert_abs_diff_eq!(inv.beta, 5f64.ln() - SIGMA_FLOOR / 2.0, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn moment_round_trip(beta in -2.0f64..4.0, s in 0.1f64..3.0) {
            let m = pln_marginal_moments(beta, s);
            let inv = invert_moments(m.mean, m.second_moment);
            prop_assert!(!inv.clamped);
            prop_assert!((inv.beta - beta).abs() < 1e-10);
            prop_assert!((inv.sigma2 - s).abs() < 1e-10);
        }
    }
}

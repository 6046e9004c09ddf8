//! Diagonal starting estimates `(beta0, Sigma0_ii)` for the one-step
//! transformation: the plain method-of-moments estimate and the variant that
//! shrinks each variable's mean/variance pair toward the log-mean/log-variance
//! trend across variables.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{column_mean_var, invert_moments, CountMatrix};
use crate::rng::{derive_seed, rng_from_seed};

/// Shrinkage weight used when none is estimated.
pub const DEFAULT_GAMMA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateOrigin {
    Moment,
    MirnaShrunk,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimateFlag {
    pub variable: String,
    pub reason: String,
}

/// Per-variable latent mean and latent variance; the implied starting
/// precision is `diag(1 / sigma0_diag)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialEstimate {
    pub variable_names: Vec<String>,
    pub beta0: Vec<f64>,
    pub sigma0_diag: Vec<f64>,
    pub origin: EstimateOrigin,
    #[serde(default)]
    pub flags: Vec<EstimateFlag>,
}

impl InitialEstimate {
    pub fn new(
        variable_names: Vec<String>,
        beta0: Vec<f64>,
        sigma0_diag: Vec<f64>,
        origin: EstimateOrigin,
    ) -> Result<Self> {
        let est = Self {
            variable_names,
            beta0,
            sigma0_diag,
            origin,
            flags: Vec::new(),
        };
        est.validate()?;
        Ok(est)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.beta0.len();
        if self.sigma0_diag.len() != p || self.variable_names.len() != p {
            return Err(Error::InvalidParameter(format!(
                "estimate lengths disagree: {} names, {} beta0, {} sigma0",
                self.variable_names.len(),
                p,
                self.sigma0_diag.len()
            )));
        }
        for (i, (&b, &s)) in self.beta0.iter().zip(&self.sigma0_diag).enumerate() {
            if !b.is_finite() || !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "variable `{}`: beta0 = {b}, sigma0 = {s}",
                    self.variable_names[i]
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.beta0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta0.is_empty()
    }

    pub fn precision_diag(&self) -> Vec<f64> {
        self.sigma0_diag.iter().map(|s| 1.0 / s).collect()
    }

    pub fn is_flagged(&self, variable: &str) -> bool {
        self.flags.iter().any(|f| f.variable == variable)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("estimate serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let est: Self = serde_json::from_str(text).map_err(|e| Error::Parse {
            location: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        est.validate()?;
        Ok(est)
    }
}

fn nonzero_mean_var(data: &CountMatrix, i: usize) -> Result<(f64, f64)> {
    let (m, v) = column_mean_var(data.column(i));
    if m == 0.0 {
        return Err(Error::UninformativeVariable {
            name: data.variable_names()[i].clone(),
            reason: "all counts are zero".into(),
        });
    }
    Ok((m, v))
}

fn estimate_from_moments(
    data: &CountMatrix,
    moments: &[(f64, f64)],
    origin: EstimateOrigin,
) -> InitialEstimate {
    let mut est = InitialEstimate {
        variable_names: data.variable_names().to_vec(),
        beta0: Vec::with_capacity(moments.len()),
        sigma0_diag: Vec::with_capacity(moments.len()),
        origin,
        flags: Vec::new(),
    };
    for (i, &(m1, m2)) in moments.iter().enumerate() {
        let inv = invert_moments(m1, m2);
        if inv.clamped {
            est.flags.push(EstimateFlag {
                variable: data.variable_names()[i].clone(),
                reason: format!(
                    "underdispersed (variance {:.6} <= mean {:.6}); latent variance clamped",
                    m2 - m1 * m1,
                    m1
                ),
            });
        }
        est.beta0.push(inv.beta);
        est.sigma0_diag.push(inv.sigma2);
    }
    est
}

/// Method-of-moments starting point, one variable at a time.
pub fn moment_init(data: &CountMatrix) -> Result<InitialEstimate> {
    let moments = (0..data.n_variables())
        .map(|i| {
            let (m1, v) = nonzero_mean_var(data, i)?;
            Ok((m1, v + m1 * m1))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(estimate_from_moments(data, &moments, EstimateOrigin::Moment))
}

/// First principal direction of the per-variable `(log mean, log variance)`
/// cloud, plus per-variable shrinkage weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanVarianceTrend {
    pub pc: [f64; 2],
    pub center: [f64; 2],
    pub gamma: Vec<f64>,
}

impl MeanVarianceTrend {
    /// Fit the trend through log-space points. The center is the coordinate-wise
    /// mean of the points (the logs of the geometric-mean mean and variance).
    pub fn from_log_points(points: &[[f64; 2]]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "a trend needs at least 2 variables, got {}",
                points.len()
            )));
        }
        let k = points.len() as f64;
        let cx = points.iter().map(|q| q[0]).sum::<f64>() / k;
        let cy = points.iter().map(|q| q[1]).sum::<f64>() / k;
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for q in points {
            let (dx, dy) = (q[0] - cx, q[1] - cy);
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
        }
        let pc = leading_eigenvector(sxx, sxy, syy).ok_or_else(|| {
            Error::InvalidInput("all variables share one (log mean, log variance) point".into())
        })?;
        Ok(Self {
            pc,
            center: [cx, cy],
            gamma: vec![DEFAULT_GAMMA; points.len()],
        })
    }

    /// Orthogonal projection of a log-space point onto the trend line.
    pub fn project(&self, point: [f64; 2]) -> [f64; 2] {
        let t = (point[0] - self.center[0]) * self.pc[0] + (point[1] - self.center[1]) * self.pc[1];
        [self.center[0] + t * self.pc[0], self.center[1] + t * self.pc[1]]
    }

    /// Signed perpendicular distance to the trend line; positive above it
    /// (on the side of the normal `(-pc_y, pc_x)`).
    pub fn signed_distance(&self, point: [f64; 2]) -> f64 {
        -(point[0] - self.center[0]) * self.pc[1] + (point[1] - self.center[1]) * self.pc[0]
    }
}

/// Unit eigenvector of the larger eigenvalue of `[[a, b], [b, c]]`, with a
/// non-negative first coordinate.
fn leading_eigenvector(a: f64, b: f64, c: f64) -> Option<[f64; 2]> {
    let half_gap = 0.5 * (a - c);
    let root = half_gap.hypot(b);
    let top = 0.5 * (a + c) + root;
    if !(top > 0.0) {
        return None;
    }
    // two algebraically equivalent choices; take the better conditioned one
    let u = [b, top - a];
    let w = [top - c, b];
    let pick = if u[0].hypot(u[1]) >= w[0].hypot(w[1]) { u } else { w };
    let norm = pick[0].hypot(pick[1]);
    let mut v = if norm > 0.0 {
        [pick[0] / norm, pick[1] / norm]
    } else if a >= c {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    };
    if v[0] < 0.0 || (v[0] == 0.0 && v[1] < 0.0) {
        v = [-v[0], -v[1]];
    }
    Some(v)
}

fn log_points(data: &CountMatrix) -> Result<(Vec<(f64, f64)>, Vec<[f64; 2]>)> {
    let mut moments = Vec::with_capacity(data.n_variables());
    let mut points = Vec::with_capacity(data.n_variables());
    for i in 0..data.n_variables() {
        let (m, v) = nonzero_mean_var(data, i)?;
        if v == 0.0 {
            return Err(Error::UninformativeVariable {
                name: data.variable_names()[i].clone(),
                reason: "zero sample variance".into(),
            });
        }
        moments.push((m, v));
        points.push([m.ln(), v.ln()]);
    }
    Ok((moments, points))
}

pub fn fit_trend(data: &CountMatrix) -> Result<MeanVarianceTrend> {
    let (_, points) = log_points(data)?;
    MeanVarianceTrend::from_log_points(&points)
}

/// Blended `(E(Y_i), Var(Y_i))` per variable:
/// `gamma_i (m_i, v_i) + (1 - gamma_i) exp(P_i)`.
pub fn shrunk_moments(
    data: &CountMatrix,
    trend: &MeanVarianceTrend,
    gammas: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if gammas.len() != data.n_variables() {
        return Err(Error::InvalidParameter(format!(
            "{} shrinkage weights for {} variables",
            gammas.len(),
            data.n_variables()
        )));
    }
    if let Some(g) = gammas.iter().find(|g| !(**g > 0.0 && **g < 1.0)) {
        return Err(Error::InvalidParameter(format!("shrinkage weight {g} not in (0, 1)")));
    }
    let (moments, points) = log_points(data)?;
    Ok(moments
        .iter()
        .zip(&points)
        .zip(gammas)
        .map(|((&(m, v), &pt), &g)| {
            let proj = trend.project(pt);
            (
                g * m + (1.0 - g) * proj[0].exp(),
                g * v + (1.0 - g) * proj[1].exp(),
            )
        })
        .collect())
}

/// Trend-shrunk starting point with a single shrinkage weight.
pub fn mirna_shrink_init(
    data: &CountMatrix,
    trend: &MeanVarianceTrend,
    gamma: f64,
) -> Result<InitialEstimate> {
    mirna_shrink_init_per_variable(data, trend, &vec![gamma; data.n_variables()])
}

pub fn mirna_shrink_init_per_variable(
    data: &CountMatrix,
    trend: &MeanVarianceTrend,
    gammas: &[f64],
) -> Result<InitialEstimate> {
    let blended = shrunk_moments(data, trend, gammas)?;
    let raw: Vec<(f64, f64)> = blended.iter().map(|&(e, v)| (e, v + e * e)).collect();
    Ok(estimate_from_moments(data, &raw, EstimateOrigin::MirnaShrunk))
}

/// Fraction of the observed distance kept by the normal-normal posterior mean:
/// with `d ~ N(t, s_d)` and `t ~ N(0, s_r)`, `E(t | d) = d * s_r / (s_r + s_d)`.
pub fn conjugate_shrinkage(sigma2_d: f64, sigma2_r: f64) -> f64 {
    if sigma2_d.is_infinite() {
        return 0.0;
    }
    sigma2_r / (sigma2_r + sigma2_d)
}

const GAMMA_CLAMP: f64 = 1e-9;
const SIGMA2_R_FLOOR: f64 = 1e-6;
/// Normal-consistency constant for the median absolute deviation.
const MAD_SCALE: f64 = 1.482_602_218_505_602;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalBayesGamma {
    pub gamma: Vec<f64>,
    /// Observed signed distances to the trend.
    pub distances: Vec<f64>,
    /// Bootstrap variance of each distance.
    pub sigma2_d: Vec<f64>,
    /// Prior variance of the true distances.
    pub sigma2_r: f64,
    /// Variables whose bootstrap was degenerate; they received the default weight.
    pub flagged: Vec<String>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// Per-variable shrinkage weights from a row bootstrap of the distances to
/// the trend and a robust estimate of the spread of true distances.
pub fn eb_gamma(
    data: &CountMatrix,
    trend: &MeanVarianceTrend,
    bootstrap_reps: usize,
    seed: u64,
) -> Result<EmpiricalBayesGamma> {
    if bootstrap_reps < 50 {
        return Err(Error::InvalidParameter(format!(
            "bootstrap needs at least 50 replicates, got {bootstrap_reps}"
        )));
    }
    let (_, points) = log_points(data)?;
    let p = data.n_variables();
    let n = data.n_samples();
    let distances: Vec<f64> = points.iter().map(|&q| trend.signed_distance(q)).collect();

    let draws: Vec<Vec<f64>> = (0..bootstrap_reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rng_from_seed(derive_seed(seed, rep));
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let sample = data.resample_rows(&rows);
            (0..p)
                .map(|i| {
                    let col = &sample.as_slice()[i * n..(i + 1) * n];
                    let (m, v) = column_mean_var(col);
                    let d = trend.signed_distance([m.ln(), v.ln()]);
                    if d.is_finite() {
                        d
                    } else {
                        f64::NAN
                    }
                })
                .collect()
        })
        .collect();

    let mut sigma2_d = vec![f64::NAN; p];
    let mut flagged = Vec::new();
    for i in 0..p {
        let vals: Vec<f64> = draws.iter().map(|d| d[i]).filter(|d| d.is_finite()).collect();
        if vals.len() * 2 < bootstrap_reps {
            flagged.push(i);
            continue;
        }
        let k = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / k;
        sigma2_d[i] = vals.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (k - 1.0);
    }

    let mut centered = distances.clone();
    let med = median(&mut centered);
    let mut abs_dev: Vec<f64> = distances.iter().map(|d| (d - med).abs()).collect();
    let mad = MAD_SCALE * median(&mut abs_dev);
    let mut measured: Vec<f64> = sigma2_d.iter().copied().filter(|s| s.is_finite()).collect();
    let typical_noise = if measured.is_empty() { 0.0 } else { median(&mut measured) };
    let sigma2_r = (mad * mad - typical_noise).max(SIGMA2_R_FLOOR);

    let gamma = (0..p)
        .map(|i| {
            if sigma2_d[i].is_finite() {
                conjugate_shrinkage(sigma2_d[i], sigma2_r).clamp(GAMMA_CLAMP, 1.0 - GAMMA_CLAMP)
            } else {
                DEFAULT_GAMMA
            }
        })
        .collect();
    Ok(EmpiricalBayesGamma {
        gamma,
        distances,
        sigma2_d,
        sigma2_r,
        flagged: flagged
            .into_iter()
            .map(|i| data.variable_names()[i].clone())
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{pln_marginal_moments, sample_pln, PlnParams};
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};
    use rand_distr::{Distribution, StandardNormal};

    fn counts(cols: &[&[u64]]) -> CountMatrix {
        let n = cols[0].len();
        CountMatrix::from_values(DMatrix::from_fn(n, cols.len(), |j, i| cols[i][j])).unwrap()
    }

    #[test]
    fn all_zero_column_is_rejected_by_name() {
        let data = counts(&[&[1, 4, 0, 9], &[0, 0, 0, 0]]);
        match moment_init(&data).unwrap_err() {
            Error::UninformativeVariable { name, .. } => assert_eq!(name, "V2"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn constant_column_is_clamped_and_flagged() {
        let data = counts(&[&[5, 5, 5, 5], &[0, 3, 10, 1]]);
        let est = moment_init(&data).unwrap();
        assert_eq!(est.sigma0_diag[0], crate::model::SIGMA_FLOOR);
        assert!(est.is_flagged("V1"));
        assert!(!est.is_flagged("V2"));
    }

    #[test]
    fn moment_init_recovers_simulated_parameters() {
        let params = PlnParams::new(
            DVector::from_vec(vec![1.5]),
            DMatrix::from_element(1, 1, 1.0 / 0.8),
        )
        .unwrap();
        let data = sample_pln(&params, 200_000, 2024).unwrap();
        let est = moment_init(&data).unwrap();
        assert!((est.beta0[0] - 1.5).abs() < 0.05, "beta0 {}", est.beta0[0]);
        assert!((est.sigma0_diag[0] - 0.8).abs() < 0.05, "sigma0 {}", est.sigma0_diag[0]);
    }

    #[test]
    fn estimate_json_round_trips() {
        let data = counts(&[&[5, 5, 5, 5], &[0, 3, 10, 1]]);
        let est = moment_init(&data).unwrap();
        let back = InitialEstimate::from_json(&est.to_json()).unwrap();
        assert_eq!(back, est);
        let v: serde_json::Value = serde_json::from_str(&est.to_json()).unwrap();
        for key in ["beta0", "sigma0_diag", "origin", "flags"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn collinear_trend_has_slope_two() {
        let pts: Vec<[f64; 2]> = (0..7)
            .map(|k| {
                let x = 0.3 * k as f64 - 1.0;
                [x, 2.0 * x + 0.7]
            })
            .collect();
        let t = MeanVarianceTrend::from_log_points(&pts).unwrap();
        let s5 = 5f64.sqrt();
        assert_abs_diff_eq!(t.pc[0], 1.0 / s5, epsilon = 1e-12);
        assert_abs_diff_eq!(t.pc[1], 2.0 / s5, epsilon = 1e-12);
        for q in &pts {
            let pr = t.project(*q);
            assert_abs_diff_eq!(pr[0], q[0], epsilon = 1e-12);
            assert_abs_diff_eq!(pr[1], q[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn two_point_trend_follows_their_difference() {
        let a = [1.0, 3.0];
        let b = [2.5, 2.0];
        let t = MeanVarianceTrend::from_log_points(&[a, b]).unwrap();
        let d = [b[0] - a[0], b[1] - a[1]];
        let norm = d[0].hypot(d[1]);
        assert_abs_diff_eq!(t.pc[0], d[0] / norm, epsilon = 1e-12);
        assert_abs_diff_eq!(t.pc[1], d[1] / norm, epsilon = 1e-12);
        assert_abs_diff_eq!(t.pc[0].hypot(t.pc[1]), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn correlated_cloud_trend_is_near_the_diagonal() {
        let mut rng = crate::rng::rng_from_seed(99);
        // L L^T = [[1, .9], [.9, 1]]
        let l21 = 0.9;
        let l22 = (1.0f64 - 0.81).sqrt();
        let pts: Vec<[f64; 2]> = (0..500)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                [a, l21 * a + l22 * b]
            })
            .collect();
        let t = MeanVarianceTrend::from_log_points(&pts).unwrap();
        let cos = (t.pc[0] + t.pc[1]) / 2f64.sqrt();
        assert!(cos.acos().to_degrees() < 2.0, "angle {}", cos.acos().to_degrees());
    }

    #[test]
    fn projection_residuals_are_orthogonal_to_the_trend() {
        let data = sample_pln(
            &PlnParams::new(
                DVector::from_vec(vec![0.5, 1.0, 2.0, 3.0, 1.5]),
                DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0, 1.5, 0.8, 1.2])),
            )
            .unwrap(),
            400,
            8,
        )
        .unwrap();
        let t = fit_trend(&data).unwrap();
        assert_abs_diff_eq!(t.pc[0].hypot(t.pc[1]), 1.0, epsilon = 1e-12);
        for i in 0..data.n_variables() {
            let (m, v) = column_mean_var(data.column(i));
            let q = [m.ln(), v.ln()];
            let pr = t.project(q);
            let dot = (q[0] - pr[0]) * t.pc[0] + (q[1] - pr[1]) * t.pc[1];
            assert!(dot.abs() < 1e-10);
        }
    }

    #[test]
    fn zero_variance_variable_blocks_trend_fit() {
        let data = counts(&[&[5, 5, 5, 5], &[0, 3, 10, 1]]);
        assert!(matches!(
            fit_trend(&data).unwrap_err(),
            Error::UninformativeVariable { .. }
        ));
    }

    fn overdispersed_sample() -> CountMatrix {
        let beta = vec![0.5, 1.0, 2.0, 3.0, 1.5, 2.5];
        let sig = vec![0.5, 1.0, 0.7, 1.3, 0.9, 0.4];
        let prec = DVector::from_iterator(6, sig.iter().map(|s| 1.0 / s));
        sample_pln(
            &PlnParams::new(DVector::from_vec(beta), DMatrix::from_diagonal(&prec)).unwrap(),
            300,
            77,
        )
        .unwrap()
    }

    #[test]
    fn gamma_near_one_reproduces_moment_init() {
        let data = overdispersed_sample();
        let trend = fit_trend(&data).unwrap();
        let shrunk = mirna_shrink_init(&data, &trend, 1.0 - 1e-12).unwrap();
        let plain = moment_init(&data).unwrap();
        for i in 0..data.n_variables() {
            assert_abs_diff_eq!(shrunk.beta0[i], plain.beta0[i], epsilon = 1e-6);
            assert_abs_diff_eq!(shrunk.sigma0_diag[i], plain.sigma0_diag[i], epsilon = 1e-6);
        }
        assert_eq!(shrunk.origin, EstimateOrigin::MirnaShrunk);
    }

    #[test]
    fn gamma_near_zero_lands_on_the_trend() {
        let data = overdispersed_sample();
        let trend = fit_trend(&data).unwrap();
        let blended = shrunk_moments(&data, &trend, &vec![1e-15; data.n_variables()]).unwrap();
        for (e, v) in blended {
            let q = [e.ln(), v.ln()];
            assert!(trend.signed_distance(q).abs() < 1e-9);
        }
    }

    #[test]
    fn on_trend_point_is_invariant_to_gamma() {
        let data = overdispersed_sample();
        let mut trend = fit_trend(&data).unwrap();
        // put the trend exactly through variable 0
        let (m, v) = column_mean_var(data.column(0));
        trend.center = [m.ln(), v.ln()];
        let a = shrunk_moments(&data, &trend, &vec![0.2; 6]).unwrap();
        let b = shrunk_moments(&data, &trend, &vec![0.9; 6]).unwrap();
        assert_abs_diff_eq!(a[0].0, b[0].0, epsilon = 1e-9 * m);
        assert_abs_diff_eq!(a[0].1, b[0].1, epsilon = 1e-9 * v);
    }

    #[test]
    fn half_shrinkage_is_a_strict_convex_combination() {
        let data = overdispersed_sample();
        let trend = fit_trend(&data).unwrap();
        let blended = shrunk_moments(&data, &trend, &vec![0.5; 6]).unwrap();
        for (i, &(e, _)) in blended.iter().enumerate() {
            let (m, v) = column_mean_var(data.column(i));
            let on_line = trend.project([m.ln(), v.ln()])[0].exp();
            if (m - on_line).abs() > 1e-9 {
                assert!(e > m.min(on_line) && e < m.max(on_line));
            }
        }
    }

    #[test]
    fn shrinkage_limits() {
        assert_abs_diff_eq!(conjugate_shrinkage(0.0, 0.3), 1.0);
        assert_abs_diff_eq!(conjugate_shrinkage(f64::INFINITY, 0.3), 0.0);
        assert!(conjugate_shrinkage(1e12, 0.3) < 1e-11);
        // equal variances halve the distance
        let d = 0.8;
        assert_abs_diff_eq!(d * conjugate_shrinkage(0.25, 0.25), d / 2.0);
    }

    #[test]
    fn eb_gamma_weights_are_deterministic_and_in_range() {
        let data = overdispersed_sample();
        let trend = fit_trend(&data).unwrap();
        let a = eb_gamma(&data, &trend, 60, 3).unwrap();
        let b = eb_gamma(&data, &trend, 60, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.gamma.iter().all(|g| *g > 0.0 && *g < 1.0));
        assert!(a.sigma2_r >= SIGMA2_R_FLOOR);
        assert!(eb_gamma(&data, &trend, 10, 3).is_err());
    }

    #[test]
    fn marginal_moment_plug_in_recovers_parameters() {
        let m = pln_marginal_moments(0.0, 1.0);
        let data_like = invert_moments(m.mean, m.second_moment);
        assert_abs_diff_eq!(data_like.beta, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(data_like.sigma2, 1.0, epsilon = 1e-12);
    }
}

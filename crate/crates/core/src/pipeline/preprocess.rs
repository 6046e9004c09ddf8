//! Low-variance filtering and sequencing-depth adjustment.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CountMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Variables with sample variance strictly below this quantile of all
    /// variances are dropped.
    pub min_variance_quantile: f64,
    pub depth_adjust: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            min_variance_quantile: 0.75,
            depth_adjust: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeFactorMethod {
    MedianOfRatios,
    /// No variable was positive in every sample.
    TotalCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessManifest {
    pub config: PreprocessConfig,
    pub variance_threshold: f64,
    pub kept: Vec<String>,
    pub dropped: Vec<String>,
    pub size_factor_method: Option<SizeFactorMethod>,
    /// One per sample, in input order.
    pub size_factors: Option<Vec<f64>>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    /// Filtered (and, if requested, depth-adjusted and rounded) counts.
    pub data: CountMatrix,
    /// Depth-adjusted values before rounding.
    pub adjusted: Option<DMatrix<f64>>,
    pub manifest: PreprocessManifest,
}

/// Sample variance (divisor n - 1).
fn sample_variance(col: &[u64]) -> f64 {
    let n = col.len() as f64;
    let mean = col.iter().map(|&v| v as f64).sum::<f64>() / n;
    col.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Linear-interpolation quantile (type 7).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Per-sample size factors: median over all-positive variables of the ratio
/// to that variable's geometric mean. Falls back to total counts relative to
/// their geometric mean.
pub fn size_factors(data: &CountMatrix) -> Result<(Vec<f64>, SizeFactorMethod)> {
    let n = data.n_samples();
    let positive: Vec<usize> = (0..data.n_variables())
        .filter(|&i| data.column(i).iter().all(|&v| v > 0))
        .collect();
    if !positive.is_empty() {
        let log_geo: Vec<f64> = positive
            .iter()
            .map(|&i| data.column(i).iter().map(|&v| (v as f64).ln()).sum::<f64>() / n as f64)
            .collect();
        let factors = (0..n)
            .map(|j| {
                let ratios = positive
                    .iter()
                    .zip(&log_geo)
                    .map(|(&i, g)| (data.get(j, i) as f64).ln() - g)
                    .collect();
                median(ratios).exp()
            })
            .collect();
        return Ok((factors, SizeFactorMethod::MedianOfRatios));
    }
    let totals: Vec<f64> = (0..n)
        .map(|j| (0..data.n_variables()).map(|i| data.get(j, i) as f64).sum())
        .collect();
    if let Some(j) = totals.iter().position(|&t| t == 0.0) {
        return Err(Error::InvalidInput(format!(
            "sample `{}` has no counts; depth cannot be adjusted",
            data.sample_ids()[j]
        )));
    }
    let log_geo = totals.iter().map(|t| t.ln()).sum::<f64>() / n as f64;
    Ok((
        totals.iter().map(|t| (t.ln() - log_geo).exp()).collect(),
        SizeFactorMethod::TotalCount,
    ))
}

/// Drop low-variance variables, then divide each sample by its size factor
/// and round. Size factors are computed from all input variables.
pub fn preprocess(data: &CountMatrix, config: &PreprocessConfig) -> Result<Preprocessed> {
    let q = config.min_variance_quantile;
    if !(0.0..1.0).contains(&q) {
        return Err(Error::Config(format!("min_variance_quantile {q} not in [0, 1)")));
    }
    let variances: Vec<f64> = (0..data.n_variables()).map(|i| sample_variance(data.column(i))).collect();
    let threshold = quantile(&variances, q);
    let keep: Vec<usize> = (0..data.n_variables()).filter(|&i| !(variances[i] < threshold)).collect();
    if keep.is_empty() {
        return Err(Error::InvalidInput("variance filter removed every variable".into()));
    }
    let names = data.variable_names();
    let mut manifest = PreprocessManifest {
        config: *config,
        variance_threshold: threshold,
        kept: keep.iter().map(|&i| names[i].clone()).collect(),
        dropped: (0..data.n_variables())
            .filter(|i| !keep.contains(i))
            .map(|i| names[i].clone())
            .collect(),
        size_factor_method: None,
        size_factors: None,
        flags: Vec::new(),
    };

    let mut filtered = data.select_variables(&keep)?;
    let mut adjusted = None;
    if config.depth_adjust {
        let (factors, method) = size_factors(data)?;
        if method == SizeFactorMethod::TotalCount {
            manifest
                .flags
                .push("no variable is positive in every sample; size factors use total counts".into());
        }
        let raw = DMatrix::from_fn(filtered.n_samples(), filtered.n_variables(), |j, i| {
            filtered.get(j, i) as f64 / factors[j]
        });
        let rounded = raw.map(|v| v.round() as u64);
        filtered = CountMatrix::new(
            rounded,
            filtered.variable_names().to_vec(),
            filtered.sample_ids().to_vec(),
        )?;
        manifest.size_factor_method = Some(method);
        manifest.size_factors = Some(factors);
        adjusted = Some(raw);
    }
    Ok(Preprocessed {
        data: filtered,
        adjusted,
        manifest,
    })
}

use serde::{Deserialize, Serialize};

use super::graphs::GraphStructure;
use crate::error::{Error, Result};
use crate::glasso::RegularizationPath;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Position on the method's penalty grid.
    pub lambda_index: usize,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// In path order (decreasing penalty).
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// Rates of an edge set against the truth.
pub fn rates(support: &[(usize, usize)], truth: &GraphStructure) -> (f64, f64) {
    let hits = support.iter().filter(|&&(i, k)| truth.contains(i, k)).count();
    let negatives = truth.max_edges() - truth.edge_count();
    let tpr = hits as f64 / truth.edge_count() as f64;
    let fpr = if negatives == 0 {
        0.0
    } else {
        (support.len() - hits) as f64 / negatives as f64
    };
    (fpr, tpr)
}

/// Trapezoid area under the curve through (0,0), the points and (1,1).
/// Points are sorted by FPR and TPR is carried forward as a running maximum.
pub fn auc(points: &[(f64, f64)]) -> f64 {
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(points.len() + 2);
    pts.push((0.0, 0.0));
    pts.extend_from_slice(points);
    pts.push((1.0, 1.0));
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut area = 0.0;
    let mut prev = pts[0];
    let mut best = prev.1;
    for &(f, t) in &pts[1..] {
        best = best.max(t);
        area += (f - prev.0) * 0.5 * (best + prev.1);
        prev = (f, best);
    }
    area
}

/// `index_of` maps path positions to positions on the original penalty grid.
pub fn score_roc_indexed(path: &RegularizationPath, index_of: &[usize], truth: &GraphStructure) -> Result<RocCurve> {
    if truth.edge_count() == 0 {
        return Err(Error::InvalidInput("true graph has no edges".into()));
    }
    if path.input.dim() != truth.p {
        return Err(Error::InvalidInput(format!(
            "path has {} variables but the true graph has {}",
            path.input.dim(),
            truth.p
        )));
    }
    let points: Vec<RocPoint> = path
        .estimates
        .iter()
        .zip(index_of)
        .map(|(est, &lambda_index)| {
            let (fpr, tpr) = rates(&est.support, truth);
            RocPoint { lambda_index, fpr, tpr }
        })
        .collect();
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.fpr, p.tpr)).collect();
    Ok(RocCurve { auc: auc(&pairs), points })
}

pub fn score_roc(path: &RegularizationPath, truth: &GraphStructure) -> Result<RocCurve> {
    let index: Vec<usize> = (0..path.len()).collect();
    score_roc_indexed(path, &index, truth)
}

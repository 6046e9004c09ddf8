use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glasso::PrecisionEstimate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEdge {
    pub var_i: String,
    pub var_k: String,
    pub omega_ik: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeDegree {
    pub name: String,
    pub degree: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub flags: Vec<String>,
    /// Wall-clock timings are kept in a separate file so that reruns produce
    /// identical reports.
    pub timings_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkReport {
    pub lambda: f64,
    pub lambda_index: usize,
    pub ebic: Option<f64>,
    pub n_samples: usize,
    /// Sorted by |omega_ik|, largest first.
    pub edges: Vec<ReportEdge>,
    /// One entry per variable, in data order.
    pub degrees: Vec<NodeDegree>,
    /// Most connected variables: degree descending, then name.
    pub top: Vec<NodeDegree>,
    pub metadata: RunMetadata,
}

pub fn top_by_degree(degrees: &[NodeDegree], k: usize) -> Vec<NodeDegree> {
    let mut sorted = degrees.to_vec();
    sorted.sort_by(|a, b| b.degree.cmp(&a.degree).then_with(|| a.name.cmp(&b.name)));
    sorted.truncate(k);
    sorted
}

impl NetworkReport {
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        estimate: &PrecisionEstimate,
        names: &[String],
        lambda_index: usize,
        ebic: Option<f64>,
        n_samples: usize,
        top_k: usize,
        metadata: RunMetadata,
    ) -> Self {
        let mut degree = vec![0usize; names.len()];
        for &(i, k) in &estimate.support {
            degree[i] += 1;
            degree[k] += 1;
        }
        let degrees: Vec<NodeDegree> = names
            .iter()
            .zip(degree)
            .map(|(name, degree)| NodeDegree {
                name: name.clone(),
                degree,
            })
            .collect();
        let edges = estimate
            .ranked_edges(names)
            .into_iter()
            .map(|(a, b, w)| ReportEdge {
                var_i: a.to_string(),
                var_k: b.to_string(),
                omega_ik: w,
            })
            .collect();
        Self {
            lambda: estimate.lambda,
            lambda_index,
            ebic,
            n_samples,
            edges,
            top: top_by_degree(&degrees, top_k),
            degrees,
            metadata,
        }
    }

    pub fn degree_sum(&self) -> usize {
        self.degrees.iter().map(|d| d.degree).sum()
    }

    pub fn check_consistent(&self) -> Result<()> {
        if self.degree_sum() != 2 * self.edges.len() {
            return Err(Error::InvalidInput(format!(
                "report degrees sum to {} for {} edges",
                self.degree_sum(),
                self.edges.len()
            )));
        }
        Ok(())
    }

    pub fn with_top_k(mut self, k: usize) -> Self {
        self.top = top_by_degree(&self.degrees, k);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("network report: {e}")))?;
        r.check_consistent()?;
        Ok(r)
    }

    /// Plain-text summary of the most connected variables.
    pub fn top_table(&self) -> String {
        let width = self.top.iter().map(|d| d.name.len()).max().unwrap_or(4).max(8);
        let mut s = format!(
            "{} edges among {} variables (lambda = {:.6})\n{:<4} {:<width$} degree\n",
            self.edges.len(),
            self.degrees.len(),
            self.lambda,
            "rank",
            "variable"
        );
        for (r, d) in self.top.iter().enumerate() {
            let _ = writeln!(s, "{:<4} {:<width$} {}", r + 1, d.name, d.degree);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn estimate() -> PrecisionEstimate {
        let omega = DMatrix::from_row_slice(4, 4, &[
            2.0, -0.5, 0.2, 0.0,
            -0.5, 2.0, 0.0, 0.0,
            0.2, 0.0, 2.0, 0.0,
            0.0, 0.0, 0.0, 2.0,
        ]);
        PrecisionEstimate {
            support: vec![(0, 1), (0, 2)],
            omega,
            lambda: 0.1,
            objective: 0.0,
        }
    }

    fn meta() -> RunMetadata {
        RunMetadata {
            version: "t".into(),
            config_hash: "h".into(),
            seed: 1,
            flags: vec![],
            timings_file: None,
        }
    }

    #[test]
    fn degrees_match_edges() {
        let names: Vec<String> = ["d", "c", "b", "a"].iter().map(|s| s.to_string()).collect();
        let r = NetworkReport::build(&estimate(), &names, 3, None, 10, 3, meta());
        r.check_consistent().unwrap();
        assert_eq!(r.edges[0].var_i, "d");
        assert_eq!(r.edges[0].omega_ik, -0.5);
        let top: Vec<(&str, usize)> = r.top.iter().map(|d| (d.name.as_str(), d.degree)).collect();
        assert_eq!(top, [("d", 2), ("b", 1), ("c", 1)]);
        assert!(r.top_table().contains("d"));
        assert_eq!(NetworkReport::from_json(&r.to_json()).unwrap(), r);
    }
}

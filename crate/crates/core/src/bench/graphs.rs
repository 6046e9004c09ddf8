use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkKind {
    Hub,
    ScaleFree,
    Random,
}

impl NetworkKind {
    pub const ALL: [NetworkKind; 3] = [NetworkKind::Hub, NetworkKind::ScaleFree, NetworkKind::Random];

    pub fn name(self) -> &'static str {
        match self {
            NetworkKind::Hub => "hub",
            NetworkKind::ScaleFree => "scale_free",
            NetworkKind::Random => "random",
        }
    }

    /// Precision diagonal used in the simulation study.
    pub fn default_diagonal(self) -> f64 {
        match self {
            NetworkKind::Random => 3.0,
            _ => 1.0,
        }
    }
}

impl fmt::Display for NetworkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NetworkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "hub" => Ok(NetworkKind::Hub),
            "scale_free" | "scalefree" => Ok(NetworkKind::ScaleFree),
            "random" => Ok(NetworkKind::Random),
            other => Err(Error::InvalidParameter(format!("unknown network kind `{other}`"))),
        }
    }
}

/// Undirected simple graph on `0..p`; pairs are stored as `(i, k)` with `i < k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStructure {
    pub p: usize,
    pub edges: BTreeSet<(usize, usize)>,
    pub kind: NetworkKind,
}

impl GraphStructure {
    pub fn new(p: usize, pairs: impl IntoIterator<Item = (usize, usize)>, kind: NetworkKind) -> Result<Self> {
        let mut edges = BTreeSet::new();
        for (a, b) in pairs {
            if a == b || a >= p || b >= p {
                return Err(Error::InvalidInput(format!("invalid edge ({a}, {b}) for p = {p}")));
            }
            if !edges.insert((a.min(b), a.max(b))) {
                return Err(Error::InvalidInput(format!("duplicate edge ({a}, {b})")));
            }
        }
        Ok(Self { p, edges, kind })
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, i: usize, k: usize) -> bool {
        self.edges.contains(&(i.min(k), i.max(k)))
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.p];
        for &(i, k) in &self.edges {
            d[i] += 1;
            d[k] += 1;
        }
        d
    }

    pub fn max_edges(&self) -> usize {
        self.p * self.p.saturating_sub(1) / 2
    }
}

/// `n_hubs` hub nodes chosen at random; every other node links to one hub
/// drawn uniformly.
pub fn gen_hub(p: usize, n_hubs: usize, seed: u64) -> Result<GraphStructure> {
    if n_hubs == 0 || n_hubs >= p {
        return Err(Error::InvalidParameter(format!("need 1 <= hubs < p, got {n_hubs} hubs for p = {p}")));
    }
    let mut rng = rng_from_seed(seed);
    let hubs = sample(&mut rng, p, n_hubs).into_vec();
    let mut is_hub = vec![false; p];
    for &h in &hubs {
        is_hub[h] = true;
    }
    let pairs: Vec<(usize, usize)> = (0..p)
        .filter(|&v| !is_hub[v])
        .map(|v| (v, hubs[rng.random_range(0..n_hubs)]))
        .collect();
    GraphStructure::new(p, pairs, NetworkKind::Hub)
}

/// Preferential attachment with one edge per new node.
pub fn gen_scale_free(p: usize, seed: u64) -> Result<GraphStructure> {
    if p < 2 {
        return Err(Error::InvalidParameter(format!("scale-free graph needs p >= 2, got {p}")));
    }
    let mut rng = rng_from_seed(seed);
    // each node appears once per incident edge, so a uniform draw is degree-weighted
    let mut endpoints = vec![0usize, 1];
    let mut pairs = vec![(0, 1)];
    for v in 2..p {
        let target = endpoints[rng.random_range(0..endpoints.len())];
        pairs.push((target, v));
        endpoints.push(target);
        endpoints.push(v);
    }
    GraphStructure::new(p, pairs, NetworkKind::ScaleFree)
}

/// Exactly `n_edges` distinct pairs drawn uniformly.
pub fn gen_random(p: usize, n_edges: usize, seed: u64) -> Result<GraphStructure> {
    let total = p * p.saturating_sub(1) / 2;
    if n_edges > total {
        return Err(Error::InvalidInput(format!(
            "{n_edges} edges requested but p = {p} allows at most {total}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let pairs = sample(&mut rng, total, n_edges).into_iter().map(|idx| pair_at(idx, p));
    GraphStructure::new(p, pairs, NetworkKind::Random)
}

/// Row-major enumeration of the strict upper triangle.
fn pair_at(mut idx: usize, p: usize) -> (usize, usize) {
    let mut i = 0;
    while idx >= p - 1 - i {
        idx -= p - 1 - i;
        i += 1;
    }
    (i, i + 1 + idx)
}

/// Default edge count for random graphs: one sixth of all pairs.
pub fn default_random_edges(p: usize) -> usize {
    p * p.saturating_sub(1) / 12
}

pub fn generate(kind: NetworkKind, p: usize, n_hubs: usize, n_edges: Option<usize>, seed: u64) -> Result<GraphStructure> {
    match kind {
        NetworkKind::Hub => gen_hub(p, n_hubs, seed),
        NetworkKind::ScaleFree => gen_scale_free(p, seed),
        NetworkKind::Random => gen_random(p, n_edges.unwrap_or_else(|| default_random_edges(p)), seed),
    }
}

/// Smallest eigenvalue a generated precision matrix is allowed to have.
pub const MIN_EIGENVALUE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedPrecision {
    pub omega: DMatrix<f64>,
    /// Amount added to every diagonal entry (0 when none was needed).
    pub inflation: f64,
    pub min_eigenvalue: f64,
}

impl GeneratedPrecision {
    pub fn final_diagonal(&self) -> f64 {
        self.omega[(0, 0)]
    }
}

/// `diag` on the diagonal and `edge_weight` with a random sign on each edge.
/// When the smallest eigenvalue falls below [`MIN_EIGENVALUE`] the diagonal
/// is shifted up to reach it.
pub fn graph_to_precision(g: &GraphStructure, diag: f64, edge_weight: f64, seed: u64) -> Result<GeneratedPrecision> {
    if !(diag > 0.0) || !diag.is_finite() {
        return Err(Error::InvalidParameter(format!("precision diagonal must be positive, got {diag}")));
    }
    if !edge_weight.is_finite() {
        return Err(Error::InvalidParameter(format!("edge weight must be finite, got {edge_weight}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut omega = DMatrix::from_diagonal_element(g.p, g.p, diag);
    for &(i, k) in &g.edges {
        let w = if rng.random_bool(0.5) { edge_weight } else { -edge_weight };
        omega[(i, k)] = w;
        omega[(k, i)] = w;
    }
    let min_eig = SymmetricEigen::new(omega.clone()).eigenvalues.min();
    let inflation = if min_eig < MIN_EIGENVALUE { MIN_EIGENVALUE - min_eig } else { 0.0 };
    for i in 0..g.p {
        omega[(i, i)] += inflation;
    }
    Ok(GeneratedPrecision {
        omega,
        inflation,
        min_eigenvalue: min_eig + inflation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn star_from_single_hub() {
        let g = gen_hub(4, 1, 7).unwrap();
        assert_eq!(g.edge_count(), 3);
        assert_eq!(*g.degrees().iter().max().unwrap(), 3);
    }

    #[test]
    fn hub_edge_counts() {
        let g = gen_hub(50, 3, 1).unwrap();
        assert_eq!(g.edge_count(), 47);
        let mut d = g.degrees();
        d.sort_unstable();
        assert_eq!(d[47..].iter().sum::<usize>(), 47);
        assert!(d[..47].iter().all(|&x| x == 1));
        assert_eq!(g, gen_hub(50, 3, 1).unwrap());
        assert!(gen_hub(5, 5, 1).is_err());
    }

    #[test]
    fn scale_free_is_a_tree_with_hubs() {
        assert_eq!(gen_scale_free(2, 3).unwrap().edges.len(), 1);
        let mut with_hub = 0;
        for seed in 0..1000 {
            let g = gen_scale_free(50, seed).unwrap();
            assert_eq!(g.edge_count(), 49);
            if *g.degrees().iter().max().unwrap() >= 3 {
                with_hub += 1;
            }
        }
        assert!(with_hub >= 990, "{with_hub}");
        assert_eq!(gen_scale_free(30, 9).unwrap(), gen_scale_free(30, 9).unwrap());
    }

    #[test]
    fn scale_free_is_connected() {
        let g = gen_scale_free(40, 4).unwrap();
        let mut seen = vec![false; 40];
        let mut stack = vec![0];
        while let Some(v) = stack.pop() {
            if std::mem::replace(&mut seen[v], true) {
                continue;
            }
            stack.extend(g.edges.iter().filter_map(|&(a, b)| match (a == v, b == v) {
                (true, _) => Some(b),
                (_, true) => Some(a),
                _ => None,
            }));
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn random_graph_sizes() {
        assert_eq!(gen_random(50, 204, 2).unwrap().edge_count(), 204);
        assert_eq!(gen_random(50, 0, 2).unwrap().edge_count(), 0);
        assert_eq!(gen_random(10, 45, 2).unwrap().edge_count(), 45);
        assert!(gen_random(10, 46, 2).is_err());
        assert_eq!(default_random_edges(50), 204);
    }

    #[test]
    fn precision_examples() {
        let empty = GraphStructure::new(4, [], NetworkKind::Random).unwrap();
        let gp = graph_to_precision(&empty, 1.0, 0.25, 0).unwrap();
        assert_eq!(gp.omega, DMatrix::identity(4, 4));
        assert_eq!(gp.inflation, 0.0);

        let single = GraphStructure::new(2, [(0, 1)], NetworkKind::Random).unwrap();
        let gp = graph_to_precision(&single, 1.0, 0.4, 3).unwrap();
        let mut ev: Vec<f64> = SymmetricEigen::new(gp.omega).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] - 0.6).abs() < 1e-12 && (ev[1] - 1.4).abs() < 1e-12);
    }

    #[test]
    fn large_hub_precision_is_repaired() {
        let g = gen_hub(50, 3, 11).unwrap();
        let gp = graph_to_precision(&g, 1.0, 0.25, 11).unwrap();
        assert!(gp.min_eigenvalue >= MIN_EIGENVALUE - 1e-9);
        assert!(gp.omega.clone().cholesky().is_some());
        assert!((gp.final_diagonal() - 1.0 - gp.inflation).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn generated_graphs_are_simple(p in 2usize..40, seed in any::<u64>(), frac in 0.0f64..1.0) {
            let hubs = 1 + (seed as usize) % (p - 1);
            let m = ((p * (p - 1) / 2) as f64 * frac) as usize;
            for g in [gen_hub(p, hubs, seed).unwrap(), gen_scale_free(p, seed).unwrap(), gen_random(p, m, seed).unwrap()] {
                prop_assert!(g.edges.iter().all(|&(i, k)| i < k && k < p));
            }
        }
    }
}

//! Graphical lasso along a penalty path on Gaussian data drawn from a hub
//! network, with the extended BIC choosing one fit.
//!
//! cargo run --release --example glasso_path -- [n] [p]

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use pln_graph::bench::graphs::{generate, graph_to_precision, NetworkKind};
use pln_graph::glasso::{ebic_select, fit_path, kkt_residual, lambda_grid, CovarianceInput};

fn main() -> pln_graph::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let n = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let p = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(20);

    let graph = generate(NetworkKind::Hub, p, 2, None, 3)?;
    let omega = graph_to_precision(&graph, NetworkKind::Hub.default_diagonal(), 0.25, 3)?.omega;
    let chol = omega.clone().try_inverse().expect("positive definite").cholesky().expect("positive definite");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let z = DMatrix::<f64>::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
    let x = z * chol.l().transpose();

    let input = CovarianceInput::from_data(&x)?;
    let grid = lambda_grid(&input, 30, 0.05)?;
    let path = fit_path(&input, &grid.lambdas, 1e-6)?;
    let pick = ebic_select(&path, 0.5, n, p)?;

    println!("true graph: {} edges", graph.edge_count());
    println!("{:>3} {:>9} {:>6} {:>6} {:>10} {:>9}", "k", "lambda", "edges", "true", "eBIC", "KKT");
    for (k, est) in path.estimates.iter().enumerate() {
        let hits = est.support.iter().filter(|&&(i, j)| graph.contains(i, j)).count();
        println!(
            "{:>3} {:>9.4} {:>6} {:>6} {:>10.2} {:>9.1e}{}",
            k,
            est.lambda,
            est.edge_count(),
            hits,
            pick.scores[k],
            kkt_residual(&est.omega, &input, est.lambda)?,
            if k == pick.index { "  <- eBIC" } else { "" }
        );
    }
    Ok(())
}

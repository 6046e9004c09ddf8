//! Starting values for the latent means and variances: plain moments, the
//! trend-shrunk variant with a fixed weight, and per-variable weights from
//! the bootstrap.
//!
//! cargo run --release --example initialize -- [n] [p]

use pln_graph::bench::sequencing_like_counts;
use pln_graph::init::{eb_gamma, fit_trend, mirna_shrink_init, mirna_shrink_init_per_variable, moment_init};

fn main() -> pln_graph::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let n = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(60);
    let p = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(12);

    let (data, truth) = sequencing_like_counts(n, p, 11)?;
    let sigma = truth.covariance();

    let moments = moment_init(&data)?;
    let trend = fit_trend(&data)?;
    let fixed = mirna_shrink_init(&data, &trend, 0.5)?;
    let eb = eb_gamma(&data, &trend, 200, 11)?;
    let adaptive = mirna_shrink_init_per_variable(&data, &trend, &eb.gamma)?;

    println!("trend direction ({:.3}, {:.3}) through ({:.2}, {:.2})", trend.pc[0], trend.pc[1], trend.center[0], trend.center[1]);
    println!("{:>4} {:>7} {:>7} {:>7} {:>7} | {:>6} {:>6} {:>6} {:>6} {:>6}", "var", "beta", "mom", "g=0.5", "EB", "sigma2", "mom", "g=0.5", "EB", "gamma");
    for i in 0..p {
        println!(
            "{:>4} {:>7.2} {:>7.2} {:>7.2} {:>7.2} | {:>6.2} {:>6.2} {:>6.2} {:>6.2} {:>6.3}",
            i,
            truth.beta()[i],
            moments.beta0[i],
            fixed.beta0[i],
            adaptive.beta0[i],
            sigma[(i, i)],
            moments.sigma0_diag[i],
            fixed.sigma0_diag[i],
            adaptive.sigma0_diag[i],
            eb.gamma[i],
        );
    }
    let err = |est: &pln_graph::InitialEstimate| -> f64 {
        (0..p).map(|i| (est.sigma0_diag[i] - sigma[(i, i)]).abs()).sum::<f64>() / p as f64
    };
    println!(
        "mean |sigma2 error|: moments {:.3}, fixed weight {:.3}, bootstrap weights {:.3}",
        err(&moments),
        err(&fixed),
        err(&adaptive)
    );
    if !eb.flagged.is_empty() {
        println!("degenerate bootstrap for {:?}", eb.flagged);
    }
    Ok(())
}

//! Posterior means of the latent log-abundance for a few counts and priors,
//! then the whole-matrix transform with its two covariance summaries.
//!
//! cargo run --release --example posterior_transform

use pln_graph::bench::sequencing_like_counts;
use pln_graph::init::moment_init;
use pln_graph::posterior::{
    log_plus, posterior_mode, posterior_moments, transform_matrix, CovarianceKind, DEFAULT_LARGE_COUNT_THRESHOLD,
    DEFAULT_REL_TOL,
};

fn main() -> pln_graph::Result<()> {
    println!("{:>6} {:>5} {:>6} {:>8} {:>8} {:>8} {:>8}", "y", "beta", "sigma2", "log(y)", "mean", "sd", "mode");
    for &(y, beta, sigma2) in &[(0u64, 1.0, 1.0), (1, 1.0, 1.0), (3, 1.0, 0.25), (3, 1.0, 4.0), (40, 2.0, 1.0), (20_000, 9.0, 1.0)] {
        let m = posterior_moments(y, beta, sigma2, DEFAULT_REL_TOL)?;
        let mode = posterior_mode(y, beta, sigma2)?;
        println!(
            "{:>6} {:>5.1} {:>6.2} {:>8.3} {:>8.3} {:>8.3} {:>8.3}",
            y,
            beta,
            sigma2,
            log_plus(y),
            m.mean,
            m.variance.sqrt(),
            mode
        );
    }

    let (data, _) = sequencing_like_counts(100, 8, 5)?;
    let est = moment_init(&data)?;
    let t = transform_matrix(&data, &est, DEFAULT_LARGE_COUNT_THRESHOLD, DEFAULT_REL_TOL)?;
    let counts = t.method_counts();
    println!(
        "\n100 x 8 matrix: {} cells by quadrature, {} by the mode",
        counts.mean_quadrature, counts.mode_newton
    );
    let emp = t.covariance(CovarianceKind::Empirical)?;
    let exp = t.covariance(CovarianceKind::ExpectedScatter)?;
    println!("{:>4} {:>10} {:>10}", "var", "empirical", "expected");
    for i in 0..data.n_variables() {
        println!("{:>4} {:>10.4} {:>10.4}", i, emp.s()[(i, i)], exp.s()[(i, i)]);
    }
    Ok(())
}

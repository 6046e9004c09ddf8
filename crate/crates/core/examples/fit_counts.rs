//! End-to-end fit: write a count file, run the pipeline on it and print the
//! most connected variables.
//!
//! cargo run --release --example fit_counts -- [n] [p] [output_dir]

use std::time::Instant;

use pln_graph::bench::sequencing_like_counts;
use pln_graph::pipeline::{run_fit, write_counts, PipelineConfig};

fn main() -> pln_graph::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let n = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let p = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(40);
    let out = args.get(3).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("plngraph-example"));

    let (data, _) = sequencing_like_counts(n, p, 7)?;
    let zeros = data.values().iter().filter(|&&v| v == 0).count() as f64 / (n * p) as f64;
    let max = data.values().iter().max().copied().unwrap_or(0);
    println!("{n} x {p} counts, {:.1}% zeros, largest {max}", 100.0 * zeros);

    std::fs::create_dir_all(&out).map_err(|e| pln_graph::Error::Config(e.to_string()))?;
    let input = out.join("counts.csv");
    let file = std::fs::File::create(&input).map_err(|e| pln_graph::Error::Config(e.to_string()))?;
    write_counts(&data, file)?;

    let mut config = PipelineConfig {
        input: Some(input),
        output_dir: out.join("fit"),
        ..PipelineConfig::default()
    };
    config.preprocess.min_variance_quantile = 0.0;
    let start = Instant::now();
    let report = run_fit(&config)?;
    print!("{}", report.top_table());
    println!("fit took {:.1}s; outputs in {}", start.elapsed().as_secs_f64(), config.output_dir.display());
    Ok(())
}

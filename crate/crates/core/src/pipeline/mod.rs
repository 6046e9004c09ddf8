//! End-to-end runs: count files in, network report and intermediates out.

pub mod config;
pub mod io;
pub mod preprocess;
pub mod report;
pub mod run;

pub use config::{merge_settings, InitializerConfig, InitializerKind, PathConfig, PipelineConfig};
pub use io::{ingest, parse_counts, write_counts, Orientation};
pub use preprocess::{preprocess, PreprocessConfig, PreprocessManifest, Preprocessed};
pub use report::{NetworkReport, NodeDegree, ReportEdge, RunMetadata};
pub use run::{files, initial_estimate, run_bench, run_fit, run_init, run_transform, BenchRunConfig};

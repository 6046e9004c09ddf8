//! Sparse conditional-dependence networks for multivariate count data under
//! the Poisson log-normal graphical model.
//!
//! The estimation procedure has three steps:
//!
//! 1. a diagonal starting estimate of the latent means and variances
//!    ([`init::moment_init`] or the trend-shrunk [`init::mirna_shrink_init`]);
//! 2. every count is replaced by the posterior mean of its latent Gaussian
//!    coordinate ([`posterior::transform_matrix`]);
//! 3. the graphical lasso is run on the transformed data
//!    ([`glasso::fit_path`], [`glasso::ebic_select`]).
//!
//! [`bench`] holds the simulation study (graph generators, competing
//! transformations, ROC scoring), [`oracle`] the exact small-dimension
//! likelihood used to check that the one-step procedure increases the
//! penalized likelihood, and [`pipeline`] the file-based end-to-end runner
//! behind the `plngraph` binary.

pub mod bench;
pub mod error;
pub mod glasso;
pub mod init;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod posterior;
pub mod quadrature;
pub mod rng;

pub use error::{Error, Result};
pub use glasso::{CovarianceInput, PrecisionEstimate, RegularizationPath};
pub use init::{InitialEstimate, MeanVarianceTrend};
pub use model::{CountMatrix, PlnParams};
pub use posterior::TransformedMatrix;

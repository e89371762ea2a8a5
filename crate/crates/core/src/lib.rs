//! Association testing for longitudinal phenotypes via functional data analysis.
//!
//! The pipeline: assemble sparse, noisy per-subject observations into smooth
//! trajectories ([`smoothing`]), fit functional linear models pointwise
//! ([`flm`]), test covariate groups through the reduction in summed squared
//! L² norms with weighted chi-square null distributions ([`assoc`], [`qform`]),
//! and run the whole thing at genome-scan scale ([`scan`]). A simulation
//! engine ([`simgen`]) generates Matérn Gaussian error curves and SNP-like
//! covariates for calibration and power studies.

pub mod assoc;
pub mod error;
pub mod fnspace;
pub mod flm;
pub mod io;
pub mod qform;
pub mod scan;
pub mod simgen;
pub mod smoothing;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

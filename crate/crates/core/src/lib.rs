//! Variance-based global sensitivity analysis with sample-based estimators
//! of the total sensitivity index.
//!
//! The crate is organised bottom-up:
//!
//! - [`qrng`]: Sobol' LP-tau points, column randomisation and L2 discrepancy.
//! - [`design`]: asymmetric and symmetric n-matrix run schedules, elementary
//!   effect pairs and budget accounting.
//! - [`estimators`]: the Šaltenis (Jansen) squared-difference estimator and
//!   the correlation-based estimators, for `T_j` and `S_j`.
//! - [`models`]: the Sobol' G test function with its analytic indices, small
//!   oracle models and a batch-file bridge to external simulators.
//! - [`adaptive`]: Russian-roulette allocation of total-effect evaluations.
//! - [`harness`]: repeated randomised MAE-versus-cost benchmarks.

pub mod adaptive;
pub mod design;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod io;
pub mod models;
pub mod qrng;

pub use error::{GsaError, Result};

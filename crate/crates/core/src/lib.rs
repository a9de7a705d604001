//! Clustering of matrix-valued observations with penalized mixtures of
//! matrix normal distributions.
//!
//! The crate is organized bottom-up:
//!
//! - [`matnorm`]: matrix normal log-density, sampling and Kronecker covariance.
//! - [`flipflop`]: (weighted) maximum likelihood of `(M, U, V)` by alternating updates.
//! - [`mixture`]: the penalized EM engine (L1, squared-Frobenius and nuclear penalties).
//! - [`modelsel`]: cross-validated penalized likelihood for choosing `k`.
//! - [`evalgen`]: simulation scenarios, ARI/accuracy and the k-means baseline.
//! - [`cli`]: dataset and model files plus the command implementations behind `matmix`.

// Guards are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod evalgen;
pub mod flipflop;
pub mod linalg;
pub mod matnorm;
pub mod mixture;
pub mod modelsel;

pub use error::{Error, Result};
pub use matnorm::{ComponentParams, MatrixStack};
pub use mixture::{FitConfig, FitReport, MixtureModel, PenaltyKind, PenaltySpec};

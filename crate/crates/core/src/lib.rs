//! Reproducing-kernel Hilbert space toolkit.
//!
//! The crate covers finite-dimensional kernel constructions and minimum-norm
//! problems, kernel mean embeddings and covariance operators in Gram-matrix form,
//! independence and conditional-independence measures (HSIC and its sparse
//! recursive variant, conditional Hilbert-Schmidt norms), kernel Bayes filtering
//! with a fixed-point pre-image decoder, and the online kRLS / kLMS filters.
//!
//! Matrices are [`faer::Mat<f64>`]; sample sets are slices of points, each point
//! a `Vec<f64>` (or anything that is `AsRef<[f64]>`).

// `!(x > 0.0)` guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod conditional;
pub mod data;
pub mod embeddings;
mod error;
pub mod experiments;
pub mod finite_rkhs;
pub mod independence;
pub mod kbr;
pub mod kernels;
pub(crate) mod linalg;
pub mod rng;

pub use error::{Error, Result};
pub use faer;
pub use kernels::{KernelFamily, KernelSpec};

//! Mixed-membership estimation for third-order tensors.
//!
//! The pipeline: diagonal-deleted spectral initialization, orthogonal
//! iteration over the three matricizations, then successive projection on the
//! factor rows to recover row-stochastic membership matrices per mode.  A
//! sweep harness reproduces the synthetic error-scaling experiments.

pub mod error;
pub mod eval;
pub mod experiment;
pub mod hooi;
pub mod linalg;
pub mod model;
pub mod rank;
pub mod spa;
pub mod tensor;

pub use nalgebra;

pub use error::{Error, Result};
pub use tensor::Tensor3;

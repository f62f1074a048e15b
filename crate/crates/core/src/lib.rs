//! Compressed Bayesian tensor regression.
//!
//! Tensor covariates are compressed with generalized tensor random
//! projections, a Bayesian tensor regression is fitted on the compressed
//! data by Gibbs sampling, and several independent projections are combined
//! by Bayesian model averaging.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod distributions;
pub mod ensemble;
pub mod error;
pub mod gibbs;
pub mod jl;
pub mod linalg;
pub mod projection;
pub mod rng;
pub mod simlab;
pub mod tensor;
pub mod timing;

pub use error::{Error, Result};
pub use projection::{build_gtrp, GtrpSpec, ProjectionDesign};
pub use tensor::{DenseTensor, MarginSet};

//! Outlier detection for asymmetric signal-plus-noise matrix pairs.
//!
//! Two noisy observations `H1 = S + Σ X1` and `H2 = S + Σ X2` of a low-rank
//! signal `S` are combined through the Hermitian-free linearization
//! `Y = [[0, H1], [H2^T, 0]]`. Signal strengths above the detection threshold
//! produce near-real outlier eigenvalues of `Y` that a noise spike in `Σ`
//! cannot imitate, unlike singular values of a single observation.

pub mod detector;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod sampler;
pub mod spectrum;
pub mod theory;

pub use error::{Error, Result};

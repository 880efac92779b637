//! Multi-image motion segmentation cast as synchronization of binary
//! matrices and compiled into QUBO form.
//!
//! Pairwise (relative) segmentations `Z_ij` between images are the input.
//! The absolute segmentation `X` is recovered by minimizing the consistency
//! error `Σ ||Z_ij - X_i X_jᵀ||²` through one of two QUBOs:
//!
//! * **v1**: dense objective `-I_d ⊗ (2Z - 1)` plus a one-motion-per-point
//!   penalty;
//! * **v2**: sparse objective `-I_d ⊗ Z` plus the same penalty and a
//!   points-per-motion penalty (requires the motion counts).
//!
//! QUBOs are generic over [`Scalar`]; the aliases below cover the common
//! cases.

pub mod error;
pub mod metrics;
pub mod problem;
pub mod qubo;
pub mod sampler;
pub mod scalar;
pub mod spectral;
pub mod sweep;
pub mod synthetic;

pub use error::{Error, Result};
pub use problem::{BinaryMatrix, BitAssignment, Labeling, MotionProblem, PartialSegmentation};
pub use qubo::{FillMode, LinearSystem, QuboInstance, SymMatrix, Variant};
pub use sampler::{AnnealParams, Sample, SampleSet};
pub use scalar::Scalar;

pub use num_rational::Rational64;

/// QUBO with `f64` coefficients, the form every sampler consumes.
pub type Qubo = QuboInstance<f64>;
/// Single-precision QUBO.
pub type Qubo32 = QuboInstance<f32>;
/// Exact QUBO over rationals; penalty weights such as 27.5 or 3.2 stay exact.
pub type ExactQubo = QuboInstance<Rational64>;
/// Integer QUBO, enough for the unpenalized objectives and integer weights.
pub type IntQubo = QuboInstance<i64>;

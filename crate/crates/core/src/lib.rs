//! Multiclass data description via empirical kernel Mahalanobis distance
//! (MDD-KM), together with the surrounding pieces needed to run it as an
//! audio event classification system:
//!
//! - [`kernels`]: squared-exponential kernel, regularized Gram matrices,
//!   conditioning-driven regularization selection, kernel centering, and an
//!   eigendecomposition-based kernel Mahalanobis oracle.
//! - [`model`]: MDD-KM training (GP negative log marginal likelihood against
//!   a polynomial target) and per-class uncertainty scoring. One-class GP
//!   classification is the single-class special case.
//! - [`hlds`]: hierarchical linear dynamical system front end: DCT-magnitude
//!   sliding windows filtered by an augmented-state Kalman filter; the top
//!   layer of the posterior mean is the feature vector.
//! - [`pknn`]: possibilistic K-nearest-neighbor baseline with SOM-derived
//!   class prototypes.
//! - [`decision`]: score transform, threshold selection, and the rule-based
//!   segmentation layer that turns soft score tracks into labeled segments
//!   (including out-of-distribution).
//! - [`eval`]: confusion matrices, macro F-scores at window and note
//!   granularity, the multi-seed experiment loop, and a paired Wilcoxon
//!   signed-rank test.
//! - [`synth`]: deterministic synthetic note corpus generator.
//!
//! All randomness is seeded (ChaCha8), all artifacts are byte-reproducible
//! per seed.

pub mod config;
pub mod decision;
pub mod error;
pub mod eval;
pub mod hlds;
pub mod kernels;
pub mod model;
pub mod pipeline;
pub mod pknn;
pub mod synth;
pub mod wav;

pub use error::{Error, Result};

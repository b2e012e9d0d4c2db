//! Compaction, ranking, pruning and densification of 3D Gaussian splat clouds.
//!
//! The pipeline ranks splats by how often they cover structurally wrong
//! pixels across views, prunes by a budgeted inverse-importance sampler,
//! merges redundant splats block-wise with hard-assignment optimal transport
//! and moment matching, and splits deficient splats into two moment-matched
//! children.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod covariance;
pub mod densify;
pub mod error;
pub mod gaussian;
pub mod io;
pub mod partition;
pub mod ranking;
pub mod render;
pub mod transport;

pub use covariance::{
    build_covariance, eigendecompose_sym3, principal_axis, sqrt_covariance, Covariance3, SymEigen,
};
pub use error::{Error, Result};
pub use gaussian::{GaussianCloud, GaussianPrimitive, ScoreChannels};

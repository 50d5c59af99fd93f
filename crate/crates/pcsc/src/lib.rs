//! Lossy attribute codec for voxelized point clouds.
//!
//! The codec projects point-sampled attributes onto a multiresolution
//! B-spline basis adapted to the occupied voxels, separates each level into
//! a coarse approximation and orthogonal detail, quantizes and entropy-codes
//! the coefficients, and reconstructs by running the transform in reverse.
//! All linear algebra on the irregular point set is expressed through sparse
//! level operators plus short fixed-length iterative solvers, so encode and
//! decode cost stays linear in the number of occupied voxels.

pub mod bitstream;
pub mod cloud;
pub mod codec;
pub mod config;
pub mod color;
pub mod error;
pub mod hierarchy;
pub mod metrics;
pub mod ply;
pub mod prediction;
pub mod rd;
pub mod rlgr;
pub mod solvers;
pub mod transform;

pub use error::{Error, Result};

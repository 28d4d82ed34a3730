//! Manifold filter-combine networks on point clouds.
//!
//! The crate builds epsilon and k-NN graphs from sampled points, assembles
//! scaled graph Laplacians that approximate a weighted manifold Laplacian,
//! applies spectral filters through a truncated eigenbasis or Chebyshev
//! recurrences, and runs multi-layer filter/combine/cross-filter networks.
//! The [`sphere`] module supplies analytic ground truth on the unit sphere
//! and [`harness`] measures discretization error against it.

pub mod error;
pub mod graph;
pub mod harness;
pub mod mfcn;
pub mod pointcloud;
pub mod rng;
pub mod spectral;
pub mod sphere;
pub mod stats;

pub use error::{Error, Result};

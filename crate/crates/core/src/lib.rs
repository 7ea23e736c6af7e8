//! Linear hyperspectral unmixing with a graph Laplacian regularizer and a
//! nonnegative group-lasso penalty, solved by ADMM.
//!
//! The crate is organised along the pipeline:
//!
//! * [`datamodel`] – cubes, endmember libraries, abundance matrices and their file formats.
//! * [`synthgen`] – synthetic block scenes with ground truth and Gaussian noise at a given SNR.
//! * [`graph`] – pixel affinity graphs, Laplacians and the Laplacian quadratic form.
//! * [`partition`] – normalized spectral partitioning into independently solvable subgraphs.
//! * [`solver`] – the ADMM solver (and FCLS as its unregularized special case).
//! * [`eval`] – RMSE and PGM exports.

pub mod datamodel;
pub mod error;
pub mod eval;
pub mod graph;
#[cfg(any(test, feature = "oracles"))]
pub mod oracle;
pub mod partition;
pub mod solver;
pub mod synthgen;

pub use datamodel::{AbundanceMatrix, EndmemberLibrary, HyperCube, ImageGeometry};
pub use error::{Error, Result};

//! Edge-feature enhanced graph neural networks.
//!
//! The crate is `no_std` and only needs `alloc`. It carries the numerical
//! pieces: compressed-row sparse channels, the row / symmetric / doubly
//! stochastic edge normalizations, attention (`EGNN(A)`) and convolution
//! (`EGNN(C)`) layers with hand-written backward passes, dataset encoding,
//! losses, Adam and the training loops. File formats, loaders and the CLI
//! live in the `egnn` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod dense;
pub mod error;
pub mod layers;
pub mod model;
pub mod normalize;
pub mod rng;
pub mod sparse;
pub mod train;

pub use dense::{Dense, NodeFeatureMatrix};
pub use error::{Error, Result};
pub use normalize::NormScheme;
pub use sparse::{EdgeTensor, SparseMatrix};

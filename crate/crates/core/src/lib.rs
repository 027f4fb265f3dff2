//! Nearest-neighbor Gaussian process regression with a fully augmented
//! latent field: orderings and parent sets, the sparse Vecchia factor,
//! moral-graph colorings, the Gibbs sampler and its diagnostics.

pub mod bench;
pub mod diagnostics;
pub mod error;
pub mod geo;
pub mod graph;
mod kdtree;
pub mod rng;
pub mod sampler;
pub mod sim;
pub mod vecchia;

pub use error::{NngpError, Result};

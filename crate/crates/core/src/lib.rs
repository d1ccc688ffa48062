//! Certified total-variation error bounds for last-column-block-augmented
//! truncations of block-monotone Markov chains under geometric drift.

pub mod block_matrix;
pub mod coupling;
pub mod drift_bounds;
pub mod error;
pub mod gig1;
pub mod io;

pub use block_matrix::{BlockStochasticMatrix, BlockVector};
pub use error::{Error, Result};

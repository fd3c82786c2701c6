//! Random-walk local times on lattices and conductance networks, their exact
//! Green operators, discrete Gaussian free fields, the Dynkin-type
//! isomorphisms linking the two, thick points, and the limit laws of the
//! maximal local time in dimension three and above.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifact;
pub mod config;
pub mod error;
pub mod experiment;
pub mod gff;
pub mod green;
pub mod isomorph;
pub mod lattice;
pub mod limits;
pub mod rng;
pub mod stats;
pub mod thick;
pub mod walker;

pub use error::{Error, Result};

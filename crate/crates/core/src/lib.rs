//! Deterministic data-side tooling for vision-and-language navigation:
//! dataset handling, instruction noising and mismatching, unigram+object
//! synthetic annotation, navigation metrics, and training-dynamics maps.
//!
//! Every stochastic operation takes an explicit `u64` seed and draws from
//! the reference generator in [`rng`], so identical inputs and seeds give
//! byte-identical outputs.

pub mod cartography;
pub mod corpus;
pub mod envgraph;
pub mod error;
pub mod metrics;
pub mod noising;
pub mod rng;
#[cfg(test)]
pub(crate) mod testutil;
pub mod uogen;

pub use error::{Error, Result};

//! Privacy amplification accounting for the shuffle model.
//!
//! A local randomizer is summarized by three numbers: the ratio bound `p`,
//! the pairwise total-variation bound `beta` and the blanket ratio `q`. From
//! these the crate builds a pair of two-dimensional count distributions that
//! dominates the shuffled output, and evaluates their hockey-stick divergence
//! in time roughly linear in the number of users.
//!
//! Modules:
//! - [`numerics`]: log-space binomial masses, incomplete-beta tails,
//!   compensated sums and the planar-Laplace total variation.
//! - [`params`]: parameter types, the mechanism catalog, derivation from
//!   explicit matrices and parallel composition.
//! - [`divergence`]: fast and brute-force divergence of the dominating pair,
//!   plus the subsampling transform.
//! - [`bounds`]: binary-search upper/lower bounds and closed-form bounds.
//! - [`accountant`]: privacy curves, discrete privacy-loss distributions and
//!   FFT composition.
//! - [`cli`]: the `vr` command-line front end.

pub mod accountant;
pub mod bounds;
pub mod cli;
pub mod divergence;
pub mod error;
pub mod numerics;
pub mod params;

pub use error::{Error, Result};

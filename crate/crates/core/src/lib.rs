//! Nonparametric two-sample testing for low-rank random graphs.
//!
//! Given two graphs on possibly different vertex sets, each assumed to be a
//! generalized random dot product graph with the same signature `(p, q)`,
//! this crate tests whether their latent-position distributions agree up to
//! the unavoidable indefinite-orthogonal ambiguity:
//!
//! 1. embed each adjacency matrix with the adjacency spectral embedding
//!    ([`embed`]);
//! 2. rescale by the estimated sparsity factors;
//! 3. align the two point clouds over block-orthogonal matrices with an
//!    entropic optimal-transport / Procrustes alternation ([`ot`]);
//! 4. compare them with a kernel MMD U-statistic ([`mmd`]) and calibrate
//!    with a permutation null ([`hypothesis`]).
//!
//! [`models`] generates SBM, DCSBM and point-cloud graphs, and [`sim`]
//! drives the simulation experiments.

pub mod embed;
mod error;
pub mod hypothesis;
pub mod linalg;
pub mod mmd;
pub mod models;
pub mod ot;
pub mod rng;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};

//! Latent-position models and generalized random dot product graph sampling.
//!
//! A graph on `n` vertices is drawn by first fixing latent positions
//! `x_1, ..., x_n` in `R^d` and then connecting `i < j` independently with
//! probability `alpha * x_i^T I_{p,q} x_j`. Stochastic blockmodels (with or
//! without degree correction) are the special case where each `x_i` is a
//! scaled copy of one of `K` community vectors.

mod blockmodel;
mod config;
mod graph;
mod sampler;
mod signature;

pub use blockmodel::{block_spectrum, latent_from_blockmodel, BlockSpectrum, ThetaLaw};
pub use config::{LatentConfig, ModelKind};
pub use graph::Graph;
pub use sampler::{admissibility_check, probability_matrix, sample_graph, Admissibility};
pub(crate) use sampler::sample_from_probabilities;
pub use signature::Signature;

use nalgebra::DMatrix;

/// Latent positions drawn from a [`LatentConfig`] (or supplied directly).
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSample {
    /// `n x d` matrix, one latent vector per row.
    pub x: DMatrix<f64>,
    pub signature: Signature,
    /// Community of each vertex, when the sample came from a blockmodel.
    pub labels: Option<Vec<usize>>,
    /// Degree-correction factor of each vertex (DCSBM only).
    pub thetas: Option<Vec<f64>>,
}

impl LatentSample {
    pub fn from_points(x: DMatrix<f64>, signature: Signature) -> crate::Result<Self> {
        if x.ncols() != signature.d() {
            return Err(crate::Error::DimensionMismatch(format!(
                "points have {} columns but signature has d = {}",
                x.ncols(),
                signature.d()
            )));
        }
        Ok(Self {
            x,
            signature,
            labels: None,
            thetas: None,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }
}

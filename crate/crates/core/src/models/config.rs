//! TOML schema for latent-position models.
//!
//! ```toml
//! kind = "sbm"                 # "sbm", "dcsbm" or "point_cloud"
//! b = [[0.5, 0.8, 0.8],
//!      [0.8, 0.5, 0.8],
//!      [0.8, 0.8, 0.5]]
//! pi = [0.3333, 0.3333, 0.3334] # optional, uniform when omitted
//! sparsity = 1.0               # optional, defaults to 1
//!
//! # dcsbm only
//! theta = { law = "affine_uniform", scale = 0.5, offset = 0.5 }
//!
//! # point_cloud only: explicit latent rows plus their signature
//! # points = [[0.6, 0.1], [0.5, 0.3]]
//! # signature = { p = 1, q = 1 }
//! ```
//!
//! For block models the signature is derived from `b`; if one is given it
//! must agree.

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::blockmodel::{block_spectrum, latent_from_blockmodel, ThetaLaw};
use super::{sample_graph, Graph, LatentSample, Signature};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Sbm {
        b: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pi: Option<Vec<f64>>,
    },
    Dcsbm {
        b: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pi: Option<Vec<f64>>,
        theta: ThetaLaw,
    },
    PointCloud {
        points: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentConfig {
    #[serde(flatten)]
    pub model: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature: Option<Signature>,
    #[serde(default = "default_sparsity")]
    pub sparsity: f64,
}

fn default_sparsity() -> f64 {
    1.0
}

fn to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config("matrix rows must be nonempty and of equal length".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl LatentConfig {
    pub fn sbm(b: &DMatrix<f64>, pi: Option<Vec<f64>>) -> Self {
        Self {
            model: ModelKind::Sbm {
                b: matrix_rows(b),
                pi,
            },
            signature: None,
            sparsity: 1.0,
        }
    }

    pub fn dcsbm(b: &DMatrix<f64>, pi: Option<Vec<f64>>, theta: ThetaLaw) -> Self {
        Self {
            model: ModelKind::Dcsbm {
                b: matrix_rows(b),
                pi,
                theta,
            },
            signature: None,
            sparsity: 1.0,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn block_matrix(&self) -> Option<Result<DMatrix<f64>>> {
        match &self.model {
            ModelKind::Sbm { b, .. } | ModelKind::Dcsbm { b, .. } => Some(to_matrix(b)),
            ModelKind::PointCloud { .. } => None,
        }
    }

    fn probabilities(&self, k: usize) -> Vec<f64> {
        match &self.model {
            ModelKind::Sbm { pi: Some(pi), .. } | ModelKind::Dcsbm { pi: Some(pi), .. } => pi.clone(),
            _ => vec![1.0 / k as f64; k],
        }
    }

    /// Signature implied by the model (derived from `B` for block models).
    pub fn signature(&self) -> Result<Signature> {
        match &self.model {
            ModelKind::PointCloud { .. } => self
                .signature
                .ok_or_else(|| Error::Config("point_cloud models need an explicit signature".into())),
            _ => {
                let b = self.block_matrix().expect("block model")?;
                let derived = block_spectrum(&b)?.signature;
                match self.signature {
                    Some(s) if s != derived => Err(Error::Config(format!(
                        "declared signature {s} disagrees with the block matrix signature {derived}"
                    ))),
                    _ => Ok(derived),
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sparsity > 0.0 && self.sparsity <= 1.0) {
            return Err(Error::InvalidSparsity(self.sparsity));
        }
        let signature = self.signature()?;
        match &self.model {
            ModelKind::Sbm { b, .. } | ModelKind::Dcsbm { b, .. } => {
                super::blockmodel::validate_probabilities(&self.probabilities(b.len()), b.len())?;
                if let ModelKind::Dcsbm { theta, .. } = &self.model {
                    theta.validate()?;
                }
            }
            ModelKind::PointCloud { points } => {
                let x = to_matrix(points)?;
                if x.ncols() != signature.d() {
                    return Err(Error::Config(format!(
                        "points have {} columns, signature needs {}",
                        x.ncols(),
                        signature.d()
                    )));
                }
                let report = super::admissibility_check(&x, signature);
                if let Some((i, j, v)) = report.first_violation {
                    return Err(Error::Config(format!(
                        "points {i} and {j} have indefinite product {v} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Draw `n` latent positions. Point clouds with a different number of
    /// rows are resampled uniformly with replacement.
    pub fn sample_latent(&self, n: usize, seed: u64) -> Result<LatentSample> {
        match &self.model {
            ModelKind::Sbm { b, .. } => {
                let bm = to_matrix(b)?;
                latent_from_blockmodel(&bm, &self.probabilities(b.len()), n, None, seed)
            }
            ModelKind::Dcsbm { b, theta, .. } => {
                let bm = to_matrix(b)?;
                latent_from_blockmodel(&bm, &self.probabilities(b.len()), n, Some(theta), seed)
            }
            ModelKind::PointCloud { points } => {
                let x = to_matrix(points)?;
                let signature = self.signature()?;
                let x = if x.nrows() == n {
                    x
                } else {
                    let mut rng = rng::rng_from(seed);
                    let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..x.nrows())).collect();
                    DMatrix::from_fn(n, x.ncols(), |i, k| x[(rows[i], k)])
                };
                LatentSample::from_points(x, signature)
            }
        }
    }

    /// Latent sample plus a graph drawn from it, using independent seed streams.
    pub fn sample(&self, n: usize, seed: u64) -> Result<(LatentSample, Graph)> {
        let latent = self.sample_latent(n, rng::derive_seed(seed, &[0]))?;
        let graph = sample_graph(&latent, self.sparsity, rng::derive_seed(seed, &[1]))?;
        Ok((latent, graph))
    }

    /// Copy of a block model with `delta * I` added to `B`.
    pub fn with_diagonal_shift(&self, delta: f64) -> Result<Self> {
        let mut out = self.clone();
        match &mut out.model {
            ModelKind::Sbm { b, .. } | ModelKind::Dcsbm { b, .. } => {
                for (k, row) in b.iter_mut().enumerate() {
                    row[k] += delta;
                }
            }
            ModelKind::PointCloud { .. } => {
                return Err(Error::Config("diagonal shift only applies to block models".into()))
            }
        }
        out.signature = None;
        out.validate()?;
        Ok(out)
    }
}

fn matrix_rows(b: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..b.nrows()).map(|i| b.row(i).iter().copied().collect()).collect()
}

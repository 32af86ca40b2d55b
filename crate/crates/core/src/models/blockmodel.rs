use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LatentSample, Signature};
use crate::linalg::fix_column_signs;
use crate::{rng, Error, Result};

/// Relative threshold below which an eigenvalue of `B` counts as zero.
const RANK_TOL: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-12;

/// Distribution of the degree-correction factors of a DCSBM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ThetaLaw {
    /// Every factor equals one (plain SBM).
    #[default]
    Constant,
    /// `scale * U(0, 1) + offset`.
    AffineUniform { scale: f64, offset: f64 },
}

impl ThetaLaw {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ThetaLaw::Constant => 1.0,
            ThetaLaw::AffineUniform { scale, offset } => scale * rng.random::<f64>() + offset,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ThetaLaw::Constant => Ok(()),
            ThetaLaw::AffineUniform { scale, offset } => {
                if !(scale.is_finite() && offset.is_finite()) || offset < 0.0 || scale + offset < 0.0 {
                    Err(Error::InvalidParameter(format!(
                        "degree-correction law {scale} * U(0,1) + {offset} must be nonnegative"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// Community vectors of a blockmodel: rows of `V |D|^{1/2}` where
/// `B = V D V^T`, so that `nu_k^T I_{p,q} nu_l = B_kl`.
#[derive(Debug, Clone)]
pub struct BlockSpectrum {
    /// `K x d`, row `k` is the latent vector of community `k`.
    pub nu: DMatrix<f64>,
    /// Eigenvalues of `B`, positive block (descending) then negative block
    /// (descending magnitude).
    pub eigenvalues: Vec<f64>,
    pub signature: Signature,
}

pub(crate) fn validate_block_matrix(b: &DMatrix<f64>) -> Result<()> {
    if b.nrows() != b.ncols() || b.nrows() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "block matrix must be square and nonempty, got {} x {}",
            b.nrows(),
            b.ncols()
        )));
    }
    let k = b.nrows();
    for i in 0..k {
        for j in 0..k {
            let v = b[(i, j)];
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::BlockEntryOutOfRange { i, j, value: v });
            }
            if j > i && (v - b[(j, i)]).abs() > SYMMETRY_TOL {
                return Err(Error::NonSymmetricBlockMatrix(i, j));
            }
        }
    }
    Ok(())
}

pub(crate) fn validate_probabilities(pi: &[f64], k: usize) -> Result<()> {
    if pi.len() != k {
        return Err(Error::InvalidProbabilities(format!(
            "expected {k} entries, got {}",
            pi.len()
        )));
    }
    if let Some(bad) = pi.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(Error::InvalidProbabilities(format!("negative or non-finite entry {bad}")));
    }
    let total: f64 = pi.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidProbabilities(format!("entries sum to {total}, not 1")));
    }
    Ok(())
}

/// Eigendecompose `B` and derive its signature and community vectors.
pub fn block_spectrum(b: &DMatrix<f64>) -> Result<BlockSpectrum> {
    validate_block_matrix(b)?;
    let k = b.nrows();
    let eig = SymmetricEigen::new(b.clone());
    let max_abs = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let threshold = RANK_TOL * max_abs;
    let rank = eig.eigenvalues.iter().filter(|v| v.abs() > threshold).count();
    if max_abs == 0.0 || rank < k {
        return Err(Error::RankDeficient { rank, k });
    }

    let mut order: Vec<usize> = (0..k).collect();
    // positive block first, descending; then negatives by descending magnitude
    order.sort_by(|&a, &b| {
        let (la, lb) = (eig.eigenvalues[a], eig.eigenvalues[b]);
        match (la > 0.0, lb > 0.0) {
            (true, false) => std::cmp::Ordering::Less,
            (false, true) => std::cmp::Ordering::Greater,
            _ => lb.abs().total_cmp(&la.abs()).then(a.cmp(&b)),
        }
    });
    let p = order.iter().filter(|&&i| eig.eigenvalues[i] > 0.0).count();
    let signature = Signature::new(p, k - p)?;

    let mut vectors = DMatrix::from_fn(k, k, |r, c| eig.eigenvectors[(r, order[c])]);
    fix_column_signs(&mut vectors);
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut nu = vectors;
    for (c, lambda) in eigenvalues.iter().enumerate() {
        let s = lambda.abs().sqrt();
        nu.column_mut(c).scale_mut(s);
    }
    Ok(BlockSpectrum {
        nu,
        eigenvalues,
        signature,
    })
}

fn draw_category<R: Rng + ?Sized>(cumulative: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    cumulative
        .iter()
        .position(|&c| u < c)
        .unwrap_or(cumulative.len() - 1)
}

/// Draw `n` latent positions from a (degree-corrected) blockmodel.
///
/// Communities are i.i.d. from `pi`; row `i` of the result is
/// `theta_i * nu_{c(i)}` with `theta_i` drawn from `theta_law` (all ones when
/// `None`).
pub fn latent_from_blockmodel(
    b: &DMatrix<f64>,
    pi: &[f64],
    n: usize,
    theta_law: Option<&ThetaLaw>,
    seed: u64,
) -> Result<LatentSample> {
    let spectrum = block_spectrum(b)?;
    validate_probabilities(pi, b.nrows())?;
    if let Some(law) = theta_law {
        law.validate()?;
    }
    let mut cumulative: Vec<f64> = pi
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    if let Some(last) = cumulative.last_mut() {
        *last = f64::INFINITY;
    }

    let mut label_rng = rng::rng_stream(seed, 0);
    let labels: Vec<usize> = (0..n).map(|_| draw_category(&cumulative, &mut label_rng)).collect();
    let thetas = theta_law.filter(|l| **l != ThetaLaw::Constant).map(|law| {
        let mut theta_rng = rng::rng_stream(seed, 1);
        (0..n).map(|_| law.draw(&mut theta_rng)).collect::<Vec<f64>>()
    });

    let d = spectrum.signature.d();
    let x = DMatrix::from_fn(n, d, |i, k| {
        let theta = thetas.as_ref().map_or(1.0, |t| t[i]);
        theta * spectrum.nu[(labels[i], k)]
    });
    Ok(LatentSample {
        x,
        signature: spectrum.signature,
        labels: Some(labels),
        thetas,
    })
}

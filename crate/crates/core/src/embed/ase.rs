use nalgebra::DMatrix;

use super::eigen::{top_eigenpairs, EigenMethod, SparseAdjacency, SymmetricOperator, DENSE_LIMIT};
use crate::linalg::fix_column_signs;
use crate::models::{Graph, Signature};
use crate::{Error, Result};

/// Eigenvalues with magnitude at most this fraction of the largest are
/// treated as zero when matching the signature.
const ZERO_EIGENVALUE_TOL: f64 = 1e-12;

/// Embedded vertices of one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    /// `n x d`, `U |Lambda|^{1/2}`.
    pub x: DMatrix<f64>,
    pub signature: Signature,
    /// Positive block in descending order, then the negative block in
    /// descending magnitude.
    pub eigenvalues: Vec<f64>,
    pub sparsity_estimate: Option<f64>,
}

impl Embedding {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// The unit eigenvectors behind the embedding.
    pub fn eigenvectors(&self) -> DMatrix<f64> {
        let mut u = self.x.clone();
        for (c, lambda) in self.eigenvalues.iter().enumerate() {
            u.column_mut(c).unscale_mut(lambda.abs().sqrt());
        }
        u
    }
}

fn embed_operator<A: SymmetricOperator>(a: &A, signature: Signature, method: EigenMethod) -> Result<Embedding> {
    let d = signature.d();
    let n = a.dim();
    if d > n {
        return Err(Error::DimensionMismatch(format!("embedding dimension {d} exceeds n = {n}")));
    }
    let pairs = top_eigenpairs(a, d, method)?;
    let scale = pairs.values.first().map_or(0.0, |v| v.abs());
    let zero = ZERO_EIGENVALUE_TOL * scale.max(f64::MIN_POSITIVE);
    let found_pos = pairs.values.iter().filter(|&&v| v > zero).count();
    let found_neg = pairs.values.iter().filter(|&&v| v < -zero).count();
    if found_pos != signature.p || found_neg != signature.q {
        return Err(Error::SignatureMismatch {
            p: signature.p,
            q: signature.q,
            d,
            found_pos,
            found_neg,
        });
    }
    // pairs are magnitude-sorted, so a stable partition keeps each block ordered
    let order: Vec<usize> = (0..d)
        .filter(|&c| pairs.values[c] > 0.0)
        .chain((0..d).filter(|&c| pairs.values[c] < 0.0))
        .collect();
    let eigenvalues: Vec<f64> = order.iter().map(|&c| pairs.values[c]).collect();
    let mut x = DMatrix::from_fn(n, d, |r, c| pairs.vectors[(r, order[c])]);
    fix_column_signs(&mut x);
    for (c, lambda) in eigenvalues.iter().enumerate() {
        x.column_mut(c).scale_mut(lambda.abs().sqrt());
    }
    Ok(Embedding {
        x,
        signature,
        eigenvalues,
        sparsity_estimate: None,
    })
}

/// Spectral embedding of an arbitrary symmetric matrix, e.g. the noiseless
/// probability matrix `P`.
pub fn embed_symmetric(matrix: &DMatrix<f64>, signature: Signature) -> Result<Embedding> {
    if matrix.nrows() != matrix.ncols() {
        return Err(Error::DimensionMismatch("matrix to embed must be square".into()));
    }
    embed_operator(matrix, signature, EigenMethod::Auto)
}

/// Adjacency spectral embedding of `graph` into `d = p + q` dimensions.
///
/// Keeps the `d` eigenpairs of largest magnitude; they must split into
/// exactly `p` positive and `q` negative eigenvalues. Each column's
/// largest-magnitude entry is made positive.
pub fn ase(graph: &Graph, signature: Signature) -> Result<Embedding> {
    ase_with(graph, signature, EigenMethod::Auto)
}

pub fn ase_with(graph: &Graph, signature: Signature, method: EigenMethod) -> Result<Embedding> {
    let dense = match method {
        EigenMethod::Auto => graph.n() <= DENSE_LIMIT,
        EigenMethod::Dense => true,
        EigenMethod::Lanczos => false,
    };
    let mut emb = if dense {
        embed_operator(&graph.to_matrix(), signature, EigenMethod::Dense)?
    } else {
        embed_operator(&SparseAdjacency::from_graph(graph), signature, EigenMethod::Lanczos)?
    };
    emb.sparsity_estimate = estimate_sparsity(graph).ok();
    Ok(emb)
}

/// Mean of the strictly upper-triangular adjacency entries.
pub fn estimate_sparsity(graph: &Graph) -> Result<f64> {
    let n = graph.n();
    if n < 2 {
        return Err(Error::TooFewSamples(format!("sparsity needs n >= 2, got {n}")));
    }
    let pairs = (n * (n - 1) / 2) as f64;
    Ok(graph.edge_count() as f64 / pairs)
}

/// Divide every row by `sqrt(alpha)`.
pub fn scaled_embedding(emb: &Embedding, alpha: f64) -> Result<DMatrix<f64>> {
    if alpha == 0.0 {
        return Err(Error::ZeroSparsity);
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("sparsity factor must be positive, got {alpha}")));
    }
    Ok(&emb.x / alpha.sqrt())
}

/// `||X||_F / sqrt(n)`, a consistent estimate of the latent scale.
pub fn scale_estimate(emb: &Embedding) -> f64 {
    if emb.n() == 0 {
        return 0.0;
    }
    emb.x.norm() / (emb.n() as f64).sqrt()
}

/// Leading spectrum of an adjacency matrix and its gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct EigengapReport {
    /// Top `d_max` eigenvalues by magnitude (signed).
    pub eigenvalues: Vec<f64>,
    /// `|lambda_i| - |lambda_{i+1}|` for consecutive retained eigenvalues.
    pub gaps: Vec<f64>,
    /// `gaps / (n * alpha_hat)`; `None` when the graph has no edges.
    pub gap_ratios: Option<Vec<f64>>,
    pub sparsity_estimate: f64,
}

pub fn eigengap_report(graph: &Graph, d_max: usize) -> Result<EigengapReport> {
    let n = graph.n();
    if d_max > n {
        return Err(Error::DimensionMismatch(format!("d_max = {d_max} exceeds n = {n}")));
    }
    let pairs = if n <= DENSE_LIMIT {
        top_eigenpairs(&graph.to_matrix(), d_max, EigenMethod::Dense)?
    } else {
        top_eigenpairs(&SparseAdjacency::from_graph(graph), d_max, EigenMethod::Lanczos)?
    };
    let gaps: Vec<f64> = pairs.values.windows(2).map(|w| w[0].abs() - w[1].abs()).collect();
    let alpha = estimate_sparsity(graph).unwrap_or(0.0);
    let gap_ratios = (alpha > 0.0).then(|| gaps.iter().map(|g| g / (n as f64 * alpha)).collect());
    Ok(EigengapReport {
        eigenvalues: pairs.values,
        gaps,
        gap_ratios,
        sparsity_estimate: alpha,
    })
}

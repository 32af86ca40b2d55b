//! Top-`k` (by magnitude) eigenpairs of real symmetric operators.
//!
//! Small problems use a full dense decomposition. Larger ones use a block
//! Lanczos iteration with full reorthogonalization and Rayleigh-Ritz
//! extraction; the block width exceeds `k`, so eigenvalues repeated up to
//! that multiplicity are still resolved.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::linalg::TIE_TOL;
use crate::models::Graph;
use crate::{Error, Result};

/// Largest dimension handled by the dense solver under [`EigenMethod::Auto`].
pub const DENSE_LIMIT: usize = 2048;
/// Residual tolerance `||A v - lambda v|| <= RESIDUAL_TOL * max(1, |lambda_1|)`.
pub const RESIDUAL_TOL: f64 = 1e-10;

const LANCZOS_SEED: u64 = 0x5eed_1a2c_2050;
const EXTRA_BLOCK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EigenMethod {
    #[default]
    Auto,
    Dense,
    Lanczos,
}

/// A real symmetric linear operator.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;
    /// `A * x` for an `n x b` block.
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64>;
    fn to_dense(&self) -> DMatrix<f64>;
}

impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self * x
    }

    fn to_dense(&self) -> DMatrix<f64> {
        self.clone()
    }
}

/// Compressed sparse rows of a 0/1 adjacency matrix.
#[derive(Debug, Clone)]
pub struct SparseAdjacency {
    offsets: Vec<usize>,
    columns: Vec<usize>,
}

impl SparseAdjacency {
    pub fn from_graph(graph: &Graph) -> Self {
        let mut offsets = Vec::with_capacity(graph.n() + 1);
        let mut columns = Vec::new();
        offsets.push(0);
        for i in 0..graph.n() {
            columns.extend(graph.neighbors(i));
            offsets.push(columns.len());
        }
        Self { offsets, columns }
    }
}

impl SymmetricOperator for SparseAdjacency {
    fn dim(&self) -> usize {
        self.offsets.len() - 1
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, x.ncols());
        for c in 0..x.ncols() {
            let src = x.column(c);
            let mut dst = out.column_mut(c);
            for i in 0..n {
                dst[i] = self.columns[self.offsets[i]..self.offsets[i + 1]]
                    .iter()
                    .map(|&j| src[j])
                    .sum();
            }
        }
        out
    }

    fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for &j in &self.columns[self.offsets[i]..self.offsets[i + 1]] {
                m[(i, j)] = 1.0;
            }
        }
        m
    }
}

/// Eigenpairs ordered by decreasing `|lambda|`.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    /// `n x k`, orthonormal columns.
    pub vectors: DMatrix<f64>,
}

/// Order indices by decreasing magnitude; positive before negative and lower
/// index first when magnitudes tie within [`TIE_TOL`].
fn magnitude_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()).then(a.cmp(&b)));
    // resolve near-ties between neighbours
    let mut changed = true;
    while changed {
        changed = false;
        for w in 0..order.len().saturating_sub(1) {
            let (a, b) = (order[w], order[w + 1]);
            if (values[a].abs() - values[b].abs()).abs() <= TIE_TOL {
                let a_key = (values[a] <= 0.0, a);
                let b_key = (values[b] <= 0.0, b);
                if b_key < a_key {
                    order.swap(w, w + 1);
                    changed = true;
                }
            }
        }
    }
    order
}

fn select(values: &[f64], vectors: &DMatrix<f64>, k: usize) -> EigenPairs {
    let order = magnitude_order(values);
    let chosen = &order[..k];
    EigenPairs {
        values: chosen.iter().map(|&i| values[i]).collect(),
        vectors: DMatrix::from_fn(vectors.nrows(), k, |r, c| vectors[(r, chosen[c])]),
    }
}

pub fn top_eigenpairs<A: SymmetricOperator>(a: &A, k: usize, method: EigenMethod) -> Result<EigenPairs> {
    let n = a.dim();
    if k > n {
        return Err(Error::DimensionMismatch(format!("requested {k} eigenpairs of a {n} x {n} matrix")));
    }
    let dense = match method {
        EigenMethod::Auto => n <= DENSE_LIMIT,
        EigenMethod::Dense => true,
        EigenMethod::Lanczos => false,
    };
    if dense {
        dense_top(&a.to_dense(), k)
    } else {
        block_lanczos(a, k)
    }
}

fn dense_top(a: &DMatrix<f64>, k: usize) -> Result<EigenPairs> {
    let eig = SymmetricEigen::new(a.clone());
    let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    Ok(select(&values, &eig.eigenvectors, k))
}

/// Orthogonalize the columns of `block` against `basis` (twice) and among
/// themselves; columns that collapse numerically are dropped.
fn orthonormalize_block(basis: &DMatrix<f64>, block: DMatrix<f64>) -> DMatrix<f64> {
    let mut kept: Vec<nalgebra::DVector<f64>> = Vec::new();
    for c in 0..block.ncols() {
        let mut v = block.column(c).into_owned();
        let original = v.norm();
        if original == 0.0 {
            continue;
        }
        for _ in 0..2 {
            if basis.ncols() > 0 {
                let coeffs = basis.tr_mul(&v);
                v -= basis * coeffs;
            }
            for q in &kept {
                let dot = q.dot(&v);
                v.axpy(-dot, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-10 * original {
            kept.push(v / norm);
        }
    }
    let n = block.nrows();
    DMatrix::from_fn(n, kept.len(), |r, c| kept[c][r])
}

fn block_lanczos<A: SymmetricOperator>(a: &A, k: usize) -> Result<EigenPairs> {
    use rand::Rng;
    let n = a.dim();
    if k == 0 {
        return Ok(EigenPairs {
            values: Vec::new(),
            vectors: DMatrix::zeros(n, 0),
        });
    }
    let width = (k + EXTRA_BLOCK).min(n);
    let max_dim = n.min((40 * width).max(400));
    let mut rng = crate::rng::rng_from(LANCZOS_SEED);
    let start = DMatrix::from_fn(n, width, |_, _| rng.random::<f64>() - 0.5);

    let mut q = orthonormalize_block(&DMatrix::zeros(n, 0), start);
    let mut aq = DMatrix::<f64>::zeros(n, 0);
    let mut block = q.clone();
    loop {
        let a_block = a.apply(&block);
        let s = aq.ncols();
        aq = aq.insert_columns(s, a_block.ncols(), 0.0);
        aq.columns_mut(s, a_block.ncols()).copy_from(&a_block);

        let mut t = q.tr_mul(&aq);
        t = (&t + t.transpose()) * 0.5;
        let eig = SymmetricEigen::new(t);
        let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let kk = k.min(values.len());
        let ritz = select(&values, &eig.eigenvectors, kk);
        let vectors = &q * &ritz.vectors;
        let images = &aq * &ritz.vectors;
        let scale = ritz.values.first().map_or(1.0, |v| v.abs().max(1.0));
        let worst = (0..kk)
            .map(|c| (images.column(c) - vectors.column(c) * ritz.values[c]).norm())
            .fold(0.0_f64, f64::max);

        let exhausted = q.ncols() >= n;
        if kk == k && (worst <= RESIDUAL_TOL * scale || exhausted) {
            return Ok(EigenPairs {
                values: ritz.values,
                vectors,
            });
        }
        if q.ncols() >= max_dim && !exhausted {
            return Err(Error::EigenNotConverged(format!(
                "block Lanczos reached dimension {} with residual {worst:.3e}",
                q.ncols()
            )));
        }
        let next = orthonormalize_block(&q, a_block);
        if next.ncols() == 0 {
            // invariant subspace: Ritz pairs are exact
            if kk == k {
                return Ok(EigenPairs {
                    values: ritz.values,
                    vectors,
                });
            }
            return Err(Error::EigenNotConverged("Krylov space collapsed".into()));
        }
        let s = q.ncols();
        q = q.insert_columns(s, next.ncols(), 0.0);
        q.columns_mut(s, next.ncols()).copy_from(&next);
        block = next;
    }
}

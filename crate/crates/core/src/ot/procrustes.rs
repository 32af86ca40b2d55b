use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::Coupling;
use crate::linalg::polar_factor;
use crate::models::Signature;
use crate::{Error, Result};

const ORTHOGONALITY_TOL: f64 = 1e-10;

/// Orthogonal `d x d` matrix that is block diagonal across the `(p, q)`
/// split, i.e. an element of `O(d) ∩ O(p, q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockOrthogonal {
    w: DMatrix<f64>,
    signature: Signature,
}

impl BlockOrthogonal {
    pub fn identity(signature: Signature) -> Self {
        Self {
            w: DMatrix::identity(signature.d(), signature.d()),
            signature,
        }
    }

    /// Validate `w`: orthogonal to 1e-10 and zero off the diagonal blocks.
    pub fn new(w: DMatrix<f64>, signature: Signature) -> Result<Self> {
        let d = signature.d();
        if w.shape() != (d, d) {
            return Err(Error::DimensionMismatch(format!("W must be {d} x {d}, got {:?}", w.shape())));
        }
        let p = signature.p;
        for i in 0..d {
            for j in 0..d {
                if (i < p) != (j < p) && w[(i, j)] != 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "W[{i}][{j}] = {} lies outside the diagonal blocks",
                        w[(i, j)]
                    )));
                }
            }
        }
        let err = (w.tr_mul(&w) - DMatrix::identity(d, d)).abs().max();
        if err > ORTHOGONALITY_TOL {
            return Err(Error::InvalidParameter(format!("W is not orthogonal (max |W^T W - I| = {err:.3e})")));
        }
        Ok(Self { w, signature })
    }

    /// Diagonal sign matrix.
    pub fn from_signs(signature: Signature, signs: &[f64]) -> Self {
        assert_eq!(signs.len(), signature.d());
        Self {
            w: DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(signs)),
            signature,
        }
    }

    /// Haar-distributed draw: independent uniform orthogonal blocks.
    pub fn random<R: Rng + ?Sized>(signature: Signature, rng: &mut R) -> Self {
        let mut w = DMatrix::zeros(signature.d(), signature.d());
        for (offset, size) in [(0, signature.p), (signature.p, signature.q)] {
            if size > 0 {
                let block = haar_orthogonal(size, rng);
                w.view_mut((offset, offset), (size, size)).copy_from(&block);
            }
        }
        Self { w, signature }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.w
    }

    pub fn signature(&self) -> Signature {
        self.signature
    }

    pub fn dim(&self) -> usize {
        self.signature.d()
    }

    /// `Y W`.
    pub fn apply(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        y * &self.w
    }
}

fn haar_orthogonal<R: Rng + ?Sized>(k: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for c in 0..k {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    q
}

/// Result of [`project_block_orthogonal`].
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub w: BlockOrthogonal,
    /// A diagonal block was identically zero and was replaced by the identity.
    pub degenerate: bool,
}

/// Frobenius-nearest block-orthogonal matrix: the polar factors of the
/// top-left `p x p` and bottom-right `q x q` blocks, assembled
/// block-diagonally.
pub fn project_block_orthogonal(w: &DMatrix<f64>, signature: Signature) -> Result<Projection> {
    let d = signature.d();
    if w.shape() != (d, d) {
        return Err(Error::DimensionMismatch(format!("W must be {d} x {d}, got {:?}", w.shape())));
    }
    let mut out = DMatrix::zeros(d, d);
    let mut degenerate = false;
    for (offset, size) in [(0, signature.p), (signature.p, signature.q)] {
        if size == 0 {
            continue;
        }
        let block = w.view((offset, offset), (size, size)).into_owned();
        let polar = polar_factor(&block).unwrap_or_else(|| {
            degenerate = true;
            DMatrix::identity(size, size)
        });
        out.view_mut((offset, offset), (size, size)).copy_from(&polar);
    }
    Ok(Projection {
        w: BlockOrthogonal { w: out, signature },
        degenerate,
    })
}

/// Result of [`procrustes_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProcrustesStep {
    /// Orthogonal (not necessarily block-diagonal) `d x d` matrix.
    pub w: DMatrix<f64>,
    /// The cross-moment vanished; `w` is the identity.
    pub degenerate: bool,
}

/// Orthogonal `W` minimizing `<Pi, C_W>` for a fixed plan.
///
/// `<Pi, C_W> = const - 2 <W, M>` with the `d x d` cross-moment
/// `M = Y^T Pi^T X`, so `W = U V^T` from the SVD `M = U S V^T`.
pub fn procrustes_step(x: &DMatrix<f64>, y: &DMatrix<f64>, pi: &Coupling) -> Result<ProcrustesStep> {
    let (n, m) = pi.shape();
    if x.nrows() != n || y.nrows() != m || x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "X is {:?}, Y is {:?}, coupling is {n} x {m}",
            x.shape(),
            y.shape()
        )));
    }
    let moment = y.tr_mul(&pi.pi.tr_mul(x));
    Ok(match polar_factor(&moment) {
        Some(w) => ProcrustesStep { w, degenerate: false },
        None => ProcrustesStep {
            w: DMatrix::identity(x.ncols(), x.ncols()),
            degenerate: true,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    fn random_orthogonal(d: usize, seed: u64) -> DMatrix<f64> {
        haar_orthogonal(d, &mut rng_from(seed))
    }

    #[test]
    fn projection_is_idempotent() {
        let sig = Signature::new(2, 1).unwrap();
        let b = BlockOrthogonal::random(sig, &mut rng_from(1));
        let proj = project_block_orthogonal(b.matrix(), sig).unwrap();
        assert!((proj.w.matrix() - b.matrix()).abs().max() < 1e-10);
        assert!(!proj.degenerate);
        assert!(BlockOrthogonal::new(proj.w.into_matrix(), sig).is_ok());
    }

    #[test]
    fn projection_of_mixing_rotation_beats_random_candidates() {
        let sig = Signature::new(1, 2).unwrap();
        let w = random_orthogonal(3, 5);
        let proj = project_block_orthogonal(&w, sig).unwrap();
        let m = proj.w.matrix();
        assert_eq!(m[(0, 1)], 0.0);
        assert_eq!(m[(0, 2)], 0.0);
        assert_eq!(m[(1, 0)], 0.0);
        assert_eq!(m[(2, 0)], 0.0);
        let best = (m - &w).norm();
        let mut rng = rng_from(6);
        for _ in 0..10_000 {
            let cand = BlockOrthogonal::random(sig, &mut rng);
            assert!(best <= (cand.matrix() - &w).norm() + 1e-12);
        }
        // the identity block in O(p,q) is also block-orthogonal
        let ipq = sig.matrix();
        assert!((m * &ipq * m.transpose() - ipq).abs().max() < 1e-10);
    }

    #[test]
    fn positive_definite_case_is_classical_polar_factor() {
        let sig = Signature::new(3, 0).unwrap();
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, -0.1, 0.4, 1.0, 0.2, 0.0, -0.5, 3.0]);
        let proj = project_block_orthogonal(&a, sig).unwrap();
        let svd = a.clone().svd(true, true);
        let polar = svd.u.unwrap() * svd.v_t.unwrap();
        assert!((proj.w.matrix() - polar).abs().max() < 1e-12);
    }

    #[test]
    fn zero_block_is_flagged() {
        let sig = Signature::new(1, 1).unwrap();
        let w = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let proj = project_block_orthogonal(&w, sig).unwrap();
        assert!(proj.degenerate);
        assert_eq!(proj.w.matrix(), &DMatrix::identity(2, 2));
    }

    #[test]
    fn procrustes_recovers_planted_rotation() {
        let mut rng = rng_from(2);
        let x = DMatrix::from_fn(20, 3, |_, _| rng.random::<f64>() - 0.5);
        let matching = Coupling {
            pi: DMatrix::identity(20, 20) / 20.0,
        };
        let same = procrustes_step(&x, &x, &matching).unwrap();
        assert!((same.w - DMatrix::identity(3, 3)).abs().max() < 1e-10);

        let r = random_orthogonal(3, 9);
        let y = &x * &r;
        let step = procrustes_step(&x, &y, &matching).unwrap();
        assert!((&step.w - r.transpose()).abs().max() < 1e-8);
        assert!((&y * &step.w - &x).abs().max() < 1e-8);
    }

    #[test]
    fn zero_moment_is_degenerate() {
        let x = DMatrix::zeros(4, 2);
        let step = procrustes_step(&x, &x, &Coupling::uniform(4, 4)).unwrap();
        assert!(step.degenerate);
        assert_eq!(step.w, DMatrix::identity(2, 2));
    }

    #[test]
    fn validation_rejects_non_block_matrices() {
        let sig = Signature::new(1, 1).unwrap();
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(BlockOrthogonal::new(rot, sig).is_err());
        let scaled = DMatrix::identity(2, 2) * 2.0;
        assert!(BlockOrthogonal::new(scaled, sig).is_err());
    }
}

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Counts of positive (`p`) and negative (`q`) eigenvalue directions.
///
/// Defines the indefinite form `I_{p,q} = diag(I_p, -I_q)`; the first `p`
/// coordinates of every latent or embedded vector belong to the positive
/// block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signature {
    pub p: usize,
    pub q: usize,
}

impl Signature {
    pub fn new(p: usize, q: usize) -> Result<Self> {
        if p + q == 0 {
            return Err(Error::InvalidSignature { p, q });
        }
        Ok(Self { p, q })
    }

    pub fn d(&self) -> usize {
        self.p + self.q
    }

    /// Diagonal entry `k` of `I_{p,q}`.
    pub fn sign(&self, k: usize) -> f64 {
        if k < self.p {
            1.0
        } else {
            -1.0
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_fn(self.d(), |k, _| self.sign(k)))
    }

    /// `x^T I_{p,q} y` for two row slices of length `d`.
    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter()
            .zip(y)
            .enumerate()
            .map(|(k, (a, b))| self.sign(k) * a * b)
            .sum()
    }

    /// Copy of `x` with the negative-block columns negated, so that
    /// `flip_columns(x) * y^T == x I_{p,q} y^T`.
    pub fn flip_columns(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for k in self.p..self.d().min(x.ncols()) {
            out.column_mut(k).neg_mut();
        }
        out
    }

    /// `x I_{p,q} y^T`.
    pub fn gram(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
        self.flip_columns(x) * y.transpose()
    }
}

impl std::fmt::Display for Signature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.p, self.q)
    }
}

/// Parses `p,q`, optionally parenthesised: `1,2` or `(1, 2)`.
impl std::str::FromStr for Signature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let inner = s.trim().trim_start_matches('(').trim_end_matches(')');
        let bad = || Error::InvalidParameter(format!("signature `{s}` is not of the form p,q"));
        let (p, q) = inner.split_once(',').ok_or_else(bad)?;
        let p = p.trim().parse().map_err(|_| bad())?;
        let q = q.trim().parse().map_err(|_| bad())?;
        Self::new(p, q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_displays() {
        let s: Signature = "1,2".parse().unwrap();
        assert_eq!((s.p, s.q), (1, 2));
        assert_eq!(s.to_string().parse::<Signature>().unwrap(), s);
        assert!("3".parse::<Signature>().is_err());
        assert!("0,0".parse::<Signature>().is_err());
    }

    #[test]
    fn rejects_empty_signature() {
        assert!(Signature::new(0, 0).is_err());
        assert_eq!(Signature::new(0, 2).unwrap().d(), 2);
    }

    #[test]
    fn indefinite_inner_product() {
        let s = Signature::new(1, 1).unwrap();
        assert_eq!(s.inner(&[1.0, 0.0], &[1.0, 0.0]), 1.0);
        assert_eq!(s.inner(&[0.0, 2.0], &[0.0, 2.0]), -4.0);
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let g = s.gram(&x, &x);
        assert_eq!(g[(0, 1)], 1.0 * 3.0 - 2.0 * 4.0);
    }
}

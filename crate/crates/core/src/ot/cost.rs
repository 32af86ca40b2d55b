use nalgebra::DMatrix;

use super::BlockOrthogonal;
use crate::{Error, Result};

/// Transport plan between two uniform empirical measures: row sums `1/n`,
/// column sums `1/m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub pi: DMatrix<f64>,
}

impl Coupling {
    /// Independent coupling `1/(nm)`.
    pub fn uniform(n: usize, m: usize) -> Self {
        Self {
            pi: DMatrix::from_element(n, m, 1.0 / (n as f64 * m as f64)),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.pi.shape()
    }

    /// Largest absolute deviation of a row sum from `1/n` and of a column
    /// sum from `1/m`.
    pub fn marginal_errors(&self) -> (f64, f64) {
        let (n, m) = self.pi.shape();
        let row = (0..n)
            .map(|i| (self.pi.row(i).sum() - 1.0 / n as f64).abs())
            .fold(0.0, f64::max);
        let col = (0..m)
            .map(|j| (self.pi.column(j).sum() - 1.0 / m as f64).abs())
            .fold(0.0, f64::max);
        (row, col)
    }

    /// `<Pi, C>`.
    pub fn cost(&self, cost: &DMatrix<f64>) -> f64 {
        self.pi.dot(cost)
    }
}

/// `(C_W)_ij = ||x_i - y_j W||^2`.
pub fn cost_matrix(x: &DMatrix<f64>, y: &DMatrix<f64>, w: &BlockOrthogonal) -> Result<DMatrix<f64>> {
    let d = w.dim();
    if x.ncols() != d || y.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "point dimensions {} and {} do not match W ({d} x {d})",
            x.ncols(),
            y.ncols()
        )));
    }
    Ok(squared_distances(x, &w.apply(y)))
}

/// Pairwise squared Euclidean distances between the rows of `x` and `y`.
pub(crate) fn squared_distances(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let xn: Vec<f64> = x.row_iter().map(|r| r.norm_squared()).collect();
    let yn: Vec<f64> = y.row_iter().map(|r| r.norm_squared()).collect();
    let mut c = x * y.transpose();
    for j in 0..c.ncols() {
        for i in 0..c.nrows() {
            c[(i, j)] = (xn[i] + yn[j] - 2.0 * c[(i, j)]).max(0.0);
        }
    }
    c
}

use nalgebra::DMatrix;
use rand::Rng;

use super::{Graph, LatentSample, Signature};
use crate::{rng, Error, Result};

/// Tolerance on pairwise indefinite inner products.
const ADMISSIBILITY_TOL: f64 = 1e-12;
/// Round-off allowance on edge probabilities before they are clamped.
const PROBABILITY_TOL: f64 = 1e-9;

/// Outcome of [`admissibility_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Admissibility {
    pub admissible: bool,
    /// First pair `(i, j)` with `i <= j` whose product leaves `[0, 1]`.
    pub first_violation: Option<(usize, usize, f64)>,
}

/// Check that every pairwise product `x_i^T I_{p,q} x_j`, self-products
/// included, lies in `[0, 1]`.
pub fn admissibility_check(points: &DMatrix<f64>, signature: Signature) -> Admissibility {
    if points.ncols() != signature.d() {
        return Admissibility {
            admissible: false,
            first_violation: None,
        };
    }
    let gram = signature.gram(points, points);
    let n = points.nrows();
    for i in 0..n {
        for j in i..n {
            let v = gram[(i, j)];
            if !(-ADMISSIBILITY_TOL..=1.0 + ADMISSIBILITY_TOL).contains(&v) {
                return Admissibility {
                    admissible: false,
                    first_violation: Some((i, j, v)),
                };
            }
        }
    }
    Admissibility {
        admissible: true,
        first_violation: None,
    }
}

/// `alpha * X I_{p,q} X^T`, validated to lie in `[0, 1]` off the diagonal and
/// clamped against round-off.
pub fn probability_matrix(sample: &LatentSample, sparsity: f64) -> Result<DMatrix<f64>> {
    if !(sparsity > 0.0 && sparsity <= 1.0) {
        return Err(Error::InvalidSparsity(sparsity));
    }
    let mut p = sample.signature.gram(&sample.x, &sample.x);
    p.scale_mut(sparsity);
    let n = p.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = p[(i, j)];
            if !(-PROBABILITY_TOL..=1.0 + PROBABILITY_TOL).contains(&v) || !v.is_finite() {
                return Err(Error::ProbabilityOutOfRange { i, j, value: v });
            }
        }
    }
    Ok(p.map(|v| v.clamp(0.0, 1.0)))
}

/// Sample a hollow GRDPG adjacency matrix: `A_ij ~ Bernoulli(P_ij)` for
/// `i < j`, mirrored, with a zero diagonal.
pub fn sample_graph(sample: &LatentSample, sparsity: f64, seed: u64) -> Result<Graph> {
    Ok(sample_from_probabilities(&probability_matrix(sample, sparsity)?, seed))
}

/// Bernoulli draws for `i < j` in row-major order; entries outside `[0, 1]`
/// act as their nearest bound.
pub(crate) fn sample_from_probabilities(p: &DMatrix<f64>, seed: u64) -> Graph {
    let n = p.nrows();
    let mut rng = rng::rng_from(seed);
    let mut graph = Graph::empty(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let u: f64 = rng.random();
            if u < p[(i, j)] {
                graph.add_edge(i, j);
            }
        }
    }
    graph
}

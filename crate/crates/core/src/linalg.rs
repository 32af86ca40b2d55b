//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, SVD};

/// Tolerance used when deciding that two magnitudes tie.
pub(crate) const TIE_TOL: f64 = 1e-12;

/// Flip each column so that its largest-magnitude entry is positive.
///
/// Entries within [`TIE_TOL`] of the column maximum count as ties and the
/// lowest row index wins.
pub fn fix_column_signs(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let max = col.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if max == 0.0 {
            continue;
        }
        let pivot = col
            .iter()
            .position(|x| x.abs() >= max - TIE_TOL)
            .expect("column has a maximal entry");
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Orthogonal polar factor `U V^T` of a square matrix.
///
/// Returns `None` when the matrix is identically zero.
pub fn polar_factor(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if m.iter().all(|&x| x == 0.0) {
        return None;
    }
    let svd = SVD::new(m.clone(), true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    Some(u * v_t)
}

/// Neumaier-compensated sum, accumulated in iteration order.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Median of a slice (mean of the two middle values for even length).
/// The slice is reordered in place.
pub fn median_in_place(values: &mut [f64]) -> Option<f64> {
    let len = values.len();
    if len == 0 {
        return None;
    }
    let mid = len / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let upper = *upper;
    if len % 2 == 1 {
        Some(upper)
    } else {
        let lower_max = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(0.5 * (lower_max + upper))
    }
}

/// Frobenius distance between two matrices of equal shape.
/// Dot product with independent partial sums, so the loop is not bound by
/// floating-point add latency.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    acc.iter().sum::<f64>() + tail
}

pub fn frobenius_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm()
}

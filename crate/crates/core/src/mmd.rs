//! Radial characteristic kernels and the two-sample MMD statistics.
//!
//! For samples `X` (`n` rows) and `Y` (`m` rows) the unbiased statistic is
//!
//! ```text
//! U = 1/(n(n-1)) sum_{i!=j} k(x_i,x_j) - 2/(nm) sum_{i,k} k(x_i,y_k)
//!   + 1/(m(m-1)) sum_{k!=l} k(y_k,y_l)
//! ```
//!
//! and the biased `V` keeps the diagonal terms with `1/n^2`, `1/m^2`
//! weights. Both are computed in one pass.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{median_in_place, CompensatedSum};
use crate::{rng, Error, Result};

/// Pooled sizes above this use a subsample of pairs for the median heuristic.
pub const MEDIAN_ALL_PAIRS_LIMIT: usize = 2000;
pub const MEDIAN_SUBSAMPLE_PAIRS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// `exp(-||x - y||_2^2 / sigma^2)`
    #[default]
    Gaussian,
    /// `exp(-||x - y||_1 / sigma)`
    Laplace,
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "laplace" => Ok(Self::Laplace),
            other => Err(Error::InvalidParameter(format!("unknown kernel `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Bandwidth {
    Fixed(f64),
    #[default]
    MedianHeuristic,
}

impl FromStr for Bandwidth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "median-heuristic" || s == "median" {
            return Ok(Self::MedianHeuristic);
        }
        let sigma: f64 = s
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bandwidth must be a number or `median-heuristic`, got `{s}`")))?;
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {sigma}")));
        }
        Ok(Self::Fixed(sigma))
    }
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fixed(s) => write!(f, "{s}"),
            Self::MedianHeuristic => f.write_str("median-heuristic"),
        }
    }
}

impl Serialize for Bandwidth {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Fixed(v) => s.serialize_f64(*v),
            Self::MedianHeuristic => s.serialize_str("median-heuristic"),
        }
    }
}

impl<'de> Deserialize<'de> for Bandwidth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Token(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(v) => Bandwidth::from_str(&v.to_string()),
            Raw::Token(t) => Bandwidth::from_str(&t),
        }
        .map_err(serde::de::Error::custom)
    }
}

/// Kernel family plus bandwidth rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct KernelSpec {
    #[serde(default)]
    pub family: KernelFamily,
    #[serde(default)]
    pub bandwidth: Bandwidth,
}

impl KernelSpec {
    pub fn gaussian(bandwidth: Bandwidth) -> Self {
        Self {
            family: KernelFamily::Gaussian,
            bandwidth,
        }
    }

    /// Fix the bandwidth, running the median heuristic on the pooled sample
    /// when requested.
    pub fn resolve(&self, x: &DMatrix<f64>, y: &DMatrix<f64>, seed: u64) -> Result<Kernel> {
        let sigma = match self.bandwidth {
            Bandwidth::Fixed(s) => s,
            Bandwidth::MedianHeuristic => median_heuristic(x, y, self.family, seed)?,
        };
        Kernel::new(self.family, sigma)
    }
}

/// A kernel with a concrete bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub family: KernelFamily,
    pub sigma: f64,
}

impl Kernel {
    pub fn new(family: KernelFamily, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {sigma}")));
        }
        Ok(Self { family, sigma })
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.family {
            KernelFamily::Gaussian => {
                let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-sq / (self.sigma * self.sigma)).exp()
            }
            KernelFamily::Laplace => {
                let l1: f64 = x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum();
                (-l1 / self.sigma).exp()
            }
        }
    }

    /// Supremum of the kernel (attained at zero distance).
    pub fn max_value(&self) -> f64 {
        1.0
    }
}

pub fn kernel_eval(kernel: &Kernel, x: &[f64], y: &[f64]) -> f64 {
    kernel.eval(x, y)
}

/// Rows of a column-major matrix copied into a row-major buffer.
pub(crate) fn rows_of(x: &DMatrix<f64>) -> Vec<f64> {
    let (n, d) = x.shape();
    let mut out = Vec::with_capacity(n * d);
    for i in 0..n {
        out.extend((0..d).map(|k| x[(i, k)]));
    }
    out
}

fn pair_distance(family: KernelFamily, a: &[f64], b: &[f64]) -> f64 {
    match family {
        KernelFamily::Gaussian => a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum(),
        KernelFamily::Laplace => a.iter().zip(b).map(|(u, v)| (u - v).abs()).sum(),
    }
}

/// Median-heuristic bandwidth on the pooled sample.
///
/// Gaussian: `sigma^2` is the median pairwise squared Euclidean distance.
/// Laplace: `sigma` is the median pairwise L1 distance. Pooled samples larger
/// than [`MEDIAN_ALL_PAIRS_LIMIT`] use [`MEDIAN_SUBSAMPLE_PAIRS`] random pairs.
pub fn median_heuristic(x: &DMatrix<f64>, y: &DMatrix<f64>, family: KernelFamily, seed: u64) -> Result<f64> {
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch(format!("samples have {} and {} columns", x.ncols(), y.ncols())));
    }
    let d = x.ncols();
    let mut pooled = rows_of(x);
    pooled.extend(rows_of(y));
    let total = x.nrows() + y.nrows();
    if total < 2 {
        return Err(Error::TooFewSamples("median heuristic needs at least two points".into()));
    }
    let row = |i: usize| &pooled[i * d..(i + 1) * d];
    let mut dists: Vec<f64> = if total <= MEDIAN_ALL_PAIRS_LIMIT {
        (0..total)
            .flat_map(|i| ((i + 1)..total).map(move |j| (i, j)))
            .map(|(i, j)| pair_distance(family, row(i), row(j)))
            .collect()
    } else {
        let mut r = rng::rng_from(seed);
        (0..MEDIAN_SUBSAMPLE_PAIRS)
            .map(|_| {
                let i = r.random_range(0..total);
                let mut j = r.random_range(0..total - 1);
                if j >= i {
                    j += 1;
                }
                pair_distance(family, row(i), row(j))
            })
            .collect()
    };
    let med = median_in_place(&mut dists).unwrap_or(0.0);
    if med <= 0.0 {
        return Err(Error::DegenerateBandwidth);
    }
    Ok(match family {
        KernelFamily::Gaussian => med.sqrt(),
        KernelFamily::Laplace => med,
    })
}

/// Unbiased and biased empirical MMD^2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmdValue {
    pub u_stat: f64,
    pub v_stat: f64,
    pub n: usize,
    pub m: usize,
}

impl MmdValue {
    /// Off-diagonal kernel sums (each unordered pair counted twice) and the
    /// cross sum, assembled into both statistics.
    fn from_sums(s_xx: f64, s_xy: f64, s_yy: f64, n: usize, m: usize, diag: f64) -> Self {
        let (nf, mf) = (n as f64, m as f64);
        let cross = 2.0 * s_xy / (nf * mf);
        let u_stat = s_xx / (nf * (nf - 1.0)) - cross + s_yy / (mf * (mf - 1.0));
        let v_stat = (s_xx + nf * diag) / (nf * nf) - cross + (s_yy + mf * diag) / (mf * mf);
        Self {
            u_stat,
            v_stat: v_stat.max(0.0),
            n,
            m,
        }
    }
}

fn check_samples(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    if x.nrows() < 2 || y.nrows() < 2 {
        return Err(Error::TooFewSamples(format!(
            "U-statistic needs n, m >= 2 (got {}, {})",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch(format!("samples have {} and {} columns", x.ncols(), y.ncols())));
    }
    Ok(())
}

/// Two-sample U- and V-statistics for a resolved kernel.
pub fn u_statistic(kernel: &Kernel, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<MmdValue> {
    check_samples(x, y)?;
    let d = x.ncols();
    let (n, m) = (x.nrows(), y.nrows());
    let xs = rows_of(x);
    let ys = rows_of(y);
    let xr = |i: usize| &xs[i * d..(i + 1) * d];
    let yr = |i: usize| &ys[i * d..(i + 1) * d];

    let mut s_xx = CompensatedSum::default();
    let mut s_xy = CompensatedSum::default();
    let mut s_yy = CompensatedSum::default();
    for i in 0..n {
        let within: f64 = ((i + 1)..n).map(|j| kernel.eval(xr(i), xr(j))).sum();
        s_xx.add(2.0 * within);
        let cross: f64 = (0..m).map(|k| kernel.eval(xr(i), yr(k))).sum();
        s_xy.add(cross);
    }
    for k in 0..m {
        let within: f64 = ((k + 1)..m).map(|l| kernel.eval(yr(k), yr(l))).sum();
        s_yy.add(2.0 * within);
    }
    Ok(MmdValue::from_sums(
        s_xx.value(),
        s_xy.value(),
        s_yy.value(),
        n,
        m,
        kernel.max_value(),
    ))
}

/// Resolve the kernel from `spec` and evaluate [`u_statistic`].
pub fn u_statistic_with(spec: &KernelSpec, x: &DMatrix<f64>, y: &DMatrix<f64>, seed: u64) -> Result<MmdValue> {
    u_statistic(&spec.resolve(x, y, seed)?, x, y)
}

/// Kernel matrix of a pooled sample, for re-evaluating the statistic under
/// relabelings without recomputing kernel values.
#[derive(Debug, Clone)]
pub struct PooledGram {
    size: usize,
    /// Row-major upper triangle is what gets read; stored full for locality.
    values: Vec<f64>,
    diag: f64,
}

impl PooledGram {
    pub fn new(kernel: &Kernel, pooled: &DMatrix<f64>) -> Self {
        let (size, d) = pooled.shape();
        let rows = rows_of(pooled);
        let r = |i: usize| &rows[i * d..(i + 1) * d];
        let mut values = vec![0.0; size * size];
        for i in 0..size {
            values[i * size + i] = kernel.eval(r(i), r(i));
            for j in (i + 1)..size {
                let v = kernel.eval(r(i), r(j));
                values[i * size + j] = v;
                values[j * size + i] = v;
            }
        }
        Self {
            size,
            values,
            diag: kernel.max_value(),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Statistic for the split where `in_second[i]` marks membership of
    /// pooled row `i` in the second sample.
    pub fn split_statistic(&self, in_second: &[bool]) -> Result<MmdValue> {
        if in_second.len() != self.size {
            return Err(Error::DimensionMismatch(format!(
                "labels have length {}, Gram matrix has {}",
                in_second.len(),
                self.size
            )));
        }
        let m = in_second.iter().filter(|&&b| b).count();
        let n = self.size - m;
        if n < 2 || m < 2 {
            return Err(Error::TooFewSamples(format!("split sizes {n} and {m} must both be >= 2")));
        }
        let labels: Vec<usize> = in_second.iter().map(|&b| b as usize).collect();
        // buckets: 0 = xx, 1 = xy, 2 = yy
        let mut totals = [CompensatedSum::default(); 3];
        for i in 0..self.size {
            let mut acc = [0.0_f64; 3];
            let li = labels[i];
            let row = &self.values[i * self.size..(i + 1) * self.size];
            for (j, &kij) in row.iter().enumerate().skip(i + 1) {
                acc[li + labels[j]] += kij;
            }
            for (t, a) in totals.iter_mut().zip(acc) {
                t.add(a);
            }
        }
        Ok(MmdValue::from_sums(
            2.0 * totals[0].value(),
            totals[1].value(),
            2.0 * totals[2].value(),
            n,
            m,
            self.diag,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gaussian(sigma: f64) -> Kernel {
        Kernel::new(KernelFamily::Gaussian, sigma).unwrap()
    }

    /// Literal transcription of the three sums, no symmetry tricks.
    fn brute_force(kernel: &Kernel, x: &DMatrix<f64>, y: &DMatrix<f64>) -> (f64, f64) {
        let row = |m: &DMatrix<f64>, i: usize| m.row(i).iter().copied().collect::<Vec<f64>>();
        let (n, m) = (x.nrows() as f64, y.nrows() as f64);
        let (mut a, mut a_all, mut b, mut c, mut c_all) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..x.nrows() {
            for j in 0..x.nrows() {
                let k = kernel.eval(&row(x, i), &row(x, j));
                a_all += k;
                if i != j {
                    a += k;
                }
            }
            for l in 0..y.nrows() {
                b += kernel.eval(&row(x, i), &row(y, l));
            }
        }
        for k in 0..y.nrows() {
            for l in 0..y.nrows() {
                let v = kernel.eval(&row(y, k), &row(y, l));
                c_all += v;
                if k != l {
                    c += v;
                }
            }
        }
        let u = a / (n * (n - 1.0)) - 2.0 * b / (n * m) + c / (m * (m - 1.0));
        let v = a_all / (n * n) - 2.0 * b / (n * m) + c_all / (m * m);
        (u, v)
    }

    #[test]
    fn kernel_values() {
        let g = gaussian(1.0);
        assert_eq!(g.eval(&[0.3, 0.4], &[0.3, 0.4]), 1.0);
        assert!((g.eval(&[0.0, 0.0], &[1.0, 0.0]) - (-1.0_f64).exp()).abs() < 1e-15);
        assert!((g.eval(&[0.0], &[1.0]) - 0.367879).abs() < 1e-6);
        let l = Kernel::new(KernelFamily::Laplace, 2.0).unwrap();
        assert!((l.eval(&[1.0, -1.0], &[0.0, 0.0]) - (-1.0_f64).exp()).abs() < 1e-15);
        assert!(Kernel::new(KernelFamily::Gaussian, 0.0).is_err());
    }

    #[test]
    fn identical_points_give_zero() {
        let x = DMatrix::from_element(4, 2, 0.3);
        let y = DMatrix::from_element(5, 2, 0.3);
        let v = u_statistic(&gaussian(0.7), &x, &y).unwrap();
        assert!(v.u_stat.abs() < 1e-15);
        assert!(v.v_stat.abs() < 1e-15);
    }

    #[test]
    fn duplicated_singletons() {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 0.0]);
        let y = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let k = gaussian(1.5);
        let t = k.eval(&[0.0, 0.0], &[1.0, 1.0]);
        let v = u_statistic(&k, &x, &y).unwrap();
        assert!((v.u_stat - 2.0 * (1.0 - t)).abs() < 1e-15);
    }

    #[test]
    fn same_sample_twice_matches_closed_form() {
        let x = DMatrix::from_row_slice(4, 1, &[0.0, 0.5, 1.5, 3.0]);
        let k = gaussian(1.0);
        let n = 4.0;
        let mut s = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    s += k.eval(&[x[(i, 0)]], &[x[(j, 0)]]);
                }
            }
        }
        let want = s * 2.0 / (n * (n - 1.0)) - 2.0 / (n * n) * (s + n);
        let got = u_statistic(&k, &x, &x).unwrap().u_stat;
        assert!((got - want).abs() < 1e-14);
        assert!((got - brute_force(&k, &x, &x).0).abs() < 1e-14);
    }

    #[test]
    fn too_few_samples() {
        let x = DMatrix::from_element(1, 2, 0.0);
        let y = DMatrix::from_element(3, 2, 0.0);
        assert!(matches!(u_statistic(&gaussian(1.0), &x, &y), Err(Error::TooFewSamples(_))));
    }

    #[test]
    fn median_heuristic_examples() {
        let x = DMatrix::from_row_slice(1, 1, &[0.0]);
        let y = DMatrix::from_row_slice(1, 1, &[2.0]);
        let s = median_heuristic(&x, &y, KernelFamily::Gaussian, 0).unwrap();
        assert!((s * s - 4.0).abs() < 1e-12);

        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let y = DMatrix::from_row_slice(1, 1, &[3.0]);
        let s = median_heuristic(&x, &y, KernelFamily::Gaussian, 0).unwrap();
        assert!((s * s - 4.0).abs() < 1e-12);
        assert_eq!(median_heuristic(&x, &y, KernelFamily::Laplace, 0).unwrap(), 2.0);

        let same = DMatrix::from_element(3, 2, 1.0);
        assert!(matches!(
            median_heuristic(&same, &same, KernelFamily::Gaussian, 0),
            Err(Error::DegenerateBandwidth)
        ));
    }

    #[test]
    fn median_heuristic_subsamples_large_inputs() {
        use rand::Rng;
        let mut r = rng::rng_from(2);
        let x = DMatrix::from_fn(1200, 2, |_, _| r.random::<f64>());
        let y = DMatrix::from_fn(1000, 2, |_, _| r.random::<f64>());
        let a = median_heuristic(&x, &y, KernelFamily::Gaussian, 1).unwrap();
        let b = median_heuristic(&x, &y, KernelFamily::Gaussian, 1).unwrap();
        assert_eq!(a, b);
        // median squared distance of two uniform points in the unit square ~ 0.2626 (Monte Carlo)
        assert!((a * a - 0.2626).abs() < 0.01, "{}", a * a);
    }

    #[test]
    fn bandwidth_parsing() {
        assert_eq!("median-heuristic".parse::<Bandwidth>().unwrap(), Bandwidth::MedianHeuristic);
        assert_eq!("0.5".parse::<Bandwidth>().unwrap(), Bandwidth::Fixed(0.5));
        assert!("-1".parse::<Bandwidth>().is_err());
        let spec: KernelSpec = toml::from_str("family = \"laplace\"\nbandwidth = 2.0").unwrap();
        assert_eq!(spec.bandwidth, Bandwidth::Fixed(2.0));
        let spec: KernelSpec = toml::from_str("bandwidth = \"median-heuristic\"").unwrap();
        assert_eq!(spec.family, KernelFamily::Gaussian);
    }

    fn arb_cloud(max_rows: usize, d: usize) -> impl Strategy<Value = DMatrix<f64>> {
        (2..=max_rows).prop_flat_map(move |n| {
            proptest::collection::vec(-2.0..2.0f64, n * d).prop_map(move |v| DMatrix::from_row_slice(n, d, &v))
        })
    }

    proptest! {
        #[test]
        fn matches_brute_force(x in arb_cloud(12, 3), y in arb_cloud(12, 3), sigma in 0.2..3.0f64, laplace in any::<bool>()) {
            let family = if laplace { KernelFamily::Laplace } else { KernelFamily::Gaussian };
            let k = Kernel::new(family, sigma).unwrap();
            let got = u_statistic(&k, &x, &y).unwrap();
            let (u, v) = brute_force(&k, &x, &y);
            prop_assert!((got.u_stat - u).abs() < 1e-12);
            prop_assert!((got.v_stat - v).abs() < 1e-12);
            prop_assert!(got.v_stat >= 0.0);
            let (n, m) = (x.nrows() as f64, y.nrows() as f64);
            prop_assert!((got.u_stat - got.v_stat).abs() <= 2.0 * (1.0 / (n - 1.0) + 1.0 / (m - 1.0)) + 1e-12);
        }

        #[test]
        fn invariant_under_shared_rotation(x in arb_cloud(10, 3), y in arb_cloud(10, 3), angle in 0.0..6.3f64) {
            let (c, s) = (angle.cos(), angle.sin());
            let r = DMatrix::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, -1.0]);
            let k = gaussian(1.0);
            let a = u_statistic(&k, &x, &y).unwrap().u_stat;
            let b = u_statistic(&k, &(&x * &r), &(&y * &r)).unwrap().u_stat;
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn gram_split_agrees_with_direct(x in arb_cloud(9, 2), y in arb_cloud(9, 2)) {
            let k = gaussian(0.8);
            let mut pooled = DMatrix::zeros(x.nrows() + y.nrows(), 2);
            pooled.rows_mut(0, x.nrows()).copy_from(&x);
            pooled.rows_mut(x.nrows(), y.nrows()).copy_from(&y);
            let gram = PooledGram::new(&k, &pooled);
            let labels: Vec<bool> = (0..pooled.nrows()).map(|i| i >= x.nrows()).collect();
            let a = gram.split_statistic(&labels).unwrap();
            let b = u_statistic(&k, &x, &y).unwrap();
            prop_assert!((a.u_stat - b.u_stat).abs() < 1e-12);
            prop_assert!((a.v_stat - b.v_stat).abs() < 1e-12);
        }
    }
}

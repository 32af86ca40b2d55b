//! Small nonparametric summaries used by the experiments: the one-sided
//! Wilcoxon signed-rank test and Kolmogorov-Smirnov distances.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::{Error, Result};

/// Largest sample for which the signed-rank null is enumerated exactly.
const EXACT_LIMIT: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wilcoxon {
    /// Sum of the ranks of the positive differences.
    pub w_plus: f64,
    /// Number of nonzero differences.
    pub n: usize,
    pub z: f64,
    /// P(W+ >= observed) under the symmetric null.
    pub p_value: f64,
    pub exact: bool,
}

/// One-sided Wilcoxon signed-rank test of "differences are shifted above
/// zero". Zero differences are dropped and tied magnitudes get mid-ranks.
/// Small untied samples use the exact null, everything else the normal
/// approximation with tie-corrected variance.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<Wilcoxon> {
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidParameter("differences must be finite".into()));
    }
    let mut nz: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    let n = nz.len();
    if n == 0 {
        return Err(Error::TooFewSamples("all differences are zero".into()));
    }
    nz.sort_by(|a, b| a.abs().total_cmp(&b.abs()));

    let mut w_plus = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && nz[j].abs() == nz[i].abs() {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        w_plus += rank * nz[i..j].iter().filter(|&&d| d > 0.0).count() as f64;
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let z = if var > 0.0 { (w_plus - mean) / var.sqrt() } else { 0.0 };

    let exact = tie_term == 0.0 && n <= EXACT_LIMIT;
    let p_value = if exact {
        exact_upper_tail(n, w_plus as usize)
    } else {
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        1.0 - normal.cdf(z)
    };
    Ok(Wilcoxon { w_plus, n, z, p_value, exact })
}

/// P(W+ >= w) for n untied ranks, by counting subsets of {1..n} per sum.
fn exact_upper_tail(n: usize, w: usize) -> f64 {
    let max = n * (n + 1) / 2;
    // f64 counts stay exact well past 2^50 subsets.
    let mut counts = vec![0.0f64; max + 1];
    counts[0] = 1.0;
    for r in 1..=n {
        for s in (r..=max).rev() {
            counts[s] += counts[s - r];
        }
    }
    let tail: f64 = counts[w.min(max + 1)..].iter().sum();
    tail / 2f64.powi(n as i32)
}

/// Kolmogorov-Smirnov distance between the empirical law of `sample` and
/// the uniform distribution on [0, 1].
pub fn ks_uniform(sample: &[f64]) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::TooFewSamples("empty sample".into()));
    }
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let d = s.iter().enumerate().fold(0.0f64, |acc, (i, &x)| {
        let u = x.clamp(0.0, 1.0);
        acc.max((i + 1) as f64 / n - u).max(u - i as f64 / n)
    });
    Ok(d)
}

/// Two-sample Kolmogorov-Smirnov distance sup |F_a - F_b|.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::TooFewSamples("empty sample".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_tail(d: &[f64]) -> f64 {
        // enumerate every sign assignment of the observed magnitudes
        let mut mags: Vec<f64> = d.iter().map(|x| x.abs()).collect();
        mags.sort_by(f64::total_cmp);
        let obs = wilcoxon_signed_rank(d).unwrap().w_plus;
        let n = mags.len();
        let hits = (0u32..1 << n)
            .filter(|mask| {
                let w: usize = (0..n).filter(|k| mask >> k & 1 == 1).map(|k| k + 1).sum();
                w as f64 >= obs
            })
            .count();
        hits as f64 / (1u64 << n) as f64
    }

    #[test]
    fn matches_reference_values() {
        let d = [0.8, -0.3, 1.2, 0.5, -0.1, 0.9, 1.5, 0.2, -0.7, 1.1];
        let w = wilcoxon_signed_rank(&d).unwrap();
        assert_eq!(w.w_plus, 46.0);
        assert!(w.exact);
        assert!((w.p_value - 0.0322265625).abs() < 1e-15);

        // ties and a zero force the normal approximation
        let d = [1.0, 1.0, 2.0, -2.0, 3.0, 3.0, 3.0, -1.0, 4.0, 5.0, 0.0, 2.0];
        let w = wilcoxon_signed_rank(&d).unwrap();
        assert_eq!((w.w_plus, w.n, w.exact), (59.0, 11, false));
        assert!((w.p_value - 0.01002233431131372).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(wilcoxon_signed_rank(&[0.0, 0.0]).is_err());
        assert!(wilcoxon_signed_rank(&[1.0, f64::NAN]).is_err());
        assert!(ks_uniform(&[]).is_err());
        assert!(ks_two_sample(&[1.0], &[]).is_err());
    }

    #[test]
    fn ks_reference_values() {
        assert!((ks_uniform(&[0.1, 0.2, 0.35, 0.9]).unwrap() - 0.4).abs() < 1e-15);
        let d = ks_two_sample(&[0.1, 0.2, 0.3, 0.3, 0.8], &[0.25, 0.3, 0.5, 0.6]).unwrap();
        assert!((d - 0.4).abs() < 1e-15);
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn exact_tail_matches_enumeration(d in prop::collection::vec(-1.0f64..1.0, 1..13)) {
            prop_assume!(d.iter().all(|&x| x != 0.0));
            let mut m: Vec<f64> = d.iter().map(|x| x.abs()).collect();
            m.sort_by(f64::total_cmp);
            prop_assume!(m.windows(2).all(|w| w[0] != w[1]));
            let w = wilcoxon_signed_rank(&d).unwrap();
            prop_assert!((w.p_value - brute_tail(&d)).abs() < 1e-12);
        }

        #[test]
        fn normal_tail_close_to_exact(d in prop::collection::vec(-1.0f64..1.2, 40..50)) {
            let exact = wilcoxon_signed_rank(&d).unwrap();
            prop_assume!(exact.exact);
            let normal = Normal::new(0.0, 1.0).unwrap();
            prop_assert!((exact.p_value - (1.0 - normal.cdf(exact.z))).abs() < 0.02);
        }

        #[test]
        fn two_sample_ks_is_symmetric_and_bounded(
            a in prop::collection::vec(0.0f64..1.0, 1..30),
            b in prop::collection::vec(0.0f64..1.0, 1..30),
        ) {
            let ab = ks_two_sample(&a, &b).unwrap();
            prop_assert_eq!(ab, ks_two_sample(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
        }
    }
}

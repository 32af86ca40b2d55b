//! The two-graph test: embed, rescale by estimated sparsity, align, compute
//! the MMD statistic, and calibrate it with a permutation null.

use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::embed::{ase, estimate_sparsity, scaled_embedding};
use crate::mmd::{u_statistic, Kernel, KernelSpec, MmdValue, PooledGram};
use crate::models::{sample_from_probabilities, Graph, LatentConfig, Signature};
use crate::ot::{align, AlignParams, AlignmentResult, SinkhornParams};
use crate::rng::{derive_seed, rng_stream};
use crate::{Error, Result};

/// How the null distribution of the statistic is simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullScheme {
    /// Relabel the pooled aligned points; alignment and bandwidth stay fixed.
    #[default]
    Permutation,
    /// Resample both graphs from the pooled estimate of the latent
    /// distribution and rerun embedding and alignment per replicate.
    Regraph,
}

impl FromStr for NullScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "permutation" => Ok(Self::Permutation),
            "regraph" => Ok(Self::Regraph),
            other => Err(Error::InvalidParameter(format!("unknown null scheme `{other}`"))),
        }
    }
}

pub(crate) fn default_permutations() -> usize {
    500
}
pub(crate) fn default_alpha() -> f64 {
    0.05
}
pub(crate) fn default_eps_scale() -> f64 {
    0.05
}
pub(crate) fn default_restarts() -> usize {
    8
}
pub(crate) fn default_max_outer() -> usize {
    30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestConfig {
    #[serde(default)]
    pub kernel: KernelSpec,
    pub signature: Signature,
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    #[serde(default = "default_eps_scale")]
    pub eps_scale: f64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
    #[serde(default = "default_alpha")]
    pub alpha_level: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub null: NullScheme,
}

impl TestConfig {
    pub fn new(signature: Signature) -> Self {
        Self {
            kernel: KernelSpec::default(),
            signature,
            permutations: default_permutations(),
            eps_scale: default_eps_scale(),
            restarts: default_restarts(),
            max_outer: default_max_outer(),
            alpha_level: default_alpha(),
            seed: 0,
            null: NullScheme::Permutation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.permutations == 0 {
            return Err(Error::InvalidParameter("permutations must be at least 1".into()));
        }
        if !(self.alpha_level > 0.0 && self.alpha_level < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha level must lie in (0, 1), got {}",
                self.alpha_level
            )));
        }
        Ok(())
    }

    pub fn align_params(&self) -> AlignParams {
        AlignParams {
            eps_scale: self.eps_scale,
            restarts: self.restarts,
            max_outer: self.max_outer,
            outer_tol: 1e-6,
            sinkhorn: SinkhornParams::default(),
            kernel: self.kernel,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TestResult {
    /// Unbiased statistic on the aligned, rescaled embeddings.
    pub statistic: f64,
    /// Both statistics for the observed split.
    pub value: MmdValue,
    /// Kernel used for the statistic and every null replicate.
    pub kernel: Kernel,
    pub null_samples: Vec<f64>,
    pub p_value: f64,
    pub reject: bool,
    pub alignment: AlignmentResult,
    /// Estimated sparsity of the first and second graph.
    pub sparsity: (f64, f64),
}

/// `(1 + #{null >= statistic}) / (B + 1)`.
pub fn p_value(statistic: f64, null: &[f64]) -> f64 {
    let exceed = null.iter().filter(|&&u| u >= statistic).count();
    (1 + exceed) as f64 / (null.len() + 1) as f64
}

/// Stack `x` over `y`.
fn pool(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m, d) = (x.nrows(), y.nrows(), x.ncols());
    let mut z = DMatrix::zeros(n + m, d);
    z.rows_mut(0, n).copy_from(x);
    z.rows_mut(n, m).copy_from(y);
    z
}

/// Null statistics from `replicates` uniform relabelings of the pooled
/// sample into groups of sizes `n` (first) and `m`, with a fixed kernel.
/// Replicate `b` draws from its own stream, so the result does not depend on
/// evaluation order.
pub fn permutation_null_with(
    pooled: &DMatrix<f64>,
    n: usize,
    m: usize,
    kernel: &Kernel,
    replicates: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if pooled.nrows() != n + m {
        return Err(Error::DimensionMismatch(format!(
            "pooled sample has {} rows, expected {n} + {m}",
            pooled.nrows()
        )));
    }
    if replicates == 0 {
        return Err(Error::InvalidParameter("at least one replicate is required".into()));
    }
    let gram = PooledGram::new(kernel, pooled);
    let base: Vec<bool> = (0..n + m).map(|i| i >= n).collect();
    let mut labels = base.clone();
    (0..replicates)
        .map(|b| {
            labels.copy_from_slice(&base);
            labels.shuffle(&mut rng_stream(seed, b as u64));
            Ok(gram.split_statistic(&labels)?.u_stat)
        })
        .collect()
}

/// As [`permutation_null_with`], resolving the kernel on the pooled sample
/// first.
pub fn permutation_null(
    pooled: &DMatrix<f64>,
    n: usize,
    m: usize,
    spec: &KernelSpec,
    replicates: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if pooled.nrows() != n + m {
        return Err(Error::DimensionMismatch(format!(
            "pooled sample has {} rows, expected {n} + {m}",
            pooled.nrows()
        )));
    }
    let x = pooled.rows(0, n).into_owned();
    let y = pooled.rows(n, m).into_owned();
    let kernel = spec.resolve(&x, &y, derive_seed(seed, &[1]))?;
    permutation_null_with(pooled, n, m, &kernel, replicates, seed)
}

/// Statistic, null replicates and p-value for two already aligned samples.
#[derive(Debug, Clone)]
pub struct PermutationOutcome {
    pub value: MmdValue,
    pub kernel: Kernel,
    pub null_samples: Vec<f64>,
    pub p_value: f64,
}

/// Permutation test on fixed point sets: the bandwidth is resolved once on
/// the pooled sample and reused for every relabeling.
pub fn permutation_test(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    spec: &KernelSpec,
    permutations: usize,
    seed: u64,
) -> Result<PermutationOutcome> {
    let kernel = spec.resolve(x, y, derive_seed(seed, &[1]))?;
    let value = u_statistic(&kernel, x, y)?;
    let null_samples = permutation_null_with(&pool(x, y), x.nrows(), y.nrows(), &kernel, permutations, derive_seed(seed, &[2]))?;
    let p_value = p_value(value.u_stat, &null_samples);
    Ok(PermutationOutcome {
        value,
        kernel,
        null_samples,
        p_value,
    })
}

/// Embedded, rescaled and aligned pair.
struct Prepared {
    x: DMatrix<f64>,
    y_aligned: DMatrix<f64>,
    alignment: AlignmentResult,
    sparsity: (f64, f64),
}

/// Embed both graphs with signature `sig` and rescale each embedding by its
/// sparsity factor, estimated from edge density unless given. Returns
/// `(x, y, (alpha, beta))`.
pub fn embed_pair(
    g1: &Graph,
    g2: &Graph,
    sig: Signature,
    sparsity: Option<(f64, f64)>,
) -> Result<(DMatrix<f64>, DMatrix<f64>, (f64, f64))> {
    if g1.n() == 0 || g2.n() == 0 {
        return Err(Error::TooFewSamples("both graphs must be nonempty".into()));
    }
    let e1 = ase(g1, sig)?;
    let e2 = ase(g2, sig)?;
    let (alpha, beta) = match sparsity {
        Some(s) => s,
        None => (estimate_sparsity(g1)?, estimate_sparsity(g2)?),
    };
    Ok((scaled_embedding(&e1, alpha)?, scaled_embedding(&e2, beta)?, (alpha, beta)))
}

fn prepare(g1: &Graph, g2: &Graph, cfg: &TestConfig, sparsity: Option<(f64, f64)>, seed: u64) -> Result<Prepared> {
    let sig = cfg.signature;
    let (x, y, (alpha, beta)) = embed_pair(g1, g2, sig, sparsity)?;
    let alignment = align(&x, &y, sig, &cfg.align_params(), seed)?;
    let y_aligned = alignment.w.apply(&y);
    Ok(Prepared {
        x,
        y_aligned,
        alignment,
        sparsity: (alpha, beta),
    })
}

/// Run the full test on two graphs with estimated sparsity factors.
pub fn run_test(g1: &Graph, g2: &Graph, cfg: &TestConfig) -> Result<TestResult> {
    run_test_with_sparsity(g1, g2, cfg, None)
}

/// As [`run_test`], optionally with known sparsity factors in place of the
/// edge-density estimates.
pub fn run_test_with_sparsity(
    g1: &Graph,
    g2: &Graph,
    cfg: &TestConfig,
    sparsity: Option<(f64, f64)>,
) -> Result<TestResult> {
    cfg.validate()?;
    let prep = prepare(g1, g2, cfg, sparsity, derive_seed(cfg.seed, &[0]))?;
    let kernel = cfg.kernel.resolve(&prep.x, &prep.y_aligned, derive_seed(cfg.seed, &[1]))?;
    let value = u_statistic(&kernel, &prep.x, &prep.y_aligned)?;
    let (n, m) = (prep.x.nrows(), prep.y_aligned.nrows());
    let null_seed = derive_seed(cfg.seed, &[2]);
    let null_samples = match cfg.null {
        NullScheme::Permutation => {
            permutation_null_with(&pool(&prep.x, &prep.y_aligned), n, m, &kernel, cfg.permutations, null_seed)?
        }
        NullScheme::Regraph => regraph_null(&prep, cfg, &kernel, null_seed)?,
    };
    let p = p_value(value.u_stat, &null_samples);
    Ok(TestResult {
        statistic: value.u_stat,
        value,
        kernel,
        null_samples,
        p_value: p,
        reject: p <= cfg.alpha_level,
        alignment: prep.alignment,
        sparsity: prep.sparsity,
    })
}

/// Parametric-bootstrap null: both graphs are redrawn from latent positions
/// resampled out of the pooled aligned embedding, at the estimated
/// sparsities, and go through the whole pipeline again.
fn regraph_null(prep: &Prepared, cfg: &TestConfig, kernel: &Kernel, seed: u64) -> Result<Vec<f64>> {
    let pooled = pool(&prep.x, &prep.y_aligned);
    let (n, m) = (prep.x.nrows(), prep.y_aligned.nrows());
    let sig = cfg.signature;
    let draw = |size: usize, sparsity: f64, stream: u64, rng_seed: u64| {
        let mut rng = rng_stream(rng_seed, stream);
        let rows: Vec<usize> = (0..size).map(|_| rand::Rng::random_range(&mut rng, 0..n + m)).collect();
        let latent = pooled.select_rows(rows.iter());
        let mut p = sig.gram(&latent, &latent);
        p.scale_mut(sparsity);
        sample_from_probabilities(&p, derive_seed(rng_seed, &[stream, 1]))
    };
    (0..cfg.permutations)
        .map(|b| {
            let rep_seed = derive_seed(seed, &[b as u64]);
            let g1 = draw(n, prep.sparsity.0, 0, rep_seed);
            let g2 = draw(m, prep.sparsity.1, 1, rep_seed);
            let rep = prepare(&g1, &g2, cfg, None, derive_seed(rep_seed, &[2]))?;
            Ok(u_statistic(kernel, &rep.x, &rep.y_aligned)?.u_stat)
        })
        .collect()
}

/// Rejection frequency at one graph size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub n: usize,
    pub trials: usize,
    pub rejections: usize,
    pub rate: f64,
}

/// Seeds for trial `t` at size `n`: first graph, second graph, test.
pub fn trial_seeds(seed: u64, n: usize, t: usize) -> (u64, u64, u64) {
    let base = derive_seed(seed, &[n as u64, t as u64]);
    (derive_seed(base, &[0]), derive_seed(base, &[1]), derive_seed(base, &[2]))
}

/// For each `n`, the fraction of `trials` independent graph pairs (first
/// from `null_cfg`, second from `alt_cfg`, both on `n` vertices) on which
/// the test rejects.
pub fn power_curve(
    null_cfg: &LatentConfig,
    alt_cfg: &LatentConfig,
    n_grid: &[usize],
    trials: usize,
    cfg: &TestConfig,
) -> Result<Vec<PowerRow>> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    n_grid
        .iter()
        .map(|&n| {
            let mut rejections = 0;
            for t in 0..trials {
                let (s1, s2, s3) = trial_seeds(cfg.seed, n, t);
                let (_, g1) = null_cfg.sample(n, s1)?;
                let (_, g2) = alt_cfg.sample(n, s2)?;
                let trial_cfg = TestConfig { seed: s3, ..cfg.clone() };
                rejections += run_test(&g1, &g2, &trial_cfg)?.reject as usize;
            }
            Ok(PowerRow {
                n,
                trials,
                rejections,
                rate: rejections as f64 / trials as f64,
            })
        })
        .collect()
}

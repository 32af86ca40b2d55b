use nalgebra::DMatrix;
use rand::Rng;

use super::cost::squared_distances;
use super::sinkhorn::{entropic_objective, sinkhorn_warm, SinkhornParams, SinkhornResult};
use super::{project_block_orthogonal, procrustes_step, BlockOrthogonal, Coupling};
use crate::linalg::{frobenius_distance, median_in_place};
use crate::mmd::{u_statistic, Kernel, KernelSpec, MmdValue};
use crate::models::Signature;
use crate::rng::{derive_seed, rng_stream};
use crate::{Error, Result};

/// Sign candidates are enumerated exhaustively up to this dimension.
pub const MAX_ENUMERATED_DIM: usize = 8;
const RANDOM_SIGN_CANDIDATES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignParams {
    /// Entropic weight as a fraction of the median entry of the current cost
    /// matrix.
    pub eps_scale: f64,
    /// Random block-orthogonal starting points on top of the sign matrices.
    pub restarts: usize,
    pub max_outer: usize,
    /// Outer loop stops once `||W_{t+1} - W_t||_F` falls below this.
    pub outer_tol: f64,
    pub sinkhorn: SinkhornParams,
    /// Kernel used to rank candidates.
    pub kernel: KernelSpec,
}

impl Default for AlignParams {
    fn default() -> Self {
        Self {
            eps_scale: 0.05,
            restarts: 8,
            max_outer: 30,
            outer_tol: 1e-6,
            sinkhorn: SinkhornParams::default(),
            kernel: KernelSpec::default(),
        }
    }
}

impl AlignParams {
    fn validate(&self) -> Result<()> {
        if !(self.eps_scale > 0.0 && self.eps_scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("eps scale must be positive, got {}", self.eps_scale)));
        }
        if self.max_outer == 0 {
            return Err(Error::InvalidParameter("max_outer must be at least 1".into()));
        }
        Ok(())
    }
}

/// Where a candidate started.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    /// Diagonal sign matrix; bit `k` set means coordinate `k` is negated.
    Sign(u32),
    /// The `i`-th random block-orthogonal draw.
    Random(usize),
}

/// One pass of the outer loop, for auditing the alternation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterStep {
    pub eps: f64,
    /// `<Pi_t, C_{W_t}>` and `<Pi_t, C_{W_{t+1}}>` around the Procrustes update.
    pub procrustes_before: f64,
    pub procrustes_after: f64,
    /// Entropic objective at `C_{W_{t+1}}` for `Pi_t` and for the new plan.
    pub entropic_before: f64,
    pub entropic_after: f64,
    pub w_change: f64,
    pub sinkhorn_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct CandidateSummary {
    pub init: InitKind,
    pub w: BlockOrthogonal,
    /// Unbiased statistic between `X` and `Y W` (bandwidth from this
    /// candidate's pooled sample).
    pub statistic: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<OuterStep>,
}

#[derive(Debug, Clone)]
pub struct AlignmentResult {
    pub w: BlockOrthogonal,
    /// Entropic plan recomputed at the returned `W`.
    pub coupling: Coupling,
    /// `<Pi, C_W>`.
    pub transport_cost: f64,
    /// Outer iterations used by the winning candidate.
    pub iterations: usize,
    pub converged: bool,
    pub restarts_tried: usize,
    /// Entropic weight used for the final plan.
    pub eps: f64,
    pub statistic: MmdValue,
    pub kernel: Kernel,
    /// Index into `candidates` of the winner.
    pub best: usize,
    pub candidates: Vec<CandidateSummary>,
}

fn check_inputs(x: &DMatrix<f64>, y: &DMatrix<f64>, sig: Signature) -> Result<()> {
    if x.nrows() == 0 || y.nrows() == 0 {
        return Err(Error::TooFewSamples("alignment needs nonempty point sets".into()));
    }
    if x.ncols() != sig.d() || y.ncols() != sig.d() {
        return Err(Error::DimensionMismatch(format!(
            "points have {} and {} columns, signature {sig} needs {}",
            x.ncols(),
            y.ncols(),
            sig.d()
        )));
    }
    Ok(())
}

fn sign_matrix(sig: Signature, bits: u32) -> BlockOrthogonal {
    let signs: Vec<f64> = (0..sig.d()).map(|k| if bits >> k & 1 == 1 { -1.0 } else { 1.0 }).collect();
    BlockOrthogonal::from_signs(sig, &signs)
}

/// Identity first, then the remaining sign patterns.
fn sign_candidates(sig: Signature, seed: u64) -> Vec<InitKind> {
    let d = sig.d();
    if d <= MAX_ENUMERATED_DIM {
        (0..1u32 << d).map(InitKind::Sign).collect()
    } else {
        let mut rng = rng_stream(derive_seed(seed, &[2]), 0);
        let mut out = vec![InitKind::Sign(0)];
        out.extend((0..RANDOM_SIGN_CANDIDATES).map(|_| InitKind::Sign(rng.random::<u32>())));
        out
    }
}

/// Minimum-U diagonal sign matrix, scored with one kernel whose bandwidth is
/// resolved on the pooled unaligned sample. Returns the sign matrix, that
/// kernel and the statistic. Requires `d <= 8`.
pub fn best_sign_flip(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    sig: Signature,
    spec: &KernelSpec,
    seed: u64,
) -> Result<(BlockOrthogonal, Kernel, MmdValue)> {
    check_inputs(x, y, sig)?;
    if sig.d() > MAX_ENUMERATED_DIM {
        return Err(Error::InvalidParameter(format!(
            "sign enumeration is limited to d <= {MAX_ENUMERATED_DIM}, got {}",
            sig.d()
        )));
    }
    let kernel = spec.resolve(x, y, derive_seed(seed, &[1]))?;
    let mut best: Option<(BlockOrthogonal, MmdValue)> = None;
    for bits in 0..1u32 << sig.d() {
        let s = sign_matrix(sig, bits);
        let value = u_statistic(&kernel, x, &s.apply(y))?;
        if best.as_ref().is_none_or(|b| value.u_stat < b.1.u_stat) {
            best = Some((s, value));
        }
    }
    let (s, value) = best.expect("at least one sign matrix");
    Ok((s, kernel, value))
}

fn median_cost(cost: &DMatrix<f64>) -> f64 {
    let mut v: Vec<f64> = cost.iter().copied().collect();
    median_in_place(&mut v).unwrap_or(0.0)
}

struct Solver<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DMatrix<f64>,
    params: &'a AlignParams,
}

impl Solver<'_> {
    fn cost(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        squared_distances(self.x, &(self.y * w))
    }

    fn eps_for(&self, cost: &DMatrix<f64>) -> f64 {
        let med = median_cost(cost);
        // identical clusters can make most costs vanish; fall back to the mean
        let base = if med > 0.0 { med } else { cost.mean() };
        self.params.eps_scale * base.max(f64::MIN_POSITIVE)
    }

    fn plan(&self, cost: &DMatrix<f64>, eps: f64, warm: Option<&SinkhornResult>) -> Result<SinkhornResult> {
        sinkhorn_warm(cost, eps, self.params.sinkhorn, warm)
    }

    /// Alternating minimization from `w0`; returns the final orthogonal
    /// iterate, its last plan, iteration count, convergence flag and trace.
    fn run(&self, w0: &DMatrix<f64>) -> Result<(DMatrix<f64>, SinkhornResult, usize, bool, Vec<OuterStep>)> {
        let mut w = w0.clone();
        let mut cost = self.cost(&w);
        let mut eps = self.eps_for(&cost);
        let mut plan = self.plan(&cost, eps, None)?;
        let mut trace = Vec::new();
        let mut converged = false;
        let mut iterations = 0;
        while iterations < self.params.max_outer {
            iterations += 1;
            let step = procrustes_step(self.x, self.y, &plan.coupling)?;
            let new_cost = self.cost(&step.w);
            let procrustes_before = plan.coupling.cost(&cost);
            let procrustes_after = plan.coupling.cost(&new_cost);
            let new_eps = self.eps_for(&new_cost);
            let entropic_before = entropic_objective(&plan.coupling, &new_cost, new_eps);
            let new_plan = self.plan(&new_cost, new_eps, Some(&plan))?;
            let w_change = frobenius_distance(&step.w, &w);
            trace.push(OuterStep {
                eps: new_eps,
                procrustes_before,
                procrustes_after,
                entropic_before,
                entropic_after: entropic_objective(&new_plan.coupling, &new_cost, new_eps),
                w_change,
                sinkhorn_iterations: new_plan.iterations,
            });
            w = step.w;
            cost = new_cost;
            eps = new_eps;
            plan = new_plan;
            if w_change < self.params.outer_tol {
                converged = true;
                break;
            }
        }
        let _ = eps;
        Ok((w, plan, iterations, converged, trace))
    }
}

/// Block-orthogonal alignment of `y` onto `x`.
///
/// Every starting point (all sign matrices, then `restarts` random
/// block-orthogonal draws) runs the Sinkhorn/Procrustes alternation and is
/// projected onto the block-orthogonal group afterwards. The candidate with
/// the smallest unbiased MMD statistic between `X` and `Y W` wins; ties go
/// to the earliest candidate. All candidates share one kernel, with the
/// bandwidth resolved on the pooled unaligned sample, so that they are ranked
/// on a common scale.
pub fn align(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    sig: Signature,
    params: &AlignParams,
    seed: u64,
) -> Result<AlignmentResult> {
    check_inputs(x, y, sig)?;
    params.validate()?;
    let solver = Solver { x, y, params };
    let kernel = params.kernel.resolve(x, y, derive_seed(seed, &[1]))?;

    let mut inits = sign_candidates(sig, seed);
    inits.extend((0..params.restarts).map(InitKind::Random));

    let mut candidates = Vec::with_capacity(inits.len());
    let mut plans = Vec::with_capacity(inits.len());
    let mut best: Option<(usize, MmdValue)> = None;
    for (idx, &init) in inits.iter().enumerate() {
        let w0 = match init {
            InitKind::Sign(bits) => sign_matrix(sig, bits),
            InitKind::Random(i) => BlockOrthogonal::random(sig, &mut rng_stream(derive_seed(seed, &[3]), i as u64)),
        };
        let (w, plan, iterations, converged, trace) = solver.run(w0.matrix())?;
        let projected = project_block_orthogonal(&w, sig)?.w;
        let value = u_statistic(&kernel, x, &projected.apply(y))?;
        if best.as_ref().is_none_or(|b| value.u_stat < b.1.u_stat) {
            best = Some((idx, value));
        }
        candidates.push(CandidateSummary {
            init,
            w: projected,
            statistic: value.u_stat,
            iterations,
            converged,
            trace,
        });
        plans.push(plan);
    }
    let (best, statistic) = best.expect("candidate set is nonempty");

    let w = candidates[best].w.clone();
    let cost = solver.cost(w.matrix());
    let eps = solver.eps_for(&cost);
    let plan = solver.plan(&cost, eps, Some(&plans[best]))?;
    let transport_cost = plan.coupling.cost(&cost).max(0.0);
    Ok(AlignmentResult {
        w,
        coupling: plan.coupling,
        transport_cost,
        iterations: candidates[best].iterations,
        converged: candidates[best].converged,
        restarts_tried: candidates.len(),
        eps,
        statistic,
        kernel,
        best,
        candidates,
    })
}

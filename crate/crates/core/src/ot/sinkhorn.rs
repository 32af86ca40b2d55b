//! Entropic optimal transport between uniform empirical measures.
//!
//! Solves `min_Pi <Pi, C> + eps * sum_ij Pi_ij (ln Pi_ij - 1)` subject to row
//! sums `1/n` and column sums `1/m`. The plan is kept in the factored form
//! `Pi_ij = u_i K_ij v_j` with `K_ij = exp(alpha_i + beta_j - C_ij / eps)`;
//! whenever a scaling leaves `[1e-50, 1e50]` (or a column of `K` underflows)
//! the scalings are absorbed into the log-potentials `alpha`, `beta` through
//! an exact log-sum-exp update and `K` is rebuilt. This keeps every update in
//! the log domain at the cost of occasional `O(nm)` exponentials, and stays
//! finite for arbitrarily small `eps`.

use nalgebra::DMatrix;

use super::Coupling;
use crate::linalg::dot;
use crate::{Error, Result};

const SCALING_BOUND: f64 = 1e50;
const ANNEAL_FACTOR: f64 = 0.5;
/// Column violation accepted at intermediate annealing stages.
const ANNEAL_TOL: f64 = 1e-6;
/// Plain iterations used to estimate the convergence rate.
const RELAX_PROBE: usize = 20;
const MAX_RELAX: f64 = 1.98;
/// Scaling iterations before switching to Newton steps on the dual.
const NEWTON_AFTER: usize = 200;
const NEWTON_STEPS: usize = 50;
/// Largest `n * m * min(n, m)` for which a dense Newton system is formed.
const NEWTON_LIMIT: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornParams {
    pub max_iter: usize,
    /// Stop once the L1 column-marginal violation drops below this (rows are
    /// exact after every iteration).
    pub tol: f64,
}

impl Default for SinkhornParams {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SinkhornResult {
    pub coupling: Coupling,
    pub iterations: usize,
    pub converged: bool,
    /// L1 column-marginal violation at exit.
    pub marginal_error: f64,
    /// Dual potentials `f = eps * alpha`, `g = eps * beta`; reusable as a warm
    /// start for a nearby cost matrix.
    pub potentials: (Vec<f64>, Vec<f64>),
    /// Over-relaxation weight in use at exit (1 for plain iterations).
    pub relaxation: f64,
}

/// `<Pi, C> + eps * sum Pi (ln Pi - 1)`.
pub fn entropic_objective(pi: &Coupling, cost: &DMatrix<f64>, eps: f64) -> f64 {
    let entropy: f64 = pi.pi.iter().filter(|&&p| p > 0.0).map(|&p| p * (p.ln() - 1.0)).sum();
    pi.cost(cost) + eps * entropy
}

/// Entropic transport plan with uniform marginals.
pub fn sinkhorn(cost: &DMatrix<f64>, eps: f64, max_iter: usize, tol: f64) -> Result<Coupling> {
    Ok(sinkhorn_warm(cost, eps, SinkhornParams { max_iter, tol }, None)?.coupling)
}

struct State {
    n: usize,
    m: usize,
    /// Row-major copy of the cost.
    cost: Vec<f64>,
    eps: f64,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    /// Stabilized kernel, row-major.
    kernel: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
    log_a: f64,
    log_b: f64,
}

impl State {
    /// Fold the scalings into the log-potentials, run one exact log-domain
    /// column then row update, and rebuild the kernel so that the current
    /// plan is `K` itself (unit scalings).
    fn absorb(&mut self) {
        let (n, m) = (self.n, self.m);
        for (al, ui) in self.alpha.iter_mut().zip(&self.u) {
            if ui.is_finite() && *ui > 0.0 {
                *al += ui.ln();
            }
        }
        let inv = 1.0 / self.eps;
        // beta_j = ln b - LSE_i(alpha_i - C_ij/eps)
        let mut col_max = vec![f64::NEG_INFINITY; m];
        for i in 0..n {
            let row = &self.cost[i * m..(i + 1) * m];
            for (cm, &c) in col_max.iter_mut().zip(row) {
                *cm = cm.max(self.alpha[i] - c * inv);
            }
        }
        let mut col_sum = vec![0.0; m];
        for i in 0..n {
            let row = &self.cost[i * m..(i + 1) * m];
            for j in 0..m {
                col_sum[j] += (self.alpha[i] - row[j] * inv - col_max[j]).exp();
            }
        }
        for j in 0..m {
            self.beta[j] = self.log_b - (col_max[j] + col_sum[j].ln());
        }
        // alpha_i = ln a - LSE_j(beta_j - C_ij/eps), keeping the exponentials
        let a = self.log_a.exp();
        for i in 0..n {
            let row = &self.cost[i * m..(i + 1) * m];
            let kr = &mut self.kernel[i * m..(i + 1) * m];
            let mut mx = f64::NEG_INFINITY;
            for (b, &c) in self.beta.iter().zip(row) {
                mx = mx.max(b - c * inv);
            }
            let mut s = 0.0;
            for ((k, b), &c) in kr.iter_mut().zip(&self.beta).zip(row) {
                *k = (b - c * inv - mx).exp();
                s += *k;
            }
            self.alpha[i] = self.log_a - (mx + s.ln());
            let scale = a / s;
            for k in kr.iter_mut() {
                *k *= scale;
            }
        }
        self.u.iter_mut().for_each(|x| *x = 1.0);
        self.v.iter_mut().for_each(|x| *x = 1.0);
    }

    /// Kernel straight from the potentials, one exponential per entry.
    /// Falls back to [`State::absorb`] when a row or column sum leaves the
    /// safe range.
    fn rebuild(&mut self) {
        let (n, m) = (self.n, self.m);
        let inv = 1.0 / self.eps;
        let mut col = vec![0.0; m];
        let mut ok = true;
        for i in 0..n {
            let row = &self.cost[i * m..(i + 1) * m];
            let kr = &mut self.kernel[i * m..(i + 1) * m];
            let mut s = 0.0;
            for (((k, b), &c), cs) in kr.iter_mut().zip(&self.beta).zip(row).zip(col.iter_mut()) {
                *k = (self.alpha[i] + b - c * inv).exp();
                s += *k;
                *cs += *k;
            }
            ok &= s.is_finite() && s > 1e-100 && s < 1e100;
        }
        ok &= col.iter().all(|&s| s.is_finite() && s > 1e-100 && s < 1e100);
        self.u.iter_mut().for_each(|x| *x = 1.0);
        self.v.iter_mut().for_each(|x| *x = 1.0);
        if !ok {
            self.absorb();
        }
    }

    /// Move to a new entropic weight keeping the dual potentials `eps * alpha`.
    fn rescale(&mut self, eps: f64) {
        for (al, ui) in self.alpha.iter_mut().zip(&self.u) {
            *al += ui.ln();
        }
        for (be, vj) in self.beta.iter_mut().zip(&self.v) {
            *be += vj.ln();
        }
        let ratio = self.eps / eps;
        self.alpha.iter_mut().for_each(|x| *x *= ratio);
        self.beta.iter_mut().for_each(|x| *x *= ratio);
        self.u.iter_mut().for_each(|x| *x = 1.0);
        self.v.iter_mut().for_each(|x| *x = 1.0);
        self.eps = eps;
        self.absorb();
    }

    /// Newton steps on the dual, for plans whose scaling iterations mix
    /// slowly (nearly block-diagonal kernels). Leaves the plan in `kernel`
    /// with unit scalings. Returns the number of steps taken.
    fn newton(&mut self, tol: f64, max_steps: usize) -> usize {
        let (n, m) = (self.n, self.m);
        for (al, ui) in self.alpha.iter_mut().zip(&self.u) {
            *al += ui.ln();
        }
        for (be, vj) in self.beta.iter_mut().zip(&self.v) {
            *be += vj.ln();
        }
        self.u.iter_mut().for_each(|x| *x = 1.0);
        self.v.iter_mut().for_each(|x| *x = 1.0);
        let (a, b) = (self.log_a.exp(), self.log_b.exp());
        let inv = 1.0 / self.eps;
        let fill = |alpha: &[f64], beta: &[f64], cost: &[f64], kernel: &mut [f64]| {
            for i in 0..n {
                for j in 0..m {
                    kernel[i * m + j] = (alpha[i] + beta[j] - cost[i * m + j] * inv).exp();
                }
            }
        };
        let dual = |alpha: &[f64], beta: &[f64], kernel: &[f64]| {
            a * alpha.iter().sum::<f64>() + b * beta.iter().sum::<f64>() - kernel.iter().sum::<f64>()
        };
        fill(&self.alpha, &self.beta, &self.cost, &mut self.kernel);
        let mut trial = vec![0.0; n * m];
        let mut steps = 0;
        while steps < max_steps {
            let plan = DMatrix::from_row_slice(n, m, &self.kernel);
            let r: Vec<f64> = plan.row_iter().map(|row| row.sum()).collect();
            let c: Vec<f64> = plan.column_iter().map(|col| col.sum()).collect();
            let err: f64 = r.iter().map(|x| (x - a).abs()).sum::<f64>() + c.iter().map(|x| (x - b).abs()).sum::<f64>();
            if err < tol || c.iter().any(|&x| !(x > 0.0)) {
                break;
            }
            steps += 1;
            // Schur complement on the row block; its null direction (all ones)
            // is lifted by a rank-one term, the right-hand side is orthogonal to it
            let mut scaled = plan.clone();
            for (j, &cj) in c.iter().enumerate() {
                scaled.column_mut(j).scale_mut(1.0 / cj);
            }
            let mut schur = -(&scaled * plan.transpose());
            let lift = r.iter().sum::<f64>() / n as f64;
            for i in 0..n {
                schur[(i, i)] += r[i];
            }
            schur.add_scalar_mut(lift);
            let col_gap = nalgebra::DVector::from_iterator(m, c.iter().map(|x| x - b));
            let rhs = &scaled * &col_gap - nalgebra::DVector::from_iterator(n, r.iter().map(|x| x - a));
            let Some(chol) = schur.cholesky() else { break };
            let d_alpha = chol.solve(&rhs);
            let d_beta = (-(&col_gap) - plan.tr_mul(&d_alpha)).component_div(&nalgebra::DVector::from_column_slice(&c));
            let slope: f64 = d_alpha.iter().zip(&r).map(|(d, x)| d * (a - x)).sum::<f64>()
                + d_beta.iter().zip(&c).map(|(d, x)| d * (b - x)).sum::<f64>();
            let base = dual(&self.alpha, &self.beta, &self.kernel);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let al: Vec<f64> = self.alpha.iter().zip(d_alpha.iter()).map(|(x, d)| x + t * d).collect();
                let be: Vec<f64> = self.beta.iter().zip(d_beta.iter()).map(|(x, d)| x + t * d).collect();
                fill(&al, &be, &self.cost, &mut trial);
                let value = dual(&al, &be, &trial);
                if value.is_finite() && value >= base + 1e-4 * t * slope {
                    self.alpha = al;
                    self.beta = be;
                    std::mem::swap(&mut self.kernel, &mut trial);
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        steps
    }

    /// Scaling iterations at the current weight. Returns the iteration count,
    /// whether `tol` was reached, and the final column violation.
    ///
    /// After a short plain phase the observed linear rate `eta` sets an
    /// over-relaxation weight `2 / (1 + sqrt(1 - eta))`. Convergence is only
    /// declared right after a plain row update, so the row marginals hold
    /// exactly on exit.
    fn iterate(&mut self, max_iter: usize, tol: f64, relaxation: f64) -> (usize, bool, f64, f64) {
        let (n, m) = (self.n, self.m);
        let (a, b) = (self.log_a.exp(), self.log_b.exp());
        let in_range = |x: f64| x.is_finite() && x < SCALING_BOUND && x > 1.0 / SCALING_BOUND;
        let mut kt_u = vec![0.0; m];
        let mut history = Vec::new();
        let mut omega = relaxation.clamp(1.0, MAX_RELAX);
        if omega > 1.0 {
            history.resize(RELAX_PROBE + 1, 0.0);
        }
        let mut best = f64::INFINITY;
        let mut rows_exact = false;
        let mut newton_done = false;
        let mut iterations = 0;
        loop {
            transpose_apply(&self.kernel, &self.u, &mut kt_u);
            let err = kt_u.iter().zip(&self.v).map(|(s, vj)| (s * vj - b).abs()).sum::<f64>();
            if rows_exact && err < tol {
                return (iterations, true, err, omega);
            }
            if iterations >= max_iter {
                return (iterations, false, err, omega);
            }
            if !newton_done && iterations >= NEWTON_AFTER && n * m * n.min(m) <= NEWTON_LIMIT {
                newton_done = true;
                iterations += self.newton(tol, NEWTON_STEPS);
                omega = 1.0;
                rows_exact = false;
                continue;
            }
            iterations += 1;
            // plain row update only, to certify a relaxed iterate
            let polish = omega > 1.0 && err < tol;
            if omega > 1.0 {
                if err > 10.0 * best {
                    omega = 1.0 + 0.5 * (omega - 1.0);
                    best = err;
                }
                best = best.min(err);
            } else if history.len() <= RELAX_PROBE {
                history.push(err);
                let k = history.len();
                if k > RELAX_PROBE {
                    let eta = (history[k - 1] / history[k - 1 - RELAX_PROBE / 2]).powf(2.0 / RELAX_PROBE as f64);
                    if eta.is_finite() && eta > 0.5 && eta < 1.0 {
                        omega = (2.0 / (1.0 + (1.0 - eta).sqrt())).min(MAX_RELAX);
                        best = err;
                    }
                }
            }
            let step = if polish { 1.0 } else { omega };

            let mut stale = false;
            if !polish {
                for (vj, s) in self.v.iter_mut().zip(&kt_u) {
                    let target = b / s;
                    *vj = if step == 1.0 { target } else { vj.powf(1.0 - step) * target.powf(step) };
                    stale |= !in_range(*vj);
                }
            }
            if !stale {
                for i in 0..n {
                    let s = dot(&self.kernel[i * m..(i + 1) * m], &self.v);
                    let target = a / s;
                    let ui = &mut self.u[i];
                    *ui = if step == 1.0 { target } else { ui.powf(1.0 - step) * target.powf(step) };
                    stale |= !in_range(*ui);
                }
            }
            rows_exact = step == 1.0;
            if stale {
                self.absorb();
                rows_exact = true;
            }
        }
    }
}

/// `out = K^T u` for a row-major `K`, four rows per sweep over `out`.
fn transpose_apply(kernel: &[f64], u: &[f64], out: &mut [f64]) {
    let m = out.len();
    out.iter_mut().for_each(|x| *x = 0.0);
    let mut rows = kernel.chunks_exact(4 * m);
    let mut us = u.chunks_exact(4);
    for (block, uu) in (&mut rows).zip(&mut us) {
        let (r0, rest) = block.split_at(m);
        let (r1, rest) = rest.split_at(m);
        let (r2, r3) = rest.split_at(m);
        let (u0, u1, u2, u3) = (uu[0], uu[1], uu[2], uu[3]);
        for ((((o, a), b), c), d) in out.iter_mut().zip(r0).zip(r1).zip(r2).zip(r3) {
            *o += a * u0 + b * u1 + c * u2 + d * u3;
        }
    }
    for (row, &ui) in rows.remainder().chunks_exact(m).zip(us.remainder()) {
        for (acc, &k) in out.iter_mut().zip(row) {
            *acc += k * ui;
        }
    }
}

/// Sinkhorn iterations, optionally warm-started from dual potentials of a
/// previous solve.
///
/// A cold start anneals the entropic weight geometrically from the cost
/// range down to `eps`, which converges far faster than iterating at a small
/// weight from zero potentials. Every stage, including the final one, gets
/// at most `params.max_iter` iterations; the reported count is the total.
pub fn sinkhorn_warm(
    cost: &DMatrix<f64>,
    eps: f64,
    params: SinkhornParams,
    warm: Option<&SinkhornResult>,
) -> Result<SinkhornResult> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("entropic weight must be positive, got {eps}")));
    }
    let (n, m) = cost.shape();
    if n == 0 || m == 0 {
        return Err(Error::TooFewSamples("sinkhorn needs nonempty marginals".into()));
    }
    let mut flat = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            let c = cost[(i, j)];
            if !c.is_finite() {
                return Err(Error::NonFiniteCost(i, j));
            }
            flat[i * m + j] = c;
        }
    }
    let warm = warm.filter(|w| w.potentials.0.len() == n && w.potentials.1.len() == m);
    let range = flat.iter().fold(f64::NEG_INFINITY, |a, &c| a.max(c)) - flat.iter().fold(f64::INFINITY, |a, &c| a.min(c));
    let start_eps = if warm.is_none() && range > eps { range } else { eps };
    let (alpha, beta) = match warm {
        Some(w) => (
            w.potentials.0.iter().map(|v| v / eps).collect(),
            w.potentials.1.iter().map(|v| v / eps).collect(),
        ),
        None => (vec![0.0; n], vec![0.0; m]),
    };
    let mut st = State {
        n,
        m,
        cost: flat,
        eps: start_eps,
        alpha,
        beta,
        kernel: vec![0.0; n * m],
        u: vec![1.0; n],
        v: vec![1.0; m],
        log_a: -(n as f64).ln(),
        log_b: -(m as f64).ln(),
    };
    if warm.is_some() {
        st.rebuild();
    } else {
        st.absorb();
    }

    let mut iterations = 0;
    let mut stage_eps = start_eps;
    while stage_eps > eps {
        stage_eps = (stage_eps * ANNEAL_FACTOR).max(eps);
        if stage_eps > eps {
            st.rescale(stage_eps);
            iterations += st.iterate(params.max_iter, params.tol.max(ANNEAL_TOL), 1.0).0;
        }
    }
    if st.eps != eps {
        st.rescale(eps);
    }
    let (final_iters, converged, marginal_error, relaxation) =
        st.iterate(params.max_iter, params.tol, 1.0);
    iterations += final_iters;

    let mut pi = DMatrix::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            pi[(i, j)] = st.u[i] * st.kernel[i * m + j] * st.v[j];
        }
    }
    let f = st.alpha.iter().zip(&st.u).map(|(al, ui)| eps * (al + ui.ln())).collect();
    let g = st.beta.iter().zip(&st.v).map(|(be, vj)| eps * (be + vj.ln())).collect();
    Ok(SinkhornResult {
        coupling: Coupling { pi },
        iterations,
        converged,
        marginal_error,
        potentials: (f, g),
        relaxation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ot::exact_wasserstein2;
    use crate::rng::rng_from;
    use rand::Rng;

    #[test]
    fn constant_cost_gives_independent_coupling() {
        let c = DMatrix::from_element(3, 4, 0.7);
        let pi = sinkhorn(&c, 0.1, 100, 1e-12).unwrap();
        assert!((pi.pi - DMatrix::from_element(3, 4, 1.0 / 12.0)).abs().max() < 1e-14);
    }

    #[test]
    fn small_eps_approaches_identity_matching() {
        let c = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let pi = sinkhorn(&c, 0.01, 5000, 1e-12).unwrap();
        assert!((pi.pi[(0, 0)] - 0.5).abs() < 1e-12);
        assert!(pi.pi[(0, 1)] < 1e-12);
        // larger eps blurs the plan, but the diagonal stays dominant
        let blurred = sinkhorn(&c, 1.0, 5000, 1e-12).unwrap();
        assert!(blurred.pi[(0, 1)] > 0.05 && blurred.pi[(0, 0)] > blurred.pi[(0, 1)]);
    }

    #[test]
    fn marginals_hold_on_random_costs() {
        let mut rng = rng_from(1);
        for _ in 0..100 {
            let n = rng.random_range(2..9);
            let m = rng.random_range(2..9);
            let c = DMatrix::from_fn(n, m, |_, _| rng.random::<f64>());
            let res = sinkhorn_warm(&c, 0.05, SinkhornParams::default(), None).unwrap();
            assert!(res.converged, "{} {} {}", res.iterations, res.marginal_error, n * 100 + m);
            let (r, col) = res.coupling.marginal_errors();
            assert!(r < 1e-8 && col < 1e-8, "{r} {col}");
        }
    }

    #[test]
    fn tiny_eps_stays_finite() {
        let mut rng = rng_from(4);
        let c = DMatrix::from_fn(6, 5, |_, _| 10.0 + rng.random::<f64>() * 100.0);
        let res = sinkhorn_warm(&c, 1e-4, SinkhornParams::default(), None).unwrap();
        assert!(res.coupling.pi.iter().all(|p| p.is_finite() && *p >= 0.0));
        let (r, col) = res.coupling.marginal_errors();
        assert!(r < 1e-8 && col < 1e-8, "{r} {col} {} {}", res.iterations, res.marginal_error);
    }

    #[test]
    fn rejects_bad_input() {
        let mut c = DMatrix::from_element(2, 2, 1.0);
        assert!(sinkhorn(&c, 0.0, 10, 1e-9).is_err());
        c[(1, 0)] = f64::NAN;
        assert!(matches!(sinkhorn(&c, 0.1, 10, 1e-9), Err(Error::NonFiniteCost(1, 0))));
    }

    #[test]
    fn warm_start_converges_faster() {
        let mut rng = rng_from(7);
        let x = DMatrix::from_fn(40, 2, |_, _| rng.random::<f64>());
        let y = DMatrix::from_fn(50, 2, |_, _| rng.random::<f64>());
        let c = crate::ot::cost::squared_distances(&x, &y);
        let cold = sinkhorn_warm(&c, 0.01, SinkhornParams::default(), None).unwrap();
        let c2 = &c * 1.001;
        let warm = sinkhorn_warm(
            &c2,
            0.01,
            SinkhornParams::default(),
            Some(&cold),
        )
        .unwrap();
        let fresh = sinkhorn_warm(&c2, 0.01, SinkhornParams::default(), None).unwrap();
        assert!(warm.converged && fresh.converged);
        assert!(warm.iterations < fresh.iterations);
        assert!((warm.coupling.pi - fresh.coupling.pi).abs().max() < 1e-8);
    }

    #[test]
    fn entropic_cost_tends_to_exact_cost() {
        let mut rng = rng_from(11);
        for _ in 0..5 {
            let x = DMatrix::from_fn(8, 2, |_, _| rng.random::<f64>());
            let y = DMatrix::from_fn(8, 2, |_, _| rng.random::<f64>());
            let c = crate::ot::cost::squared_distances(&x, &y);
            let exact = exact_wasserstein2(&x, &y).unwrap().cost;
            let mut last = f64::INFINITY;
            for eps in [1.0, 0.1, 0.01, 0.001] {
                let params = SinkhornParams { max_iter: 100_000, tol: 1e-12 };
                let cost = sinkhorn_warm(&c, eps, params, None).unwrap().coupling.cost(&c);
                assert!(cost <= last + 1e-12);
                last = cost;
            }
            assert!((last - exact) / exact < 1e-2, "{last} vs {exact}");
        }
    }
}

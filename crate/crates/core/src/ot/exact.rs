//! Unregularized transport between uniform empirical measures.
//!
//! Square problems are assignment problems and go through the Hungarian
//! method. Rectangular ones are balanced by scaling both marginals to the
//! integer total `L = lcm(n, m)` (supplies `L/n`, demands `L/m`) and solved
//! with the transportation simplex, so the optimal plan is exact up to the
//! final division by `L`.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use super::cost::squared_distances;
use super::Coupling;
use crate::{Error, Result};

/// Largest `n * m` accepted by the exact solvers.
pub const ORACLE_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct ExactTransport {
    /// `sqrt(cost)`.
    pub distance: f64,
    pub coupling: Coupling,
    /// `<Pi, C>` at the optimum.
    pub cost: f64,
}

/// 2-Wasserstein distance between the empirical measures on the rows of `x`
/// and `y`, with no alignment.
pub fn exact_wasserstein2(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<ExactTransport> {
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "point dimensions {} and {}",
            x.ncols(),
            y.ncols()
        )));
    }
    check_scale(x.nrows(), y.nrows())?;
    exact_transport(&squared_distances(x, y))
}

fn check_scale(n: usize, m: usize) -> Result<()> {
    if n == 0 || m == 0 {
        return Err(Error::TooFewSamples("transport needs nonempty samples".into()));
    }
    if n.saturating_mul(m) > ORACLE_LIMIT {
        return Err(Error::OracleScaleExceeded { n, m, limit: ORACLE_LIMIT });
    }
    Ok(())
}

/// Optimal plan for an arbitrary finite cost matrix with uniform marginals.
pub fn exact_transport(cost: &DMatrix<f64>) -> Result<ExactTransport> {
    let (n, m) = cost.shape();
    check_scale(n, m)?;
    if let Some(k) = cost.iter().position(|c| !c.is_finite()) {
        return Err(Error::NonFiniteCost(k % n, k / n));
    }
    let pi = if n == m {
        let assignment = hungarian(cost);
        let mut pi = DMatrix::zeros(n, n);
        for (i, &j) in assignment.iter().enumerate() {
            pi[(i, j)] = 1.0 / n as f64;
        }
        pi
    } else {
        let l = lcm(n as u64, m as u64);
        let flows = transportation_simplex(cost, l / n as u64, l / m as u64);
        flows.map(|f| f as f64 / l as f64)
    };
    let coupling = Coupling { pi };
    let total = coupling.cost(cost).max(0.0);
    Ok(ExactTransport {
        distance: total.sqrt(),
        coupling,
        cost: total,
    })
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

/// Minimum-cost perfect matching on a square cost matrix; returns the column
/// assigned to each row.
pub fn hungarian(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "assignment needs a square matrix");
    // 1-based potentials formulation; column 0 is a virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    assignment
}

struct Basis {
    n: usize,
    /// Basic cells `(row, col, flow)`.
    cells: Vec<(usize, usize, u64)>,
    /// Node adjacency: rows are `0..n`, columns `n..n+m`; entries index `cells`.
    adj: Vec<Vec<usize>>,
}

impl Basis {
    fn other(&self, node: usize, cell: usize) -> usize {
        let (i, j, _) = self.cells[cell];
        if node == i {
            self.n + j
        } else {
            i
        }
    }

    fn remove(&mut self, cell: usize) {
        let (i, j, _) = self.cells[cell];
        for node in [i, self.n + j] {
            let pos = self.adj[node].iter().position(|&c| c == cell).expect("cell in tree");
            self.adj[node].swap_remove(pos);
        }
    }

    fn insert_at(&mut self, cell: usize, i: usize, j: usize, flow: u64) {
        self.cells[cell] = (i, j, flow);
        self.adj[i].push(cell);
        self.adj[self.n + j].push(cell);
    }
}

/// Integer transportation problem with equal supplies and equal demands.
fn transportation_simplex(cost: &DMatrix<f64>, supply: u64, demand: u64) -> DMatrix<u64> {
    let (n, m) = cost.shape();
    let nodes = n + m;
    let mut basis = Basis {
        n,
        cells: Vec::with_capacity(nodes - 1),
        adj: vec![Vec::new(); nodes],
    };

    // northwest corner; on a tie advance the row only so the basis keeps n+m-1 cells
    let (mut i, mut j) = (0, 0);
    let (mut s, mut d) = (supply, demand);
    loop {
        let f = s.min(d);
        let idx = basis.cells.len();
        basis.cells.push((0, 0, 0));
        basis.insert_at(idx, i, j, f);
        s -= f;
        d -= f;
        if i == n - 1 && j == m - 1 {
            break;
        }
        if s == 0 && i < n - 1 {
            i += 1;
            s = supply;
        } else {
            j += 1;
            d = demand;
        }
    }
    debug_assert_eq!(basis.cells.len(), nodes - 1);

    let scale = cost.iter().fold(0.0_f64, |a, c| a.max(c.abs())).max(1.0);
    let tol = 1e-12 * scale;
    let mut pot = vec![0.0; nodes];
    let mut seen = vec![false; nodes];
    let mut parent = vec![usize::MAX; nodes];
    let max_pivots = 50 * nodes * nodes.max(64);

    for _ in 0..max_pivots {
        // potentials: pot_row + pot_col = c on basic cells
        seen.iter_mut().for_each(|s| *s = false);
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        pot[0] = 0.0;
        while let Some(node) = queue.pop_front() {
            for &cell in &basis.adj[node] {
                let next = basis.other(node, cell);
                if !seen[next] {
                    seen[next] = true;
                    let (ci, cj, _) = basis.cells[cell];
                    pot[next] = cost[(ci, cj)] - pot[node];
                    queue.push_back(next);
                }
            }
        }

        // Dantzig pricing
        let mut best = -tol;
        let mut entering = None;
        for jj in 0..m {
            let vj = pot[n + jj];
            for ii in 0..n {
                let r = cost[(ii, jj)] - pot[ii] - vj;
                if r < best {
                    best = r;
                    entering = Some((ii, jj));
                }
            }
        }
        let Some((ei, ej)) = entering else { break };

        // tree path from column node back to the row node
        seen.iter_mut().for_each(|s| *s = false);
        let mut queue = VecDeque::from([ei]);
        seen[ei] = true;
        while let Some(node) = queue.pop_front() {
            if node == n + ej {
                break;
            }
            for &cell in &basis.adj[node] {
                let next = basis.other(node, cell);
                if !seen[next] {
                    seen[next] = true;
                    parent[next] = cell;
                    queue.push_back(next);
                }
            }
        }
        // walking from col ej toward row ei: path cells alternate -, +, -, ...
        let mut path = Vec::new();
        let mut node = n + ej;
        while node != ei {
            let cell = parent[node];
            path.push(cell);
            node = basis.other(node, cell);
        }
        let (mut theta, mut leaving) = (u64::MAX, usize::MAX);
        for &cell in path.iter().step_by(2) {
            if basis.cells[cell].2 < theta {
                theta = basis.cells[cell].2;
                leaving = cell;
            }
        }
        for (k, &cell) in path.iter().enumerate() {
            if k % 2 == 0 {
                basis.cells[cell].2 -= theta;
            } else {
                basis.cells[cell].2 += theta;
            }
        }
        basis.remove(leaving);
        basis.insert_at(leaving, ei, ej, theta);
    }

    let mut flows = DMatrix::zeros(n, m);
    for &(i, j, f) in &basis.cells {
        flows[(i, j)] += f;
    }
    flows
}

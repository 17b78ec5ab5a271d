//! Exact transportation simplex for discrete optimal transport.
//!
//! The problem is restricted to the supports of the two marginals, an
//! initial basic feasible solution is built with the northwest-corner rule,
//! and the basis is improved with MODI (u-v) potentials until no reduced
//! cost is negative. The basis is always a spanning tree of `m + n - 1`
//! cells; degenerate cells stay in the basis at zero level. Entering cells
//! are chosen by the most-negative reduced cost, falling back to Bland's
//! smallest-index rule after a run of degenerate pivots, which rules out
//! cycling.

use serde::Serialize;

use super::{Distribution, MetricError};
use crate::embeddings::CostMatrix;

const REDUCED_COST_EPS: f64 = 1e-12;
/// Consecutive degenerate pivots before switching to Bland's rule.
const BLAND_AFTER: usize = 32;

/// Non-negative `k × k` coupling between two marginals, row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportPlan {
    k: usize,
    w: Vec<f64>,
}

impl TransportPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.k + j]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.w.chunks(self.k.max(1)).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        for row in self.w.chunks(self.k.max(1)) {
            for (o, x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        out
    }

    pub fn objective(&self, cost: &CostMatrix) -> f64 {
        self.w.iter().zip(cost.as_slice()).map(|(w, c)| w * c).sum()
    }

    /// Non-zero entries as `(i, j, mass)`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.w.iter().enumerate().filter(|(_, &x)| x > 0.0).map(move |(idx, &x)| (idx / self.k, idx % self.k, x))
    }

    /// CSV `source,target,mass` of the non-zero entries.
    pub fn to_csv(&self, labels: &[String]) -> String {
        let mut out = String::from("source,target,mass\n");
        for (i, j, x) in self.entries() {
            out.push_str(&format!("{},{},{:.12}\n", labels[i], labels[j], x));
        }
        out
    }
}

/// Optimal plan plus a dual certificate: `row_potential[i] + col_potential[j]
/// <= cost[i][j]` everywhere, with equality on the plan's support.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalTransport {
    pub distance: f64,
    pub plan: TransportPlan,
    pub row_potential: Vec<f64>,
    pub col_potential: Vec<f64>,
    pub pivots: usize,
}

impl OptimalTransport {
    /// Dual objective; equals `distance` at optimality.
    pub fn dual_value(&self, u: &Distribution, v: &Distribution) -> f64 {
        let a: f64 = self.row_potential.iter().zip(u.mass()).map(|(p, m)| p * m).sum();
        let b: f64 = self.col_potential.iter().zip(v.mass()).map(|(p, m)| p * m).sum();
        a + b
    }
}

struct Tree {
    m: usize,
    n: usize,
    /// Basic cells as (row, col).
    cells: Vec<(usize, usize)>,
    flow: Vec<f64>,
    /// Per node (rows 0..m, cols m..m+n): incident basic cell indices.
    adj: Vec<Vec<usize>>,
}

impl Tree {
    fn new(m: usize, n: usize) -> Self {
        Self { m, n, cells: Vec::with_capacity(m + n - 1), flow: Vec::with_capacity(m + n - 1), adj: vec![Vec::new(); m + n] }
    }

    fn push(&mut self, i: usize, j: usize, x: f64) {
        let idx = self.cells.len();
        self.cells.push((i, j));
        self.flow.push(x);
        self.adj[i].push(idx);
        self.adj[self.m + j].push(idx);
    }

    fn replace(&mut self, leaving: usize, i: usize, j: usize, x: f64) {
        let (li, lj) = self.cells[leaving];
        self.adj[li].retain(|&c| c != leaving);
        self.adj[self.m + lj].retain(|&c| c != leaving);
        self.cells[leaving] = (i, j);
        self.flow[leaving] = x;
        self.adj[i].push(leaving);
        self.adj[self.m + j].push(leaving);
    }

    fn other(&self, cell: usize, node: usize) -> usize {
        let (i, j) = self.cells[cell];
        if node == i {
            self.m + j
        } else {
            i
        }
    }

    /// Potentials with `u[0] = 0` and `u[i] + v[j] = c[i][j]` on the basis.
    fn potentials(&self, cost: impl Fn(usize, usize) -> f64, u: &mut [f64], v: &mut [f64]) {
        let mut seen = vec![false; self.m + self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        u[0] = 0.0;
        while let Some(node) = stack.pop() {
            for &c in &self.adj[node] {
                let (i, j) = self.cells[c];
                let next = self.other(c, node);
                if seen[next] {
                    continue;
                }
                seen[next] = true;
                if next >= self.m {
                    v[j] = cost(i, j) - u[i];
                } else {
                    u[i] = cost(i, j) - v[j];
                }
                stack.push(next);
            }
        }
    }

    /// Basic cells on the tree path from column `q` to row `p`, in order.
    fn path(&self, q: usize, p: usize) -> Vec<usize> {
        let start = self.m + q;
        let mut via = vec![usize::MAX; self.m + self.n];
        let mut parent = vec![usize::MAX; self.m + self.n];
        let mut stack = vec![start];
        parent[start] = start;
        while let Some(node) = stack.pop() {
            if node == p {
                break;
            }
            for &c in &self.adj[node] {
                let next = self.other(c, node);
                if parent[next] == usize::MAX {
                    parent[next] = node;
                    via[next] = c;
                    stack.push(next);
                }
            }
        }
        let mut cells = Vec::new();
        let mut node = p;
        while node != start {
            cells.push(via[node]);
            node = parent[node];
        }
        cells.reverse();
        cells
    }
}

fn check_inputs(u: &Distribution, v: &Distribution, cost: &CostMatrix) -> Result<(), MetricError> {
    if u.k() != v.k() || u.k() != cost.k() {
        return Err(MetricError::Dimension(format!("u has {}, v has {}, cost is {}x{}", u.k(), v.k(), cost.k(), cost.k())));
    }
    Ok(())
}

/// Exact 1-Wasserstein distance between `u` and `v` under `cost`.
pub fn wasserstein(u: &Distribution, v: &Distribution, cost: &CostMatrix) -> Result<(f64, TransportPlan), MetricError> {
    solve(u, v, cost).map(|ot| (ot.distance, ot.plan))
}

/// Solve the transportation problem and return the plan with its duals.
pub fn solve(u: &Distribution, v: &Distribution, cost: &CostMatrix) -> Result<OptimalTransport, MetricError> {
    check_inputs(u, v, cost)?;
    let k = u.k();
    let rows: Vec<usize> = (0..k).filter(|&i| u.mass()[i] > 0.0).collect();
    let cols: Vec<usize> = (0..k).filter(|&j| v.mass()[j] > 0.0).collect();
    let (m, n) = (rows.len(), cols.len());
    let c = |i: usize, j: usize| cost.get(rows[i], cols[j]);

    // Renormalize each side exactly so supply and demand balance.
    let su: f64 = rows.iter().map(|&i| u.mass()[i]).sum();
    let sv: f64 = cols.iter().map(|&j| v.mass()[j]).sum();
    let mut supply: Vec<f64> = rows.iter().map(|&i| u.mass()[i] / su).collect();
    let mut demand: Vec<f64> = cols.iter().map(|&j| v.mass()[j] / sv).collect();

    // Northwest corner. On ties the row advances and the column keeps a
    // zero-level basic cell, so the basis stays a spanning tree.
    let mut tree = Tree::new(m, n);
    let (mut i, mut j) = (0, 0);
    while i < m && j < n {
        let row_first = supply[i] <= demand[j];
        let x = if i == m - 1 {
            demand[j]
        } else if j == n - 1 {
            supply[i]
        } else {
            supply[i].min(demand[j])
        };
        tree.push(i, j, x);
        supply[i] = (supply[i] - x).max(0.0);
        demand[j] = (demand[j] - x).max(0.0);
        if i == m - 1 {
            j += 1;
        } else if j == n - 1 || row_first {
            i += 1;
        } else {
            j += 1;
        }
    }
    debug_assert_eq!(tree.cells.len(), m + n - 1);

    let mut ru = vec![0.0; m];
    let mut rv = vec![0.0; n];
    let mut pivots = 0usize;
    let mut degenerate_run = 0usize;
    let mut in_basis = vec![false; m * n];
    for &(i, j) in &tree.cells {
        in_basis[i * n + j] = true;
    }
    loop {
        tree.potentials(c, &mut ru, &mut rv);
        let bland = degenerate_run >= BLAND_AFTER;
        let mut entering: Option<(usize, usize)> = None;
        let mut best = -REDUCED_COST_EPS;
        'scan: for i in 0..m {
            for j in 0..n {
                if in_basis[i * n + j] {
                    continue;
                }
                let rc = c(i, j) - ru[i] - rv[j];
                if rc < best {
                    entering = Some((i, j));
                    if bland {
                        break 'scan;
                    }
                    best = rc;
                }
            }
        }
        let Some((p, q)) = entering else { break };

        // Cycle: (p,q) gains, then alternate along the tree path col q -> row p.
        let path = tree.path(q, p);
        let mut leaving = None;
        let mut theta = f64::INFINITY;
        for (pos, &cell) in path.iter().enumerate() {
            if pos % 2 == 0 {
                let x = tree.flow[cell];
                let (ci, cj) = tree.cells[cell];
                let better = match leaving {
                    None => true,
                    Some(l) => {
                        let (li, lj) = tree.cells[l];
                        x < theta || (x == theta && (ci, cj) < (li, lj))
                    }
                };
                if better {
                    theta = x;
                    leaving = Some(cell);
                }
            }
        }
        let leaving = leaving.expect("cycle has a decreasing cell");
        for (pos, &cell) in path.iter().enumerate() {
            if pos % 2 == 0 {
                tree.flow[cell] = (tree.flow[cell] - theta).max(0.0);
            } else {
                tree.flow[cell] += theta;
            }
        }
        let (li, lj) = tree.cells[leaving];
        in_basis[li * n + lj] = false;
        in_basis[p * n + q] = true;
        tree.replace(leaving, p, q, theta);
        pivots += 1;
        if theta == 0.0 {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }
    }

    let mut w = vec![0.0; k * k];
    for (&(i, j), &x) in tree.cells.iter().zip(&tree.flow) {
        w[rows[i] * k + cols[j]] += x;
    }
    let plan = TransportPlan { k, w };
    let distance = plan.objective(cost);

    // Extend the potentials off-support so the dual stays feasible.
    let mut row_potential = vec![0.0; k];
    let mut col_potential = vec![0.0; k];
    for (a, &r) in rows.iter().enumerate() {
        row_potential[r] = ru[a];
    }
    for (b, &cj) in cols.iter().enumerate() {
        col_potential[cj] = rv[b];
    }
    let on_rows: Vec<bool> = (0..k).map(|i| u.mass()[i] > 0.0).collect();
    let on_cols: Vec<bool> = (0..k).map(|j| v.mass()[j] > 0.0).collect();
    for j in (0..k).filter(|&j| !on_cols[j]) {
        col_potential[j] = rows.iter().map(|&i| cost.get(i, j) - row_potential[i]).fold(f64::INFINITY, f64::min);
        if !col_potential[j].is_finite() {
            col_potential[j] = 0.0;
        }
    }
    for i in (0..k).filter(|&i| !on_rows[i]) {
        row_potential[i] = (0..k).map(|j| cost.get(i, j) - col_potential[j]).fold(f64::INFINITY, f64::min);
        if !row_potential[i].is_finite() {
            row_potential[i] = 0.0;
        }
    }

    Ok(OptimalTransport { distance, plan, row_potential, col_potential, pivots })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cost4() -> CostMatrix {
        CostMatrix::from_rows(
            vec![
                vec![0.0, 0.2, 0.9, 0.4],
                vec![0.2, 0.0, 0.3, 0.8],
                vec![0.9, 0.3, 0.0, 0.5],
                vec![0.4, 0.8, 0.5, 0.0],
            ],
            "fixture",
        )
        .unwrap()
    }

    fn dist(m: &[f64]) -> Distribution {
        Distribution::new(m.to_vec()).unwrap()
    }

    #[test]
    fn identical_is_zero() {
        let u = dist(&[0.25, 0.25, 0.5, 0.0]);
        let (d, plan) = wasserstein(&u, &u, &cost4()).unwrap();
        assert_eq!(d, 0.0);
        for i in 0..4 {
            assert!((plan.get(i, i) - u.mass()[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn point_masses() {
        let u = dist(&[1.0, 0.0, 0.0, 0.0]);
        let v = dist(&[0.0, 0.0, 1.0, 0.0]);
        let (d, plan) = wasserstein(&u, &v, &cost4()).unwrap();
        assert_eq!(d, 0.9);
        assert_eq!(plan.get(0, 2), 1.0);
    }

    #[test]
    fn two_matchings_by_hand() {
        // {0,1} -> {2,3}: matching 0-2,1-3 costs (0.9+0.8)/2 = 0.85,
        // matching 0-3,1-2 costs (0.4+0.3)/2 = 0.35.
        let u = dist(&[0.5, 0.5, 0.0, 0.0]);
        let v = dist(&[0.0, 0.0, 0.5, 0.5]);
        let (d, plan) = wasserstein(&u, &v, &cost4()).unwrap();
        assert!((d - 0.35).abs() < 1e-15, "{d}");
        assert!((plan.get(0, 3) - 0.5).abs() < 1e-15);
        assert!((plan.get(1, 2) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let u = dist(&[1.0, 0.0]);
        assert!(matches!(wasserstein(&u, &u, &cost4()), Err(MetricError::Dimension(_))));
    }

    #[test]
    fn dual_certificate_on_fixture() {
        let u = dist(&[0.1, 0.4, 0.2, 0.3]);
        let v = dist(&[0.3, 0.1, 0.4, 0.2]);
        let cost = cost4();
        let ot = solve(&u, &v, &cost).unwrap();
        assert!((ot.distance - ot.dual_value(&u, &v)).abs() < 1e-12);
        for i in 0..4 {
            for j in 0..4 {
                assert!(ot.row_potential[i] + ot.col_potential[j] <= cost.get(i, j) + 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_ties_terminate() {
        // Equal masses everywhere make every northwest-corner step a tie.
        let k = 6;
        let rows: Vec<Vec<f64>> =
            (0..k).map(|i| (0..k).map(|j| if i == j { 0.0 } else { 0.5 }).collect()).collect();
        let cost = CostMatrix::from_rows(rows, "x").unwrap();
        let u = dist(&[1.0 / 6.0; 6]);
        let mut perm = [0.0; 6];
        perm[..3].copy_from_slice(&[1.0 / 3.0; 3]);
        let v = dist(&perm);
        let (d, plan) = wasserstein(&u, &v, &cost).unwrap();
        assert!((d - 0.25).abs() < 1e-12, "{d} {:?}", plan.entries().collect::<Vec<_>>());
        for (a, b) in plan.col_sums().iter().zip(v.mass()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

//! Couplings between discrete measures and exact quadratic-cost transport.
//!
//! [`solve_w2`] runs a transportation simplex (north-west corner start,
//! dual potentials, cycle pivoting under Bland's rule). Its exit condition,
//! nonnegative reduced costs on every cell, is the optimality certificate.
//! [`is_cyclically_monotone`] gives an independent, primal-only certificate.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::measures::{dist_sq, DiscreteMeasure};

/// Admissible deviation of plan marginals from the prescribed weights.
pub const MARGINAL_TOL: f64 = 1e-9;

/// Masses at or below this value are dropped from emitted plans.
pub const DROP_TOL: f64 = 1e-15;

/// Slack allowed in cyclical-monotonicity comparisons.
pub const CYCLE_TOL: f64 = 1e-9;

const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub source: usize,
    pub target: usize,
    pub mass: f64,
}

/// A coupling `γ ∈ Γ(μ, ν)` stored by its support.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    source: DiscreteMeasure,
    target: DiscreteMeasure,
    entries: Vec<PlanEntry>,
}

impl TransportPlan {
    /// Validates indices, positivity, uniqueness of pairs and both marginals.
    pub fn new(source: DiscreteMeasure, target: DiscreteMeasure, entries: Vec<PlanEntry>) -> Result<Self> {
        if source.dim() != target.dim() {
            return Err(Error::DimensionMismatch {
                expected: source.dim(),
                got: target.dim(),
            });
        }
        let mut rows = vec![0.0; source.len()];
        let mut cols = vec![0.0; target.len()];
        let mut seen = BTreeMap::new();
        for e in &entries {
            if e.source >= source.len() || e.target >= target.len() {
                return Err(Error::InvalidPlan(format!(
                    "entry ({}, {}) out of range",
                    e.source, e.target
                )));
            }
            if !(e.mass > 0.0 && e.mass.is_finite()) {
                return Err(Error::InvalidPlan(format!(
                    "entry ({}, {}) has nonpositive mass {}",
                    e.source, e.target, e.mass
                )));
            }
            if seen.insert((e.source, e.target), ()).is_some() {
                return Err(Error::InvalidPlan(format!(
                    "duplicate entry ({}, {})",
                    e.source, e.target
                )));
            }
            rows[e.source] += e.mass;
            cols[e.target] += e.mass;
        }
        check_marginal(&rows, source.weights(), "row")?;
        check_marginal(&cols, target.weights(), "column")?;
        Ok(TransportPlan {
            source,
            target,
            entries,
        })
    }

    /// The plan pairing every atom of `mu` with itself.
    pub fn identity(mu: &DiscreteMeasure) -> Self {
        let entries = (0..mu.len())
            .map(|i| PlanEntry {
                source: i,
                target: i,
                mass: mu.weight(i),
            })
            .collect();
        TransportPlan {
            source: mu.clone(),
            target: mu.clone(),
            entries,
        }
    }

    pub fn source(&self) -> &DiscreteMeasure {
        &self.source
    }

    pub fn target(&self) -> &DiscreteMeasure {
        &self.target
    }

    pub fn entries(&self) -> &[PlanEntry] {
        &self.entries
    }

    pub fn support_len(&self) -> usize {
        self.entries.len()
    }

    /// `∫|x − y|² dγ`.
    pub fn cost(&self) -> f64 {
        transport_cost(self)
    }

    /// The same coupling read from target to source.
    pub fn transpose(&self) -> TransportPlan {
        TransportPlan {
            source: self.target.clone(),
            target: self.source.clone(),
            entries: self
                .entries
                .iter()
                .map(|e| PlanEntry {
                    source: e.target,
                    target: e.source,
                    mass: e.mass,
                })
                .collect(),
        }
    }
}

fn check_marginal(got: &[f64], want: &[f64], what: &str) -> Result<()> {
    for (k, (g, w)) in got.iter().zip(want).enumerate() {
        if (g - w).abs() > MARGINAL_TOL {
            return Err(Error::InvalidPlan(format!(
                "{what} {k} carries mass {g}, expected {w}"
            )));
        }
    }
    Ok(())
}

/// `Σ mass · |x_i − y_j|²` over the plan's support.
pub fn transport_cost(plan: &TransportPlan) -> f64 {
    plan.entries
        .iter()
        .map(|e| e.mass * dist_sq(plan.source.atom(e.source), plan.target.atom(e.target)))
        .sum()
}

/// Squared-distance cost matrix, row-major `mu.len() × nu.len()`.
pub fn cost_matrix(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Vec<f64> {
    mu.atoms()
        .flat_map(|x| nu.atoms().map(move |y| dist_sq(x, y)))
        .collect()
}

/// North-west corner allocation over the given row and column orders.
///
/// Returns exactly `m + n − 1` cells forming a spanning tree of the
/// bipartite row/column graph; some may carry zero mass.
fn northwest_cells(supply: &[f64], demand: &[f64], rows: &[usize], cols: &[usize]) -> Vec<(usize, usize, f64)> {
    let (m, n) = (rows.len(), cols.len());
    let mut ra: Vec<f64> = rows.iter().map(|&i| supply[i]).collect();
    let mut rb: Vec<f64> = cols.iter().map(|&j| demand[j]).collect();
    let mut cells = Vec::with_capacity(m + n - 1);
    let (mut a, mut b) = (0, 0);
    loop {
        let q = if a == m - 1 && b == n - 1 {
            // last cell absorbs rounding drift
            ra[a].max(rb[b]).max(0.0)
        } else {
            ra[a].min(rb[b])
        };
        cells.push((rows[a], cols[b], q));
        ra[a] -= q;
        rb[b] -= q;
        if a == m - 1 && b == n - 1 {
            break;
        }
        if a == m - 1 {
            b += 1;
        } else if b == n - 1 || ra[a] <= rb[b] {
            a += 1;
        } else {
            b += 1;
        }
    }
    cells
}

/// A feasible plan built by the north-west corner rule after reordering
/// source atoms by `rows` and target atoms by `cols`.
pub fn northwest_corner_plan(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    rows: &[usize],
    cols: &[usize],
) -> Result<TransportPlan> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            got: nu.dim(),
        });
    }
    if !is_permutation(rows, mu.len()) || !is_permutation(cols, nu.len()) {
        return Err(Error::InvalidArgument("row/column order must be a permutation".into()));
    }
    let entries = northwest_cells(mu.weights(), nu.weights(), rows, cols)
        .into_iter()
        .filter(|&(_, _, q)| q > DROP_TOL)
        .map(|(i, j, mass)| PlanEntry {
            source: i,
            target: j,
            mass,
        })
        .collect();
    TransportPlan::new(mu.clone(), nu.clone(), entries)
}

fn is_permutation(order: &[usize], n: usize) -> bool {
    let mut seen = vec![false; n];
    order.len() == n
        && order.iter().all(|&k| k < n && !std::mem::replace(&mut seen[k], true))
}

/// Result of an exact W₂ solve.
#[derive(Debug, Clone)]
pub struct OptimalTransport {
    pub plan: TransportPlan,
    /// `∫|x − y|² dγ` of the returned plan.
    pub cost: f64,
    pub w2: f64,
    /// Dual potentials `u_i + v_j ≤ c_ij`, tight on the basis.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// Smallest reduced cost `c_ij − u_i − v_j` at termination.
    pub min_reduced_cost: f64,
    pub pivots: usize,
}

/// Exact optimal transport for the squared Euclidean cost.
pub fn solve_w2(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<OptimalTransport> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            got: nu.dim(),
        });
    }
    let (m, n) = (mu.len(), nu.len());
    let cost = cost_matrix(mu, nu);
    let scale = cost.iter().cloned().fold(1.0, f64::max);
    let tol = 1e-12 * scale;

    let mut flow = vec![0.0; m * n];
    let mut basic = vec![false; m * n];
    let rows: Vec<usize> = (0..m).collect();
    let cols: Vec<usize> = (0..n).collect();
    for (i, j, q) in northwest_cells(mu.weights(), nu.weights(), &rows, &cols) {
        flow[i * n + j] = q;
        basic[i * n + j] = true;
    }

    let mut pivots = 0;
    let (u, v, min_reduced_cost) = loop {
        let tree = BasisTree::new(m, n, &basic);
        let (u, v) = tree.potentials(&cost);

        // Bland: first improving cell in row-major order.
        let mut entering = None;
        let mut min_rc = f64::INFINITY;
        for i in 0..m {
            for j in 0..n {
                let rc = cost[i * n + j] - u[i] - v[j];
                min_rc = min_rc.min(rc);
                if entering.is_none() && !basic[i * n + j] && rc < -tol {
                    entering = Some((i, j));
                }
            }
        }
        let Some((p, q)) = entering else {
            break (u, v, min_rc);
        };
        if pivots == MAX_PIVOTS {
            return Err(Error::SolverStalled(MAX_PIVOTS));
        }
        pivots += 1;

        // Cycle: entering (p,q) is +, then the tree path from column q back
        // to row p alternates − , + , − , ...
        let path = tree.path(m + q, p);
        let minus = path.iter().step_by(2);
        let theta = minus.clone().map(|&c| flow[c]).fold(f64::INFINITY, f64::min);
        let leaving = minus
            .clone()
            .copied()
            .filter(|&c| flow[c] == theta)
            .min()
            .expect("cycle has a minus cell");
        for (k, &c) in path.iter().enumerate() {
            if k % 2 == 0 {
                flow[c] -= theta;
            } else {
                flow[c] += theta;
            }
        }
        flow[p * n + q] += theta;
        flow[leaving] = 0.0;
        basic[leaving] = false;
        basic[p * n + q] = true;
    };

    let entries = (0..m * n)
        .filter(|&c| basic[c] && flow[c] > DROP_TOL)
        .map(|c| PlanEntry {
            source: c / n,
            target: c % n,
            mass: flow[c],
        })
        .collect();
    let plan = TransportPlan::new(mu.clone(), nu.clone(), entries)?;
    let total = transport_cost(&plan);
    Ok(OptimalTransport {
        w2: total.max(0.0).sqrt(),
        cost: total,
        plan,
        u,
        v,
        min_reduced_cost,
        pivots,
    })
}

/// Spanning tree of basic cells over row nodes `0..m` and column nodes
/// `m..m+n`.
struct BasisTree {
    m: usize,
    n: usize,
    adj: Vec<Vec<(usize, usize)>>,
}

impl BasisTree {
    fn new(m: usize, n: usize, basic: &[bool]) -> Self {
        let mut adj = vec![Vec::new(); m + n];
        for c in (0..m * n).filter(|&c| basic[c]) {
            let (i, j) = (c / n, c % n);
            adj[i].push((m + j, c));
            adj[m + j].push((i, c));
        }
        BasisTree { m, n, adj }
    }

    fn potentials(&self, cost: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (m, n) = (self.m, self.n);
        let mut pot = vec![f64::NAN; m + n];
        pot[0] = 0.0;
        let mut queue = VecDeque::from([0]);
        while let Some(a) = queue.pop_front() {
            for &(b, c) in &self.adj[a] {
                if pot[b].is_nan() {
                    // row potential + column potential = cell cost
                    pot[b] = cost[c] - pot[a];
                    queue.push_back(b);
                }
            }
        }
        debug_assert!(pot.iter().all(|p| !p.is_nan()), "basis is not spanning");
        (pot[..m].to_vec(), pot[m..].to_vec())
    }

    /// Cells on the unique tree path from node `from` to node `to`.
    fn path(&self, from: usize, to: usize) -> Vec<usize> {
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; self.m + self.n];
        let mut visited = vec![false; self.m + self.n];
        visited[from] = true;
        let mut queue = VecDeque::from([from]);
        while let Some(a) = queue.pop_front() {
            if a == to {
                break;
            }
            for &(b, c) in &self.adj[a] {
                if !visited[b] {
                    visited[b] = true;
                    parent[b] = Some((a, c));
                    queue.push_back(b);
                }
            }
        }
        let mut cells = Vec::new();
        let mut node = to;
        while let Some((prev, c)) = parent[node] {
            cells.push(c);
            node = prev;
        }
        cells.reverse();
        cells
    }
}

/// Default cycle length for [`is_cyclically_monotone`]: `min(support, 6)`.
pub fn default_cycle_len(plan: &TransportPlan) -> usize {
    plan.support_len().min(6)
}

/// Minimum weight of a closed walk of at most `max_cycle_len` steps in the
/// exchange graph `k → l : |x_k − y_l|² − |x_k − y_k|²`, computed with
/// min-plus matrix powers. Zero means no cyclic reassignment of targets
/// lowers the cost.
///
/// A closed walk splits into simple cycles no longer than itself, so the
/// result is negative exactly when some simple cycle of at most
/// `max_cycle_len` support points is. Its magnitude can exceed that of the
/// worst simple cycle, since a walk may repeat a cycle.
pub fn cyclical_monotonicity_gap(plan: &TransportPlan, max_cycle_len: usize) -> f64 {
    let s = plan.support_len();
    if s < 2 || max_cycle_len < 2 {
        return 0.0;
    }
    let xs: Vec<&[f64]> = plan.entries.iter().map(|e| plan.source.atom(e.source)).collect();
    let ys: Vec<&[f64]> = plan.entries.iter().map(|e| plan.target.atom(e.target)).collect();
    let mut w = vec![0.0; s * s];
    for k in 0..s {
        let own = dist_sq(xs[k], ys[k]);
        for l in 0..s {
            w[k * s + l] = if k == l { 0.0 } else { dist_sq(xs[k], ys[l]) - own };
        }
    }
    let mut walk = w.clone();
    for _ in 2..=max_cycle_len.min(s) {
        let mut next = vec![f64::INFINITY; s * s];
        for a in 0..s {
            for b in 0..s {
                let wab = walk[a * s + b];
                for c in 0..s {
                    let val = wab + w[b * s + c];
                    if val < next[a * s + c] {
                        next[a * s + c] = val;
                    }
                }
            }
        }
        walk = next;
    }
    (0..s).map(|k| walk[k * s + k]).fold(0.0, f64::min)
}

/// True when no cycle of at most `max_cycle_len` support points lowers the
/// cost by more than [`CYCLE_TOL`]. With `max_cycle_len` equal to the
/// support size this is a complete optimality certificate.
pub fn is_cyclically_monotone(plan: &TransportPlan, max_cycle_len: usize) -> bool {
    cyclical_monotonicity_gap(plan, max_cycle_len) >= -CYCLE_TOL
}

/// A coupling of three measures sharing the first marginal `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreePlan {
    base: DiscreteMeasure,
    second: DiscreteMeasure,
    third: DiscreteMeasure,
    entries: Vec<ThreeEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeEntry {
    pub base: usize,
    pub second: usize,
    pub third: usize,
    pub mass: f64,
}

impl ThreePlan {
    pub fn base(&self) -> &DiscreteMeasure {
        &self.base
    }

    pub fn second(&self) -> &DiscreteMeasure {
        &self.second
    }

    pub fn third(&self) -> &DiscreteMeasure {
        &self.third
    }

    pub fn entries(&self) -> &[ThreeEntry] {
        &self.entries
    }

    pub fn second_point(&self, e: &ThreeEntry) -> &[f64] {
        self.second.atom(e.second)
    }

    pub fn third_point(&self, e: &ThreeEntry) -> &[f64] {
        self.third.atom(e.third)
    }

    /// Pushforward through `(x₁, x₂, x₃) ↦ (x₁, x₂)`.
    pub fn project_12(&self) -> Result<TransportPlan> {
        self.project(|e| (e.base, e.second), self.base.clone(), self.second.clone())
    }

    /// Pushforward through `(x₁, x₂, x₃) ↦ (x₁, x₃)`.
    pub fn project_13(&self) -> Result<TransportPlan> {
        self.project(|e| (e.base, e.third), self.base.clone(), self.third.clone())
    }

    /// Pushforward through `(x₁, x₂, x₃) ↦ (x₂, x₃)`.
    pub fn project_23(&self) -> Result<TransportPlan> {
        self.project(|e| (e.second, e.third), self.second.clone(), self.third.clone())
    }

    fn project(
        &self,
        key: impl Fn(&ThreeEntry) -> (usize, usize),
        source: DiscreteMeasure,
        target: DiscreteMeasure,
    ) -> Result<TransportPlan> {
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for e in &self.entries {
            *acc.entry(key(e)).or_default() += e.mass;
        }
        let entries = acc
            .into_iter()
            .map(|((source, target), mass)| PlanEntry { source, target, mass })
            .collect();
        TransportPlan::new(source, target, entries)
    }
}

/// Glues two plans with a common source by making the second and third
/// coordinates conditionally independent given the first.
pub fn glue_plans(g12: &TransportPlan, g13: &TransportPlan) -> Result<ThreePlan> {
    if g12.source != g13.source {
        return Err(Error::SourceMismatch);
    }
    let base = g12.source.clone();
    let mut by_row_13: Vec<Vec<&PlanEntry>> = vec![Vec::new(); base.len()];
    for e in &g13.entries {
        by_row_13[e.source].push(e);
    }
    let mut entries = Vec::new();
    for e12 in &g12.entries {
        let a = base.weight(e12.source);
        for e13 in &by_row_13[e12.source] {
            let mass = e12.mass * e13.mass / a;
            if mass > 0.0 {
                entries.push(ThreeEntry {
                    base: e12.source,
                    second: e12.target,
                    third: e13.target,
                    mass,
                });
            }
        }
    }
    Ok(ThreePlan {
        base,
        second: g12.target.clone(),
        third: g13.target.clone(),
        entries,
    })
}

#[derive(Serialize, Deserialize)]
struct PlanFile {
    source: DiscreteMeasure,
    target: DiscreteMeasure,
    entries: Vec<(usize, usize, f64)>,
}

impl Serialize for TransportPlan {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        PlanFile {
            source: self.source.clone(),
            target: self.target.clone(),
            entries: self.entries.iter().map(|e| (e.source, e.target, e.mass)).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TransportPlan {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = PlanFile::deserialize(deserializer)?;
        let entries = raw
            .entries
            .into_iter()
            .map(|(source, target, mass)| PlanEntry { source, target, mass })
            .collect();
        TransportPlan::new(raw.source, raw.target, entries).map_err(serde::de::Error::custom)
    }
}

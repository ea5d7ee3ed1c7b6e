//! Exact discrete earth mover's distance.
//!
//! [`solve_transport`] solves the balanced transportation problem exactly as
//! a min-cost flow on the bipartite supply/demand graph. Ground distances are
//! scaled onto an integer lattice (see [`TransportSolver::cost_scale`]) and
//! masses must be integral, so the optimum is found without floating-point
//! comparisons. The solver never uses the closed-form score from
//! [`crate::metrics`]; [`emd_centralization`] is the independent route to the
//! same number.
//!
//! Indices are zero-based throughout: `d(i, j)` is the distance from supply
//! bucket `i` to demand bucket `j`.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::metrics::ProviderDistribution;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmdError {
    #[error("distribution has no positive mass")]
    NoMass,
    #[error("mass {0} at bucket {1} is negative or not finite")]
    InvalidMass(f64, usize),
    #[error("mass {0} at bucket {1} is not integral; scale masses before solving")]
    NonIntegralMass(f64, usize),
    #[error("unbalanced problem: supply {supply} != demand {demand}")]
    Unbalanced { supply: f64, demand: f64 },
    #[error("ground distance d({0}, {1}) = {2} is negative or not finite")]
    InvalidDistance(usize, usize, f64),
    #[error("instance too large for exact oracle ({cells} cells > {cap})")]
    TooLarge { cells: usize, cap: usize },
    #[error("reference needs at least one site")]
    EmptyReference,
}

/// Non-negative masses over buckets, with at least one positive mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    masses: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(masses: Vec<f64>) -> Result<Self, EmdError> {
        if let Some((i, &m)) = masses.iter().enumerate().find(|(_, m)| !m.is_finite() || **m < 0.0) {
            return Err(EmdError::InvalidMass(m, i));
        }
        if !masses.iter().any(|&m| m > 0.0) {
            return Err(EmdError::NoMass);
        }
        Ok(Self { masses })
    }

    pub fn from_counts(counts: &[u64]) -> Result<Self, EmdError> {
        Self::new(counts.iter().map(|&c| c as f64).collect())
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }
}

/// Distance between supply bucket `i` and demand bucket `j`.
pub trait GroundDistance {
    fn distance(&self, i: usize, j: usize) -> f64;
}

impl<F: Fn(usize, usize) -> f64> GroundDistance for F {
    fn distance(&self, i: usize, j: usize) -> f64 {
        self(i, j)
    }
}

/// Dense row-major cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    costs: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, costs: Vec<f64>) -> Self {
        assert_eq!(costs.len(), rows * cols, "cost matrix shape");
        Self { rows, cols, costs }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let costs = (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .map(|(i, j)| f(i, j))
            .collect();
        Self { rows, cols, costs }
    }

    pub fn transposed(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.costs[j * self.cols + i])
    }
}

impl GroundDistance for CostMatrix {
    fn distance(&self, i: usize, j: usize) -> f64 {
        self.costs[i * self.cols + j]
    }
}

/// Swaps the roles of supply and demand buckets.
pub struct Transposed<D>(pub D);

impl<D: GroundDistance> GroundDistance for Transposed<D> {
    fn distance(&self, i: usize, j: usize) -> f64 {
        self.0.distance(j, i)
    }
}

/// An optimal (or, from the fast path, any feasible) transport plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowPlan {
    /// Non-zero flows keyed by `(supply, demand)`.
    pub flows: BTreeMap<(usize, usize), f64>,
    pub total_work: f64,
}

impl FlowPlan {
    pub fn row_sums(&self, rows: usize) -> Vec<f64> {
        let mut sums = vec![0.0; rows];
        for (&(i, _), f) in &self.flows {
            sums[i] += f;
        }
        sums
    }

    pub fn col_sums(&self, cols: usize) -> Vec<f64> {
        let mut sums = vec![0.0; cols];
        for (&(_, j), f) in &self.flows {
            sums[j] += f;
        }
        sums
    }

    /// Whether row and column sums match the marginals within `tol`.
    pub fn is_feasible(&self, a: &DiscreteDistribution, r: &DiscreteDistribution, tol: f64) -> bool {
        let close = |x: &[f64], y: &[f64]| x.iter().zip(y).all(|(p, q)| (p - q).abs() <= tol);
        self.flows.values().all(|&f| f >= 0.0)
            && close(&self.row_sums(a.len()), a.masses())
            && close(&self.col_sums(r.len()), r.masses())
    }
}

/// Exact transportation solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportSolver {
    /// Largest `n * m` the solver accepts.
    pub max_cells: usize,
    /// Ground distances are multiplied by this and rounded to integers.
    pub cost_scale: f64,
}

impl Default for TransportSolver {
    fn default() -> Self {
        Self {
            max_cells: 250_000,
            cost_scale: 1e9,
        }
    }
}

const MASS_TOL: f64 = 1e-9;
// Keeps path lengths well inside i64 for up to max_cells nodes.
const MAX_SCALED_COST: f64 = (1u64 << 42) as f64;

impl TransportSolver {
    pub fn solve(
        &self,
        a: &DiscreteDistribution,
        r: &DiscreteDistribution,
        d: &impl GroundDistance,
    ) -> Result<FlowPlan, EmdError> {
        let (n, m) = (a.len(), r.len());
        let cells = n.saturating_mul(m);
        if cells > self.max_cells {
            return Err(EmdError::TooLarge {
                cells,
                cap: self.max_cells,
            });
        }
        check_balance(a, r)?;
        let supply = integral_masses(a)?;
        let demand = integral_masses(r)?;

        let mut costs = Vec::with_capacity(cells);
        for i in 0..n {
            for j in 0..m {
                let dij = d.distance(i, j);
                let scaled = dij * self.cost_scale;
                if !dij.is_finite() || dij < 0.0 || scaled > MAX_SCALED_COST {
                    return Err(EmdError::InvalidDistance(i, j, dij));
                }
                costs.push(scaled.round() as i64);
            }
        }

        let mut net = FlowNetwork::new(n + m + 2);
        let (source, sink) = (n + m, n + m + 1);
        for (i, &s) in supply.iter().enumerate() {
            if s > 0 {
                net.add_edge(source, i, s, 0);
            }
        }
        for (j, &t) in demand.iter().enumerate() {
            if t > 0 {
                net.add_edge(n + j, sink, t, 0);
            }
        }
        let mut cell_edges = Vec::with_capacity(cells);
        for i in 0..n {
            for j in 0..m {
                if supply[i] > 0 && demand[j] > 0 {
                    let e = net.add_edge(i, n + j, supply[i].min(demand[j]), costs[i * m + j]);
                    cell_edges.push((i, j, e));
                }
            }
        }
        let pushed = net.min_cost_flow(source, sink);
        debug_assert_eq!(pushed, supply.iter().sum::<i64>());

        let mut flows = BTreeMap::new();
        let mut total_work = 0.0;
        for (i, j, e) in cell_edges {
            let f = net.flow_on(e);
            if f > 0 {
                let f = f as f64;
                total_work += f * d.distance(i, j);
                flows.insert((i, j), f);
            }
        }
        Ok(FlowPlan { flows, total_work })
    }
}

/// Minimal-work transport plan from `a` to `r` under `d`, using default settings.
pub fn solve_transport(
    a: &DiscreteDistribution,
    r: &DiscreteDistribution,
    d: &impl GroundDistance,
) -> Result<FlowPlan, EmdError> {
    TransportSolver::default().solve(a, r, d)
}

/// Fast path for distances that depend only on the supply bucket.
///
/// Every feasible plan then costs `sum_i a_i * row_cost[i]`, so the
/// north-west corner plan is optimal. Masses need not be integral.
pub fn solve_row_constant(
    a: &DiscreteDistribution,
    r: &DiscreteDistribution,
    row_cost: &[f64],
) -> Result<FlowPlan, EmdError> {
    check_balance(a, r)?;
    assert_eq!(row_cost.len(), a.len(), "one cost per supply bucket");
    if let Some((i, &c)) = row_cost.iter().enumerate().find(|(_, c)| !c.is_finite() || **c < 0.0) {
        return Err(EmdError::InvalidDistance(i, 0, c));
    }
    let mut flows = BTreeMap::new();
    let mut left: Vec<f64> = r.masses().to_vec();
    let mut j = 0;
    let mut total_work = 0.0;
    for (i, &mass) in a.masses().iter().enumerate() {
        let mut rest = mass;
        while rest > MASS_TOL && j < left.len() {
            let f = rest.min(left[j]);
            if f > 0.0 {
                *flows.entry((i, j)).or_insert(0.0) += f;
                total_work += f * row_cost[i];
            }
            rest -= f;
            left[j] -= f;
            if left[j] <= MASS_TOL {
                j += 1;
            }
        }
    }
    Ok(FlowPlan { flows, total_work })
}

fn check_balance(a: &DiscreteDistribution, r: &DiscreteDistribution) -> Result<(), EmdError> {
    let (supply, demand) = (a.total(), r.total());
    if (supply - demand).abs() > MASS_TOL * supply.max(demand).max(1.0) {
        return Err(EmdError::Unbalanced { supply, demand });
    }
    Ok(())
}

fn integral_masses(dist: &DiscreteDistribution) -> Result<Vec<i64>, EmdError> {
    dist.masses()
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let rounded = m.round();
            if (m - rounded).abs() > MASS_TOL || rounded > (1u64 << 52) as f64 {
                Err(EmdError::NonIntegralMass(m, i))
            } else {
                Ok(rounded as i64)
            }
        })
        .collect()
}

/// `C` unit buckets: every site on its own provider.
pub fn decentralized_reference(sites: u64) -> Result<DiscreteDistribution, EmdError> {
    if sites == 0 {
        return Err(EmdError::EmptyReference);
    }
    DiscreteDistribution::new(vec![1.0; sites as usize])
}

/// Centralization score computed by actually solving the transport problem
/// from the observed counts to the decentralized reference, with
/// `d(i, j) = (a_i - 1) / C`, and normalizing the work by `C`.
pub fn emd_centralization(dist: &ProviderDistribution) -> Result<f64, EmdError> {
    emd_centralization_with(&TransportSolver::default(), dist)
}

pub fn emd_centralization_with(solver: &TransportSolver, dist: &ProviderDistribution) -> Result<f64, EmdError> {
    let counts = dist.sorted_counts();
    let c = dist.total();
    let a = DiscreteDistribution::from_counts(&counts)?;
    let r = decentralized_reference(c)?;
    let c = c as f64;
    let d = |i: usize, _j: usize| (counts[i] as f64 - 1.0) / c;
    let plan = solver.solve(&a, &r, &d)?;
    Ok(plan.total_work / c)
}

/// Normalized minimal work between two mass vectors after scaling both to
/// unit mass. Masses must be integral; the normalization is done exactly by
/// cross-multiplying the totals.
pub fn emd_between_masses(
    a: &DiscreteDistribution,
    b: &DiscreteDistribution,
    d: &impl GroundDistance,
) -> Result<f64, EmdError> {
    let ta = integral_masses(a)?.iter().sum::<i64>() as f64;
    let tb = integral_masses(b)?.iter().sum::<i64>() as f64;
    let sa = DiscreteDistribution::new(a.masses().iter().map(|m| m * tb).collect())?;
    let sb = DiscreteDistribution::new(b.masses().iter().map(|m| m * ta).collect())?;
    let plan = solve_transport(&sa, &sb, d)?;
    Ok(plan.total_work / (ta * tb))
}

/// EMD between two countries' distributions, aligned over the sorted union of
/// their provider keys; `d` is indexed by position in that union.
pub fn emd_between(
    a: &ProviderDistribution,
    b: &ProviderDistribution,
    d: &impl GroundDistance,
) -> Result<f64, EmdError> {
    let keys: BTreeSet<&String> = a.counts().keys().chain(b.counts().keys()).collect();
    let align = |p: &ProviderDistribution| {
        keys.iter()
            .map(|k| p.counts().get(*k).copied().unwrap_or(0) as f64)
            .collect::<Vec<_>>()
    };
    emd_between_masses(
        &DiscreteDistribution::new(align(a))?,
        &DiscreteDistribution::new(align(b))?,
        d,
    )
}

/// The provider keys `emd_between` indexes its ground distance by.
pub fn union_keys(a: &ProviderDistribution, b: &ProviderDistribution) -> Vec<String> {
    let keys: BTreeSet<&String> = a.counts().keys().chain(b.counts().keys()).collect();
    keys.into_iter().cloned().collect()
}

struct Edge {
    to: usize,
    cap: i64,
    cost: i64,
}

/// Residual network solved by primal-dual min-cost flow: Dijkstra on reduced
/// costs to update potentials, then a blocking flow over the zero-reduced-cost
/// subgraph.
struct FlowNetwork {
    adj: Vec<Vec<usize>>,
    edges: Vec<Edge>,
    original_cap: Vec<i64>,
    potential: Vec<i64>,
}

impl FlowNetwork {
    fn new(nodes: usize) -> Self {
        Self {
            adj: vec![Vec::new(); nodes],
            edges: Vec::new(),
            original_cap: Vec::new(),
            potential: vec![0; nodes],
        }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: i64, cost: i64) -> usize {
        let id = self.edges.len();
        self.edges.push(Edge { to, cap, cost });
        self.edges.push(Edge {
            to: from,
            cap: 0,
            cost: -cost,
        });
        self.original_cap.extend([cap, 0]);
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }

    fn flow_on(&self, edge: usize) -> i64 {
        self.original_cap[edge] - self.edges[edge].cap
    }

    fn tail(&self, edge: usize) -> usize {
        self.edges[edge ^ 1].to
    }

    fn reduced_cost(&self, edge: usize) -> i64 {
        let e = &self.edges[edge];
        e.cost + self.potential[self.tail(edge)] - self.potential[e.to]
    }

    fn min_cost_flow(&mut self, source: usize, sink: usize) -> i64 {
        let nodes = self.adj.len();
        let mut total = 0;
        let mut dist = vec![i64::MAX; nodes];
        loop {
            dist.fill(i64::MAX);
            dist[source] = 0;
            let mut heap = BinaryHeap::new();
            heap.push(Reverse((0i64, source)));
            while let Some(Reverse((du, u))) = heap.pop() {
                if du > dist[u] {
                    continue;
                }
                for &e in &self.adj[u] {
                    if self.edges[e].cap == 0 {
                        continue;
                    }
                    let v = self.edges[e].to;
                    let nd = du + self.reduced_cost(e);
                    if nd < dist[v] {
                        dist[v] = nd;
                        heap.push(Reverse((nd, v)));
                    }
                }
            }
            let reach = dist[sink];
            if reach == i64::MAX {
                return total;
            }
            for (p, d) in self.potential.iter_mut().zip(&dist) {
                *p += (*d).min(reach);
            }
            total += self.blocking_flows(source, sink);
        }
    }

    fn admissible(&self, e: usize) -> bool {
        self.edges[e].cap > 0 && self.reduced_cost(e) == 0
    }

    fn blocking_flows(&mut self, source: usize, sink: usize) -> i64 {
        let nodes = self.adj.len();
        let mut pushed = 0;
        let mut level = vec![u32::MAX; nodes];
        let mut cursor = vec![0usize; nodes];
        loop {
            level.fill(u32::MAX);
            level[source] = 0;
            let mut queue = VecDeque::from([source]);
            while let Some(u) = queue.pop_front() {
                for &e in &self.adj[u] {
                    let v = self.edges[e].to;
                    if level[v] == u32::MAX && self.admissible(e) {
                        level[v] = level[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
            if level[sink] == u32::MAX {
                return pushed;
            }
            cursor.fill(0);
            loop {
                let f = self.augment(source, sink, i64::MAX, &level, &mut cursor);
                if f == 0 {
                    break;
                }
                pushed += f;
            }
        }
    }

    fn augment(&mut self, u: usize, sink: usize, limit: i64, level: &[u32], cursor: &mut [usize]) -> i64 {
        if u == sink {
            return limit;
        }
        while cursor[u] < self.adj[u].len() {
            let e = self.adj[u][cursor[u]];
            let v = self.edges[e].to;
            if level[v] == level[u] + 1 && self.admissible(e) {
                let f = self.augment(v, sink, limit.min(self.edges[e].cap), level, cursor);
                if f > 0 {
                    self.edges[e].cap -= f;
                    self.edges[e ^ 1].cap += f;
                    return f;
                }
            }
            cursor[u] += 1;
        }
        0
    }
}

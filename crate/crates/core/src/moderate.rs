//! Simplicial branch-and-bound for the moderate-assignment problem.
//!
//! With moderate assignment enabled, the per-worker success rate is a
//! ratio of cubics in the worker's sampling rate (see
//! [`crate::worker::ratio_coefficients`]), and the total objective — a sum
//! of such ratios — is non-convex even though every numerator and
//! denominator is convex on the feasible region. The solver here runs a
//! branch-and-bound over simplexes:
//!
//! 1. start from a simplex whose hull covers the feasible region (for the
//!    rate block, the budget simplex itself: the origin plus one vertex
//!    per worker holding the whole budget);
//! 2. bound each simplex from above by `sum_j [max_i f_j(V_i)]+ / m_j`,
//!    where the vertex max is valid because `f_j` is convex and `m_j` is
//!    a certified lower bound on `g_j` from its tangent plane at the
//!    centroid (valid because `g_j` is convex), floored by the
//!    polynomial's value at the origin;
//! 3. bound from below by evaluating the true objective at the vertices
//!    and centroid, projected onto the feasible region;
//! 4. split the worst simplex at the midpoint of its longest edge until
//!    the relative gap falls under `rho`.
//!
//! The joint rate/probability optimization alternates this solver over
//! the rate block with per-coordinate solves over the assignment
//! probabilities, which is exact for each block because the objective is
//! separable per worker once the other block is fixed.

use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::worker::{ratio_coefficients, ratio_coefficients_in_p, Policy, WorkerParams};
use crate::{Error, Result};

/// Evaluates a cubic `c[0] + c[1] x + c[2] x^2 + c[3] x^3`.
pub fn poly_eval(c: &[f64; 4], x: f64) -> f64 {
    ((c[3] * x + c[2]) * x + c[1]) * x + c[0]
}

/// Evaluates the derivative of a cubic.
pub fn poly_deriv(c: &[f64; 4], x: f64) -> f64 {
    (3.0 * c[3] * x + 2.0 * c[2]) * x + c[1]
}

/// One fractional term `f(x[var]) / g(x[var])` of a sum-of-ratios
/// objective; `f` and `g` are cubics in the designated coordinate.
#[derive(Debug, Clone)]
pub struct RatioTerm {
    /// Coordinate this ratio depends on.
    pub var: usize,
    /// Numerator coefficients, ascending powers.
    pub f: [f64; 4],
    /// Denominator coefficients, ascending powers.
    pub g: [f64; 4],
}

impl RatioTerm {
    fn f_at(&self, x: &[f64]) -> f64 {
        poly_eval(&self.f, x[self.var])
    }

    fn g_at(&self, x: &[f64]) -> f64 {
        poly_eval(&self.g, x[self.var])
    }

    /// Certified lower bound of `g` over the nonnegative orthant: the
    /// constant term, valid because every coefficient is nonnegative.
    fn g_floor(&self) -> f64 {
        self.g[0]
    }
}

/// Linear feasible region of one optimization block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeasibleRegion {
    /// `x >= 0`, `sum(x) <= budget`.
    Budget { budget: f64, dim: usize },
    /// `0 <= x_k <= 1` per coordinate.
    UnitBox { dim: usize },
}

impl FeasibleRegion {
    pub fn dim(&self) -> usize {
        match *self {
            FeasibleRegion::Budget { dim, .. } => dim,
            FeasibleRegion::UnitBox { dim } => dim,
        }
    }

    /// Characteristic length used for the split-degeneracy floor.
    fn scale(&self) -> f64 {
        match *self {
            FeasibleRegion::Budget { budget, .. } => budget,
            FeasibleRegion::UnitBox { .. } => 1.0,
        }
    }

    /// Maps a point into the region: coordinates are clamped nonnegative
    /// (and to 1 for the box), and budget overruns are scaled away.
    pub fn project(&self, x: &mut [f64]) {
        match *self {
            FeasibleRegion::Budget { budget, .. } => {
                for v in x.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                let total: f64 = x.iter().sum();
                if total > budget && total > 0.0 {
                    let scale = budget / total;
                    for v in x.iter_mut() {
                        *v *= scale;
                    }
                }
            }
            FeasibleRegion::UnitBox { .. } => {
                for v in x.iter_mut() {
                    *v = v.clamp(0.0, 1.0);
                }
            }
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        match *self {
            FeasibleRegion::Budget { budget, .. } => {
                x.iter().all(|&v| v >= -tol) && x.iter().sum::<f64>() <= budget + tol
            }
            FeasibleRegion::UnitBox { .. } => {
                x.iter().all(|&v| (-tol..=1.0 + tol).contains(&v))
            }
        }
    }

    /// A simplex whose hull covers the region. The budget simplex covers
    /// itself exactly; the unit box is covered by the standard simplex
    /// scaled by the dimension.
    fn covering_simplex(&self) -> Simplex {
        let n = self.dim();
        let reach = match *self {
            FeasibleRegion::Budget { budget, .. } => budget,
            FeasibleRegion::UnitBox { dim } => dim as f64,
        };
        let mut vertices = vec![vec![0.0; n]];
        for i in 0..n {
            let mut v = vec![0.0; n];
            v[i] = reach;
            vertices.push(v);
        }
        Simplex { vertices }
    }

    /// True only when the simplex hull certainly misses the region
    /// (some coordinate exceeds the box on every hull point). Never true
    /// for the budget region, whose covering simplex equals the region.
    fn certainly_disjoint(&self, s: &Simplex) -> bool {
        match *self {
            FeasibleRegion::Budget { .. } => false,
            FeasibleRegion::UnitBox { dim } => (0..dim).any(|k| {
                s.vertices
                    .iter()
                    .map(|v| v[k])
                    .fold(f64::INFINITY, f64::min)
                    > 1.0 + 1e-12
            }),
        }
    }
}

/// Geometric simplex: `n + 1` vertices in `n`-space.
#[derive(Debug, Clone, PartialEq)]
pub struct Simplex {
    vertices: Vec<Vec<f64>>,
}

impl Simplex {
    /// Builds a simplex from `dim + 1` vertices of equal dimension.
    /// Degenerate (affinely dependent) vertex sets are representable;
    /// they simply have zero volume.
    pub fn new(vertices: Vec<Vec<f64>>) -> Result<Self> {
        let dim = match vertices.first() {
            Some(v) => v.len(),
            None => {
                return Err(Error::InvalidParameter("simplex needs vertices".into()));
            }
        };
        if dim == 0 || vertices.len() != dim + 1 {
            return Err(Error::InvalidParameter(format!(
                "simplex in dimension {dim} needs {} vertices, got {}",
                dim + 1,
                vertices.len()
            )));
        }
        if vertices.iter().any(|v| v.len() != dim) {
            return Err(Error::InvalidParameter("vertex dimensions disagree".into()));
        }
        Ok(Self { vertices })
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].len()
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn centroid(&self) -> Vec<f64> {
        let n = self.dim();
        let mut c = vec![0.0; n];
        for v in &self.vertices {
            for (acc, x) in c.iter_mut().zip(v) {
                *acc += x;
            }
        }
        let count = self.vertices.len() as f64;
        for acc in &mut c {
            *acc /= count;
        }
        c
    }

    /// Longest edge length and its vertex-index pair; ties resolve to the
    /// lexicographically smallest pair.
    pub fn longest_edge(&self) -> (f64, (usize, usize)) {
        let mut best = (0.0, (0, 1));
        for i in 0..self.vertices.len() {
            for j in (i + 1)..self.vertices.len() {
                let len = dist(&self.vertices[i], &self.vertices[j]);
                if len > best.0 {
                    best = (len, (i, j));
                }
            }
        }
        best
    }

    /// Hull volume `|det(V_k - V_0)| / n!`.
    pub fn volume(&self) -> f64 {
        let n = self.dim();
        let mut m: Vec<Vec<f64>> = (1..=n)
            .map(|k| {
                (0..n)
                    .map(|c| self.vertices[k][c] - self.vertices[0][c])
                    .collect()
            })
            .collect();
        let mut det = 1.0;
        for col in 0..n {
            let pivot_row = (col..n)
                .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
                .unwrap();
            if m[pivot_row][col] == 0.0 {
                return 0.0;
            }
            if pivot_row != col {
                m.swap(col, pivot_row);
                det = -det;
            }
            det *= m[col][col];
            for row in (col + 1)..n {
                let factor = m[row][col] / m[col][col];
                for k in col..n {
                    m[row][k] -= factor * m[col][k];
                }
            }
        }
        let mut factorial = 1.0;
        for k in 2..=n {
            factorial *= k as f64;
        }
        det.abs() / factorial
    }

    /// Splits at the midpoint of the longest edge. The children share the
    /// midpoint, their hulls partition the parent hull, and no child edge
    /// exceeds the parent's longest edge.
    pub fn bisect_longest_edge(&self) -> (Simplex, Simplex) {
        let (_, (i, j)) = self.longest_edge();
        let mid: Vec<f64> = self.vertices[i]
            .iter()
            .zip(&self.vertices[j])
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let mut keep_i = self.vertices.clone();
        keep_i[j] = mid.clone();
        let mut keep_j = self.vertices.clone();
        keep_j[i] = mid;
        (Simplex { vertices: keep_i }, Simplex { vertices: keep_j })
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Budget simplex for an `n`-worker rate block: the origin plus one
/// vertex per worker carrying the entire budget. Its hull equals the
/// feasible region `{alpha >= 0, sum(alpha) <= budget}`.
pub fn initial_simplex(budget: f64, n: usize) -> Result<Simplex> {
    if !(budget.is_finite() && budget > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "budget must be positive, got {budget}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one worker".into()));
    }
    Ok(FeasibleRegion::Budget { budget, dim: n }.covering_simplex())
}

/// A sum-of-ratios maximization over a linear region, with the covering
/// simplex the search starts from.
#[derive(Debug, Clone)]
pub struct SumOfRatiosProblem {
    ratios: Vec<RatioTerm>,
    region: FeasibleRegion,
    s0: Simplex,
}

impl SumOfRatiosProblem {
    /// Builds a problem, validating that every denominator's certified
    /// floor is positive.
    pub fn new(ratios: Vec<RatioTerm>, region: FeasibleRegion) -> Result<Self> {
        if ratios.is_empty() {
            return Err(Error::InvalidProblem("no ratio terms".into()));
        }
        for (j, r) in ratios.iter().enumerate() {
            if r.var >= region.dim() {
                return Err(Error::InvalidProblem(format!(
                    "ratio {j} references coordinate {} in dimension {}",
                    r.var,
                    region.dim()
                )));
            }
            if r.f.iter().chain(&r.g).any(|c| !c.is_finite()) {
                return Err(Error::InvalidProblem(format!("ratio {j} has nonfinite coefficients")));
            }
            if r.g_floor() <= 0.0 {
                return Err(Error::InvalidProblem(format!(
                    "ratio {j} has nonpositive denominator floor {}",
                    r.g_floor()
                )));
            }
        }
        let s0 = region.covering_simplex();
        Ok(Self { ratios, region, s0 })
    }

    /// Rate block at fixed assignment probabilities: one ratio per worker
    /// over the budget simplex.
    pub fn alpha_block(workers: &[WorkerParams], p: &[f64], budget: f64) -> Result<Self> {
        if workers.is_empty() || workers.len() != p.len() {
            return Err(Error::InvalidProblem(format!(
                "{} workers with {} probabilities",
                workers.len(),
                p.len()
            )));
        }
        if !(budget.is_finite() && budget > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "budget must be positive, got {budget}"
            )));
        }
        let ratios = workers
            .iter()
            .zip(p)
            .enumerate()
            .map(|(i, (w, &pi))| {
                let (f, g) = ratio_coefficients(w, pi)?;
                Ok(RatioTerm { var: i, f, g })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(ratios, FeasibleRegion::Budget { budget, dim: workers.len() })
    }

    /// Single worker's probability block at a fixed sampling rate: a
    /// one-dimensional problem on `[0, 1]`.
    pub fn p_coordinate(worker: &WorkerParams, alpha: f64) -> Result<Self> {
        let (f, g) = ratio_coefficients_in_p(worker, alpha)?;
        Self::new(vec![RatioTerm { var: 0, f, g }], FeasibleRegion::UnitBox { dim: 1 })
    }

    /// Joint probability block at fixed sampling rates, over a simplex
    /// covering the unit box. The per-coordinate route is preferred; this
    /// exists for fidelity testing of the n-dimensional search.
    pub fn p_block_joint(workers: &[WorkerParams], alpha: &[f64]) -> Result<Self> {
        if workers.is_empty() || workers.len() != alpha.len() {
            return Err(Error::InvalidProblem(format!(
                "{} workers with {} rates",
                workers.len(),
                alpha.len()
            )));
        }
        let ratios = workers
            .iter()
            .zip(alpha)
            .enumerate()
            .map(|(i, (w, &a))| {
                let (f, g) = ratio_coefficients_in_p(w, a)?;
                Ok(RatioTerm { var: i, f, g })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(ratios, FeasibleRegion::UnitBox { dim: workers.len() })
    }

    /// Objective value `sum_j f_j(x) / g_j(x)`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.ratios.iter().map(|r| r.f_at(x) / r.g_at(x)).sum()
    }

    pub fn region(&self) -> &FeasibleRegion {
        &self.region
    }

    pub fn initial(&self) -> &Simplex {
        &self.s0
    }

    pub fn dim(&self) -> usize {
        self.region.dim()
    }
}

/// Upper bound on the objective over `simplex` intersected with the
/// feasible region:
///
/// ```text
/// UB(S) = sum_j [max_i f_j(V_i)]+ / max(m_j(S), g_j(0))
/// ```
///
/// The vertex max dominates `f_j` on the hull by convexity; `m_j(S)` is
/// the tangent plane of `g_j` at the centroid minimized over the
/// vertices, a certified lower bound by convexity, floored by the
/// origin value which bounds `g_j` below on the whole orthant. The bound
/// collapses to the exact objective as the simplex shrinks to a point.
pub fn upper_bound(simplex: &Simplex, problem: &SumOfRatiosProblem) -> Result<f64> {
    let centroid = simplex.centroid();
    let mut total = 0.0;
    for ratio in &problem.ratios {
        let f_max = simplex
            .vertices()
            .iter()
            .map(|v| ratio.f_at(v))
            .fold(f64::NEG_INFINITY, f64::max);
        let g_c = ratio.g_at(&centroid);
        let slope = poly_deriv(&ratio.g, centroid[ratio.var]);
        let m_lin = simplex
            .vertices()
            .iter()
            .map(|v| g_c + slope * (v[ratio.var] - centroid[ratio.var]))
            .fold(f64::INFINITY, f64::min);
        let m = m_lin.max(ratio.g_floor());
        if m <= 0.0 {
            return Err(Error::InvalidProblem(format!(
                "denominator lower bound {m} is nonpositive"
            )));
        }
        total += f_max.max(0.0) / m;
    }
    Ok(total)
}

/// Best feasible value found inside a simplex: evaluates the true
/// objective at every vertex and at the centroid, each projected onto the
/// feasible region, and keeps the best `(value, point)`.
pub fn lower_bound(simplex: &Simplex, problem: &SumOfRatiosProblem) -> (f64, Vec<f64>) {
    let mut best_value = f64::NEG_INFINITY;
    let mut best_point = Vec::new();
    let mut consider = |candidate: &[f64]| {
        let mut point = candidate.to_vec();
        problem.region.project(&mut point);
        let value = problem.objective(&point);
        if value > best_value {
            best_value = value;
            best_point = point;
        }
    };
    for v in simplex.vertices() {
        consider(v);
    }
    consider(&simplex.centroid());
    (best_value, best_point)
}

/// Maximizes a univariate function on `[lo, hi]` by a coarse scan
/// followed by golden-section refinement around the best bracket.
fn line_max(eval: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    if hi <= lo {
        return (lo, eval(lo));
    }
    const SCAN: usize = 32;
    let step = (hi - lo) / SCAN as f64;
    let mut best_x = lo;
    let mut best_v = eval(lo);
    for k in 1..=SCAN {
        let x = lo + step * k as f64;
        let v = eval(x);
        if v > best_v {
            best_v = v;
            best_x = x;
        }
    }
    let mut a = (best_x - step).max(lo);
    let mut b = (best_x + step).min(hi);
    let inv_phi = 0.618_033_988_749_894_9_f64;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = eval(x1);
    let mut f2 = eval(x2);
    for _ in 0..70 {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = eval(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = eval(x2);
        }
    }
    let mid = 0.5 * (a + b);
    let fm = eval(mid);
    if fm > best_v {
        (mid, fm)
    } else {
        (best_x, best_v)
    }
}

/// Local polish of a feasible point: exact-ish single-coordinate ascent
/// plus, on the budget region, pairwise budget exchanges between
/// coordinates. Every accepted move stays feasible and improves the true
/// objective, so the result is always a valid incumbent.
fn polish_point(problem: &SumOfRatiosProblem, point: &mut [f64]) -> f64 {
    let dim = problem.dim();
    let coord_value = |x: f64, var: usize| -> f64 {
        problem
            .ratios
            .iter()
            .filter(|r| r.var == var)
            .map(|r| poly_eval(&r.f, x) / poly_eval(&r.g, x))
            .sum()
    };
    let mut value = problem.objective(point);
    for _ in 0..8 {
        let before = value;
        for k in 0..dim {
            let hi = match problem.region {
                FeasibleRegion::Budget { budget, .. } => {
                    let slack = budget - point.iter().sum::<f64>();
                    (point[k] + slack.max(0.0)).min(budget)
                }
                FeasibleRegion::UnitBox { .. } => 1.0,
            };
            let current = coord_value(point[k], k);
            let (x, v) = line_max(|x| coord_value(x, k), 0.0, hi);
            if v > current {
                point[k] = x;
            }
        }
        if let FeasibleRegion::Budget { .. } = problem.region {
            for i in 0..dim {
                for j in 0..dim {
                    if i == j {
                        continue;
                    }
                    let (xi, xj) = (point[i], point[j]);
                    let current = coord_value(xi, i) + coord_value(xj, j);
                    let (t, v) = line_max(
                        |t| coord_value(xi + t, i) + coord_value(xj - t, j),
                        -xi,
                        xj,
                    );
                    if v > current {
                        point[i] = xi + t;
                        point[j] = xj - t;
                    }
                }
            }
        }
        value = problem.objective(point);
        if value - before <= 1e-14 * (1.0 + value.abs()) {
            break;
        }
    }
    // Rounding can leave ulp-level dust on coordinates that belong on a
    // bound; snap it away and price the snapped point honestly.
    let snap = 1e-12 * problem.region.scale();
    for v in point.iter_mut() {
        if *v < snap {
            *v = 0.0;
        } else if matches!(problem.region, FeasibleRegion::UnitBox { .. }) && 1.0 - *v < snap {
            *v = 1.0;
        }
    }
    problem.objective(point)
}

/// Node selection rule for the search loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeSelection {
    /// Refine the node with the longest edge (default).
    LargestEdge,
    /// Refine the node with the largest upper bound.
    BestBound,
}

/// Branch-and-bound search controls.
#[derive(Debug, Clone)]
pub struct BnBOptions {
    /// Relative stopping tolerance: stop once `UB - LB <= rho * UB`.
    pub rho: f64,
    /// Cap on bound-evaluated nodes.
    pub node_cap: usize,
    /// Cap on split iterations.
    pub iteration_cap: usize,
    pub selection: NodeSelection,
    /// Feasible point used to seed the incumbent.
    pub warm_start: Option<Vec<f64>>,
    /// Record per-iteration bound evolution in the report.
    pub record_trace: bool,
}

impl Default for BnBOptions {
    fn default() -> Self {
        Self {
            rho: 1e-4,
            node_cap: 1_000_000,
            iteration_cap: 1_000_000,
            selection: NodeSelection::LargestEdge,
            warm_start: None,
            record_trace: false,
        }
    }
}

/// One search cell: a simplex with its certified upper bound and the best
/// feasible point found inside it.
#[derive(Debug, Clone)]
pub struct BnBNode {
    pub simplex: Simplex,
    pub upper_bound: f64,
    pub best_point: Vec<f64>,
    volume: f64,
}

/// Bound evolution snapshot taken at the top of each iteration.
#[derive(Debug, Clone, Serialize)]
pub struct BnBTraceEntry {
    pub iteration: usize,
    pub upper_bound: f64,
    pub lower_bound: f64,
    pub active_nodes: usize,
    pub active_volume: f64,
    pub pruned_volume: f64,
}

/// Search outcome.
#[derive(Debug, Clone, Serialize)]
pub struct BnBReport {
    /// Best feasible point found.
    pub best_point: Vec<f64>,
    /// Objective at `best_point` (the incumbent).
    pub lower_bound: f64,
    /// Final global upper bound.
    pub upper_bound: f64,
    /// Split iterations performed.
    pub iterations: usize,
    /// Nodes whose bounds were evaluated.
    pub nodes_explored: usize,
    /// Whether the relative-gap stopping rule was met.
    pub converged: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<BnBTraceEntry>,
}

#[derive(PartialEq)]
struct HeapKey {
    key: f64,
    id: usize,
}

impl Eq for HeapKey {}

impl Ord for HeapKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Max-heap on key; FIFO (smallest id first) on ties.
        self.key
            .total_cmp(&other.key)
            .then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for HeapKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

struct Slot {
    node: BnBNode,
    alive: bool,
    splittable: bool,
}

struct SearchState<'a> {
    problem: &'a SumOfRatiosProblem,
    opts: &'a BnBOptions,
    slots: Vec<Slot>,
    select_heap: BinaryHeap<HeapKey>,
    ub_heap: BinaryHeap<HeapKey>,
    incumbent: f64,
    best_point: Vec<f64>,
    active_volume: f64,
    pruned_volume: f64,
    alive_count: usize,
    nodes_explored: usize,
    edge_floor: f64,
}

impl<'a> SearchState<'a> {
    /// Evaluates bounds for a simplex and files it; returns false if the
    /// node was pruned immediately.
    fn admit(&mut self, simplex: Simplex, parent_ub: f64) -> Result<bool> {
        self.nodes_explored += 1;
        let volume = simplex.volume();
        if self.problem.region.certainly_disjoint(&simplex) {
            self.pruned_volume += volume;
            return Ok(false);
        }
        let ub = upper_bound(&simplex, self.problem)?.min(parent_ub);
        let (lb, point) = lower_bound(&simplex, self.problem);
        if lb > self.incumbent {
            self.incumbent = lb;
            self.best_point = point.clone();
        }
        if ub <= self.incumbent {
            // Prune: the node cannot beat the incumbent.
            self.pruned_volume += volume;
            return Ok(false);
        }
        let (edge_len, _) = simplex.longest_edge();
        let id = self.slots.len();
        let splittable = edge_len >= self.edge_floor;
        let select_key = match self.opts.selection {
            NodeSelection::LargestEdge => edge_len,
            NodeSelection::BestBound => ub,
        };
        self.slots.push(Slot {
            node: BnBNode { simplex, upper_bound: ub, best_point: point, volume },
            alive: true,
            splittable,
        });
        self.alive_count += 1;
        self.active_volume += volume;
        self.ub_heap.push(HeapKey { key: ub, id });
        if splittable {
            self.select_heap.push(HeapKey { key: select_key, id });
        }
        Ok(true)
    }

    fn kill(&mut self, id: usize, pruned: bool) {
        let slot = &mut self.slots[id];
        if !slot.alive {
            return;
        }
        slot.alive = false;
        self.alive_count -= 1;
        self.active_volume -= slot.node.volume;
        if pruned {
            self.pruned_volume += slot.node.volume;
        }
    }

    /// Current global upper bound: the largest live node bound, pruning
    /// stale or dominated entries on the way. Falls back to the incumbent
    /// once every node is pruned.
    fn global_upper_bound(&mut self) -> f64 {
        while let Some(top) = self.ub_heap.peek() {
            let id = top.id;
            if !self.slots[id].alive || self.slots[id].node.upper_bound != top.key {
                self.ub_heap.pop();
                continue;
            }
            if top.key <= self.incumbent {
                self.ub_heap.pop();
                self.kill(id, true);
                continue;
            }
            return top.key;
        }
        self.incumbent
    }

    /// Pops the next node to split, pruning dominated nodes on the way.
    fn select(&mut self) -> Option<usize> {
        while let Some(entry) = self.select_heap.pop() {
            let id = entry.id;
            if !self.slots[id].alive || !self.slots[id].splittable {
                continue;
            }
            if self.slots[id].node.upper_bound <= self.incumbent {
                self.kill(id, true);
                continue;
            }
            return Some(id);
        }
        None
    }
}

/// Runs the simplicial branch-and-bound search.
///
/// Maintains a set of active simplexes covering the not-yet-pruned part
/// of the feasible region. Each iteration selects a node (largest longest
/// edge by default), bisects its longest edge, bounds both children, and
/// prunes any node whose upper bound cannot beat the incumbent. Stops
/// when `UB - LB <= rho * UB`, when no refinable node remains, or when a
/// cap is hit (in which case `converged` is false and the incumbent is
/// still returned). Simplexes whose longest edge falls under
/// `1e-9 * scale` are evaluated but no longer split.
pub fn branch_and_bound(problem: &SumOfRatiosProblem, opts: &BnBOptions) -> Result<BnBReport> {
    if !(opts.rho.is_finite() && opts.rho > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "relative tolerance rho must be positive, got {}",
            opts.rho
        )));
    }

    let mut state = SearchState {
        problem,
        opts,
        slots: Vec::new(),
        select_heap: BinaryHeap::new(),
        ub_heap: BinaryHeap::new(),
        incumbent: f64::NEG_INFINITY,
        best_point: vec![0.0; problem.dim()],
        active_volume: 0.0,
        pruned_volume: 0.0,
        alive_count: 0,
        nodes_explored: 0,
        edge_floor: 1e-9 * problem.region.scale(),
    };

    if let Some(warm) = &opts.warm_start {
        if warm.len() != problem.dim() {
            return Err(Error::InvalidParameter(format!(
                "warm start has dimension {}, problem has {}",
                warm.len(),
                problem.dim()
            )));
        }
        let mut point = warm.clone();
        problem.region.project(&mut point);
        state.incumbent = problem.objective(&point);
        state.best_point = point;
    }

    state.admit(problem.s0.clone(), f64::INFINITY)?;

    // Polish the starting incumbent: with a near-optimal feasible point
    // in hand, pruning bites from the first split.
    let mut seed = state.best_point.clone();
    let seed_value = polish_point(problem, &mut seed);
    if seed_value > state.incumbent {
        state.incumbent = seed_value;
        state.best_point = seed;
    }

    let mut trace = Vec::new();
    let mut iterations = 0usize;
    let mut converged;
    loop {
        let ub = state.global_upper_bound();
        if opts.record_trace {
            trace.push(BnBTraceEntry {
                iteration: iterations,
                upper_bound: ub,
                lower_bound: state.incumbent,
                active_nodes: state.alive_count,
                active_volume: state.active_volume,
                pruned_volume: state.pruned_volume,
            });
        }
        if ub - state.incumbent <= opts.rho * ub {
            converged = true;
            break;
        }
        if iterations >= opts.iteration_cap || state.nodes_explored >= opts.node_cap {
            converged = false;
            break;
        }
        let Some(id) = state.select() else {
            // Only frozen nodes remain; the gap cannot shrink further.
            let ub = state.global_upper_bound();
            converged = ub - state.incumbent <= opts.rho * ub;
            break;
        };
        let (left, right) = state.slots[id].node.simplex.bisect_longest_edge();
        let parent_ub = state.slots[id].node.upper_bound;
        state.kill(id, false);
        state.admit(left, parent_ub)?;
        state.admit(right, parent_ub)?;
        iterations += 1;
    }

    let mut final_point = state.best_point.clone();
    let final_value = polish_point(problem, &mut final_point);
    if final_value > state.incumbent {
        state.incumbent = final_value;
        state.best_point = final_point;
    }
    let upper = state.global_upper_bound();
    converged = converged || upper - state.incumbent <= opts.rho * upper;
    debug_assert!(
        !converged || upper - state.incumbent <= opts.rho * upper + 1e-12,
        "converged flag violates the gap guarantee"
    );
    Ok(BnBReport {
        best_point: state.best_point,
        lower_bound: state.incumbent,
        upper_bound: upper,
        iterations,
        nodes_explored: state.nodes_explored,
        converged,
        trace,
    })
}

/// Maximizes the objective over the assignment probabilities at fixed
/// sampling rates, one coordinate at a time.
///
/// At fixed rates the objective is separable: worker `i`'s ratio depends
/// only on `p_i`, so each coordinate is solved independently on `[0, 1]`
/// with the same branch-and-bound engine at tolerance `rho`.
pub fn optimize_p_given_alpha(
    workers: &[WorkerParams],
    alpha: &[f64],
    rho: f64,
) -> Result<Vec<f64>> {
    let opts = BnBOptions { rho, ..BnBOptions::default() };
    Ok(optimize_p_block(workers, alpha, None, &opts)?.0)
}

/// Per-coordinate probability solve with warm starts; returns the
/// probabilities, total nodes explored, and whether every coordinate
/// converged.
fn optimize_p_block(
    workers: &[WorkerParams],
    alpha: &[f64],
    warm: Option<&[f64]>,
    base: &BnBOptions,
) -> Result<(Vec<f64>, usize, bool)> {
    if workers.len() != alpha.len() {
        return Err(Error::InvalidParameter(format!(
            "{} workers with {} rates",
            workers.len(),
            alpha.len()
        )));
    }
    let mut p = Vec::with_capacity(workers.len());
    let mut nodes = 0;
    let mut all_converged = true;
    for (i, (w, &a)) in workers.iter().zip(alpha).enumerate() {
        if a == 0.0 {
            // No sampling means no assignments; the probability is
            // irrelevant and reported as zero.
            p.push(0.0);
            continue;
        }
        let problem = SumOfRatiosProblem::p_coordinate(w, a)?;
        let opts = BnBOptions {
            warm_start: warm.map(|p0| vec![p0[i]]),
            record_trace: false,
            ..base.clone()
        };
        let report = branch_and_bound(&problem, &opts)?;
        nodes += report.nodes_explored;
        all_converged &= report.converged;
        p.push(report.best_point[0]);
    }
    Ok((p, nodes, all_converged))
}

/// Joint probability block over a simplex covering the unit box; exists
/// for fidelity testing against the per-coordinate route.
pub fn optimize_p_given_alpha_joint(
    workers: &[WorkerParams],
    alpha: &[f64],
    opts: &BnBOptions,
) -> Result<Vec<f64>> {
    let problem = SumOfRatiosProblem::p_block_joint(workers, alpha)?;
    let report = branch_and_bound(&problem, opts)?;
    Ok(report.best_point)
}

/// Total objective at a rate/probability point, evaluated through the
/// ratio polynomials (the same route the block solvers optimize).
pub fn policy_objective(workers: &[WorkerParams], alpha: &[f64], p: &[f64]) -> Result<f64> {
    if workers.len() != alpha.len() || workers.len() != p.len() {
        return Err(Error::InvalidParameter(
            "policy length does not match worker count".into(),
        ));
    }
    let mut total = 0.0;
    for ((w, &a), &pi) in workers.iter().zip(alpha).zip(p) {
        let (f, g) = ratio_coefficients(w, pi)?;
        total += poly_eval(&f, a) / poly_eval(&g, a);
    }
    Ok(total)
}

/// Controls for the alternating rate/probability optimization.
#[derive(Debug, Clone)]
pub struct AlternatingOptions {
    /// Relative tolerance of every block solve.
    pub rho: f64,
    /// Stop once the utility improves by at most this much per round.
    pub eps: f64,
    /// Cap on outer rounds.
    pub max_outer: usize,
    /// Node cap per block solve.
    pub node_cap: usize,
    pub selection: NodeSelection,
    /// Initial assignment probabilities (all ones when absent).
    pub initial_p: Option<Vec<f64>>,
    /// Solve the probability block as one joint n-dimensional search
    /// instead of per coordinate.
    pub joint_p_block: bool,
}

impl Default for AlternatingOptions {
    fn default() -> Self {
        Self {
            rho: 1e-4,
            eps: 1e-6,
            max_outer: 50,
            node_cap: 1_000_000,
            selection: NodeSelection::LargestEdge,
            initial_p: None,
            joint_p_block: false,
        }
    }
}

/// Progress record of an alternating solve.
#[derive(Debug, Clone, Serialize)]
pub struct AlternatingReport {
    /// Utility after each outer round; nondecreasing.
    pub utility_trace: Vec<f64>,
    pub outer_iterations: usize,
    /// Whether the utility change fell under `eps` before `max_outer`.
    pub converged: bool,
    /// Whether every inner block solve met its own gap tolerance.
    pub blocks_converged: bool,
    /// Probabilities the alternation started from.
    pub initial_p: Vec<f64>,
    /// Nodes explored across all block solves.
    pub total_nodes: usize,
}

/// Alternating maximization of the moderate-assignment objective.
///
/// Fixing the probabilities, the rate block is solved globally by
/// [`branch_and_bound`]; fixing the rates, the probability block is
/// solved per coordinate. Each block is warm-started from the current
/// point, so the utility trace is nondecreasing. Alternation stops when
/// one round improves the utility by at most `eps`, or after `max_outer`
/// rounds (reported as non-convergence).
pub fn alternating_solve(
    workers: &[WorkerParams],
    budget: f64,
    opts: &AlternatingOptions,
) -> Result<(Policy, f64, AlternatingReport)> {
    if workers.is_empty() {
        return Err(Error::InvalidParameter("need at least one worker".into()));
    }
    if !(budget.is_finite() && budget > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "budget must be positive, got {budget}"
        )));
    }
    if opts.max_outer == 0 {
        return Err(Error::InvalidParameter("max_outer must be at least 1".into()));
    }
    let n = workers.len();
    let initial_p = match &opts.initial_p {
        Some(p0) => {
            if p0.len() != n {
                return Err(Error::InvalidParameter(format!(
                    "initial_p has length {}, expected {n}",
                    p0.len()
                )));
            }
            for &v in p0 {
                if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
                    return Err(Error::InvalidParameter(format!(
                        "initial probability {v} outside [0, 1]"
                    )));
                }
            }
            p0.clone()
        }
        None => vec![1.0; n],
    };

    let block_opts = BnBOptions {
        rho: opts.rho,
        node_cap: opts.node_cap,
        iteration_cap: opts.node_cap,
        selection: opts.selection,
        warm_start: None,
        record_trace: false,
    };

    let mut p = initial_p.clone();
    let mut alpha: Option<Vec<f64>> = None;
    let mut trace: Vec<f64> = Vec::new();
    let mut total_nodes = 0;
    let mut blocks_converged = true;
    let mut converged = false;

    for _ in 0..opts.max_outer {
        let problem = SumOfRatiosProblem::alpha_block(workers, &p, budget)?;
        let alpha_opts =
            BnBOptions { warm_start: alpha.clone(), ..block_opts.clone() };
        let report = branch_and_bound(&problem, &alpha_opts)?;
        total_nodes += report.nodes_explored;
        blocks_converged &= report.converged;
        let current_alpha = report.best_point;

        let new_p = if opts.joint_p_block {
            let joint_opts = BnBOptions { warm_start: Some(p.clone()), ..block_opts.clone() };
            optimize_p_given_alpha_joint(workers, &current_alpha, &joint_opts)?
        } else {
            let (new_p, nodes, ok) =
                optimize_p_block(workers, &current_alpha, Some(&p), &block_opts)?;
            total_nodes += nodes;
            blocks_converged &= ok;
            new_p
        };
        p = new_p;
        alpha = Some(current_alpha);

        let utility = policy_objective(workers, alpha.as_ref().unwrap(), &p)?;
        let improved = trace.last().map_or(f64::INFINITY, |&prev| utility - prev);
        trace.push(utility);
        if improved.abs() <= opts.eps {
            converged = true;
            break;
        }
    }

    let alpha = alpha.expect("at least one outer round ran");
    let utility = *trace.last().expect("at least one outer round ran");
    let report = AlternatingReport {
        outer_iterations: trace.len(),
        utility_trace: trace,
        converged,
        blocks_converged,
        initial_p,
        total_nodes,
    };
    Ok((Policy { alpha, p }, utility, report))
}

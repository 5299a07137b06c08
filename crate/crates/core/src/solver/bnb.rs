//! Best-first branch-and-bound over the binary variables of a convex system.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use serde::Serialize;

use super::cone::{solve_cone, to_cone_with_bounds, ConeOptions, ConeStatus, NodeResult};
use super::SolverError;
use crate::system::{ConstraintSystem, Sense, VarKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BnbOptions {
    /// Relative gap (obj − bound) / max(1, |obj|) at which to stop.
    pub gap: f64,
    /// Seconds.
    pub time_limit: f64,
    pub node_limit: usize,
    /// Threads for the paired child solves; results do not depend on it.
    pub workers: usize,
    /// Stop at the first incumbent.
    pub feasibility_only: bool,
    /// Scaled violation allowed for an incumbent.
    pub incumbent_tol: f64,
    /// Distance from an integer below which a binary counts as integral.
    pub integrality_tol: f64,
    pub cone: ConeOptions,
}

impl Default for BnbOptions {
    fn default() -> Self {
        BnbOptions {
            gap: 1e-4,
            time_limit: 600.0,
            node_limit: 100_000,
            workers: 1,
            feasibility_only: false,
            incumbent_tol: 1e-6,
            integrality_tol: 1e-6,
            cone: ConeOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    /// Incumbent within the gap tolerance of the proven bound.
    Optimal,
    /// Feasibility mode found an incumbent.
    Feasible,
    Infeasible,
    TimeLimit,
    NodeLimit,
    /// A node solve failed in a way that could not be classified.
    NumericalFailure,
}

impl SolveStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Feasible)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Solution {
    pub status: SolveStatus,
    /// Empty when no incumbent was found.
    pub x: Vec<f64>,
    pub objective: f64,
    pub bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub root_bound: f64,
    /// Node ids in the order they were expanded.
    #[serde(skip)]
    pub trace: Vec<u64>,
    pub wall_time: f64,
}

impl Solution {
    pub fn relative_gap(objective: f64, bound: f64) -> f64 {
        ((objective - bound) / objective.abs().max(1.0)).max(0.0)
    }
}

#[derive(Debug, Clone)]
struct Node {
    id: u64,
    depth: usize,
    bound: f64,
    fixings: Vec<(usize, f64)>,
    x: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    /// Max-heap order: lowest bound first, then deepest, then lowest id.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.id.cmp(&self.id))
    }
}

struct Search<'a> {
    system: &'a ConstraintSystem,
    opts: &'a BnbOptions,
    binaries: Vec<usize>,
    /// Binary-only unit-coefficient equality rows Σx = N.
    cardinality: Vec<(Vec<usize>, usize)>,
    incumbent: Option<(f64, Vec<f64>)>,
}

impl<'a> Search<'a> {
    fn new(system: &'a ConstraintSystem, opts: &'a BnbOptions) -> Self {
        let binaries = system.binaries();
        let is_bin = |v: usize| system.variables[v].kind == VarKind::Binary;
        let cardinality = system
            .linear
            .iter()
            .filter(|c| c.sense == Sense::Eq && !c.expr.terms.is_empty())
            .filter(|c| c.expr.terms.iter().all(|&(v, k)| is_bin(v) && k == 1.0))
            .filter_map(|c| {
                let n = -c.expr.constant;
                (n >= 0.0 && n.fract() == 0.0).then(|| (c.expr.terms.iter().map(|t| t.0).collect(), n as usize))
            })
            .collect();
        Search {
            system,
            opts,
            binaries,
            cardinality,
            incumbent: None,
        }
    }

    fn bounds(&self, fixings: &[(usize, f64)]) -> Vec<(f64, f64)> {
        let mut b: Vec<(f64, f64)> = self.system.variables.iter().map(|v| (v.lb, v.ub)).collect();
        for &(v, val) in fixings {
            b[v] = (val, val);
        }
        b
    }

    fn solve(&self, fixings: &[(usize, f64)]) -> Result<NodeResult, SolverError> {
        let prog = to_cone_with_bounds(self.system, &self.bounds(fixings))?;
        Ok(solve_cone(&prog, &self.opts.cone))
    }

    fn most_fractional(&self, x: &[f64]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for &v in &self.binaries {
            let frac = x[v].min(1.0 - x[v]);
            if frac > self.opts.integrality_tol && best.is_none_or(|(_, f)| frac > f) {
                best = Some((v, frac));
            }
        }
        best.map(|(v, _)| v)
    }

    fn cutoff(&self) -> f64 {
        match &self.incumbent {
            Some((obj, _)) => obj - self.opts.gap * obj.abs().max(1.0),
            None => f64::INFINITY,
        }
    }

    /// Accepts `x` (binaries rounded) as incumbent if it is feasible and
    /// improves. Falls back to a solve with the binaries fixed.
    fn offer(&mut self, x: &[f64]) -> bool {
        let mut x = x.to_vec();
        for &v in &self.binaries {
            x[v] = x[v].round();
        }
        let obj = self.system.objective.eval(&x);
        if self.system.max_violation(&x) <= self.opts.incumbent_tol {
            return self.accept(obj, x);
        }
        let fix: Vec<(usize, f64)> = self.binaries.iter().map(|&v| (v, x[v])).collect();
        self.try_fixing(&fix)
    }

    fn try_fixing(&mut self, fix: &[(usize, f64)]) -> bool {
        let Ok(r) = self.solve(fix) else {
            return false;
        };
        if !r.status.has_solution() {
            return false;
        }
        let mut x = r.x;
        for &(v, val) in fix {
            x[v] = val;
        }
        if self.system.max_violation(&x) > self.opts.incumbent_tol {
            return false;
        }
        let obj = self.system.objective.eval(&x);
        self.accept(obj, x)
    }

    fn accept(&mut self, obj: f64, x: Vec<f64>) -> bool {
        let better = self.incumbent.as_ref().is_none_or(|(o, _)| obj < *o);
        if better {
            self.incumbent = Some((obj, x));
        }
        better
    }

    /// Rounds the root relaxation (nearest, then up) and repairs
    /// cardinality rows by switching on the largest entries.
    fn root_heuristics(&mut self, x: &[f64]) {
        let candidates: [fn(f64) -> f64; 2] = [f64::round, f64::ceil];
        for round in candidates {
            let mut vals: Vec<f64> = x.to_vec();
            for &v in &self.binaries {
                vals[v] = round(x[v].clamp(0.0, 1.0));
            }
            for (vars, n) in &self.cardinality {
                let mut order = vars.clone();
                order.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
                for (rank, &v) in order.iter().enumerate() {
                    vals[v] = if rank < *n { 1.0 } else { 0.0 };
                }
            }
            let fix: Vec<(usize, f64)> = self
                .binaries
                .iter()
                .map(|&v| (v, vals[v]))
                .filter(|&(v, val)| {
                    let var = &self.system.variables[v];
                    val >= var.lb && val <= var.ub
                })
                .collect();
            if fix.len() == self.binaries.len() {
                self.try_fixing(&fix);
            }
        }
    }
}

fn pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool")
}

/// Minimizes a convex system with binary variables. Each node solves the
/// continuous relaxation with binaries in [0, 1] or fixed by branching.
pub fn branch_and_bound(system: &ConstraintSystem, opts: &BnbOptions) -> Result<Solution, SolverError> {
    if !system.is_convex() {
        return Err(SolverError::Nonconvex(system.nonconvex.len()));
    }
    let start = Instant::now();
    let threads = pool(opts.workers);
    let mut search = Search::new(system, opts);
    let mut trace = Vec::new();
    let mut nodes = 1usize;
    let mut next_id = 1u64;

    let finish = |search: Search, status: SolveStatus, bound: f64, nodes: usize, root: f64, trace: Vec<u64>| {
        let (objective, x) = search.incumbent.unwrap_or((f64::INFINITY, Vec::new()));
        Solution {
            status,
            gap: if x.is_empty() {
                f64::INFINITY
            } else {
                Solution::relative_gap(objective, bound)
            },
            x,
            objective,
            bound,
            nodes,
            root_bound: root,
            trace,
            wall_time: start.elapsed().as_secs_f64(),
        }
    };

    let root = match search.solve(&[]) {
        Ok(r) => r,
        Err(SolverError::EmptyBounds(_)) | Err(SolverError::InfeasibleRow(_)) => {
            return Ok(finish(
                search,
                SolveStatus::Infeasible,
                f64::INFINITY,
                1,
                f64::INFINITY,
                trace,
            ));
        }
        Err(e) => return Err(e),
    };
    trace.push(0);
    match root.status {
        ConeStatus::Optimal | ConeStatus::NearOptimal => {}
        ConeStatus::Infeasible => {
            return Ok(finish(
                search,
                SolveStatus::Infeasible,
                f64::INFINITY,
                1,
                f64::INFINITY,
                trace,
            ));
        }
        _ => {
            return Ok(finish(
                search,
                SolveStatus::NumericalFailure,
                f64::NEG_INFINITY,
                1,
                f64::NEG_INFINITY,
                trace,
            ));
        }
    }
    let root_bound = root.objective;
    if search.most_fractional(&root.x).is_none() {
        search.offer(&root.x);
    }
    if search.incumbent.is_none() {
        search.root_heuristics(&root.x);
    }
    if opts.feasibility_only && search.incumbent.is_some() {
        return Ok(finish(
            search,
            SolveStatus::Feasible,
            root_bound,
            nodes,
            root_bound,
            trace,
        ));
    }

    let mut heap = BinaryHeap::new();
    heap.push(Node {
        id: 0,
        depth: 0,
        bound: root_bound,
        fixings: Vec::new(),
        x: root.x,
    });
    let mut status = SolveStatus::Optimal;
    // Smallest bound among nodes discarded by the cutoff.
    let mut pruned = f64::INFINITY;
    let mut failed = false;
    while let Some(node) = heap.pop() {
        if node.bound >= search.cutoff() {
            pruned = pruned.min(node.bound);
            heap.clear();
            break;
        }
        let Some(var) = search.most_fractional(&node.x) else {
            search.offer(&node.x);
            if opts.feasibility_only && search.incumbent.is_some() {
                return Ok(finish(
                    search,
                    SolveStatus::Feasible,
                    node.bound,
                    nodes,
                    root_bound,
                    trace,
                ));
            }
            continue;
        };
        if start.elapsed().as_secs_f64() > opts.time_limit {
            heap.push(node);
            status = SolveStatus::TimeLimit;
            break;
        }
        if nodes + 2 > opts.node_limit {
            heap.push(node);
            status = SolveStatus::NodeLimit;
            break;
        }
        trace.push(node.id);
        let mut down = node.fixings.clone();
        down.push((var, 0.0));
        let mut up = node.fixings;
        up.push((var, 1.0));
        let (rd, ru) = threads.install(|| rayon::join(|| search.solve(&down), || search.solve(&up)));
        nodes += 2;
        for (fix, res) in [(down, rd), (up, ru)] {
            let id = next_id;
            next_id += 1;
            let r = match res {
                Ok(r) => r,
                Err(SolverError::EmptyBounds(_)) | Err(SolverError::InfeasibleRow(_)) => continue,
                Err(e) => return Err(e),
            };
            match r.status {
                ConeStatus::Optimal | ConeStatus::NearOptimal => {}
                ConeStatus::Infeasible => continue,
                _ => {
                    failed = true;
                    continue;
                }
            }
            let bound = r.objective.max(node.bound);
            if bound >= search.cutoff() {
                pruned = pruned.min(bound);
                continue;
            }
            if search.most_fractional(&r.x).is_none() {
                search.offer(&r.x);
                if opts.feasibility_only && search.incumbent.is_some() {
                    return Ok(finish(
                        search,
                        SolveStatus::Feasible,
                        node.bound,
                        nodes,
                        root_bound,
                        trace,
                    ));
                }
                continue;
            }
            heap.push(Node {
                id,
                depth: node.depth + 1,
                bound,
                fixings: fix,
                x: r.x,
            });
        }
    }
    let open = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    let incumbent = search.incumbent.as_ref().map_or(f64::INFINITY, |i| i.0);
    let global_bound = open.min(pruned).min(incumbent).max(root_bound);
    if status == SolveStatus::Optimal && search.incumbent.is_none() {
        status = if failed {
            SolveStatus::NumericalFailure
        } else {
            SolveStatus::Infeasible
        };
    }
    Ok(finish(search, status, global_bound, nodes, root_bound, trace))
}

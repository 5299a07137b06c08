//! Conic reformulation of a convex `ConstraintSystem` and the interior-point
//! solve of one node.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use serde::Serialize;

use super::SolverError;
use crate::system::{ConstraintSystem, LinExpr, Sense};

/// Σ coef·x + constant
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AffineRow {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineRow {
    fn from_expr(e: &LinExpr, scale: f64) -> Self {
        AffineRow {
            terms: e.terms.iter().map(|&(v, c)| (v, c * scale)).collect(),
            constant: e.constant * scale,
        }
    }

    fn var(v: usize, coef: f64, constant: f64) -> Self {
        AffineRow {
            terms: vec![(v, coef)],
            constant,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().fold(self.constant, |acc, &(v, c)| acc + c * x[v])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ConeBlock {
    /// Each row equals zero.
    Zero(Vec<AffineRow>),
    /// Each row is nonnegative.
    Nonneg(Vec<AffineRow>),
    /// rows[0] ≥ ‖rows[1..]‖₂
    Soc(Vec<AffineRow>),
}

/// min cᵀx + c₀ over affine images in cones. Variables `0..system_vars`
/// map one-to-one onto the source system's variables; any further ones are
/// epigraph variables.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConeProgram {
    pub num_vars: usize,
    pub system_vars: usize,
    pub objective: Vec<f64>,
    pub objective_constant: f64,
    pub blocks: Vec<ConeBlock>,
}

impl ConeProgram {
    pub fn new(num_vars: usize) -> Self {
        ConeProgram {
            num_vars,
            system_vars: num_vars,
            objective: vec![0.0; num_vars],
            objective_constant: 0.0,
            blocks: Vec::new(),
        }
    }

    /// Σ q·x² ≤ u·v as ‖(√q·x, (u−v)/2)‖ ≤ (u+v)/2.
    pub fn push_rotated(&mut self, quad: &[(usize, f64)], u: &AffineRow, v: &AffineRow) {
        let mut head = u.clone();
        head.terms.extend(v.terms.iter().copied());
        head.constant += v.constant;
        scale(&mut head, 0.5);
        let mut diff = u.clone();
        diff.terms.extend(v.terms.iter().map(|&(i, c)| (i, -c)));
        diff.constant -= v.constant;
        scale(&mut diff, 0.5);
        let mut rows = vec![head, diff];
        for &(i, q) in quad {
            rows.push(AffineRow::var(i, q.sqrt(), 0.0));
        }
        self.blocks.push(ConeBlock::Soc(rows));
    }

    pub fn num_rows(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| match b {
                ConeBlock::Zero(r) | ConeBlock::Nonneg(r) | ConeBlock::Soc(r) => r.len(),
            })
            .sum()
    }

    pub fn soc_count(&self) -> usize {
        self.blocks.iter().filter(|b| matches!(b, ConeBlock::Soc(_))).count()
    }

    /// Largest cone violation at `x`, unscaled.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for b in &self.blocks {
            match b {
                ConeBlock::Zero(rows) => {
                    for r in rows {
                        worst = worst.max(r.eval(x).abs());
                    }
                }
                ConeBlock::Nonneg(rows) => {
                    for r in rows {
                        worst = worst.max(-r.eval(x));
                    }
                }
                ConeBlock::Soc(rows) => {
                    let t = rows[0].eval(x);
                    let n = rows[1..].iter().map(|r| r.eval(x).powi(2)).sum::<f64>().sqrt();
                    worst = worst.max(n - t);
                }
            }
        }
        worst
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective
            .iter()
            .zip(x)
            .fold(self.objective_constant, |acc, (c, v)| acc + c * v)
    }
}

fn scale(r: &mut AffineRow, s: f64) {
    r.terms.iter_mut().for_each(|t| t.1 *= s);
    r.constant *= s;
}

/// Cone form of a convex system using its own variable bounds.
pub fn to_cone(system: &ConstraintSystem) -> Result<ConeProgram, SolverError> {
    let bounds: Vec<(f64, f64)> = system.variables.iter().map(|v| (v.lb, v.ub)).collect();
    to_cone_with_bounds(system, &bounds)
}

/// Cone form with per-variable bounds overriding the system's (binaries
/// relaxed to their bound interval).
pub fn to_cone_with_bounds(system: &ConstraintSystem, bounds: &[(f64, f64)]) -> Result<ConeProgram, SolverError> {
    if !system.is_convex() {
        return Err(SolverError::Nonconvex(system.nonconvex.len()));
    }
    let n = system.num_vars();
    let epigraph = !system.objective.quad.is_empty();
    let mut prog = ConeProgram::new(n + usize::from(epigraph));
    prog.system_vars = n;

    let mut zero = Vec::new();
    let mut nonneg = Vec::new();
    for (i, &(lb, ub)) in bounds.iter().enumerate() {
        if lb > ub {
            return Err(SolverError::EmptyBounds(system.variables[i].name.clone()));
        }
        if lb == ub {
            zero.push(AffineRow::var(i, 1.0, -lb));
            continue;
        }
        if lb.is_finite() {
            nonneg.push(AffineRow::var(i, 1.0, -lb));
        }
        if ub.is_finite() {
            nonneg.push(AffineRow::var(i, -1.0, ub));
        }
    }
    for c in &system.linear {
        let row = match c.sense {
            Sense::Eq => AffineRow::from_expr(&c.expr, 1.0),
            Sense::Ge => AffineRow::from_expr(&c.expr, 1.0),
            Sense::Le => AffineRow::from_expr(&c.expr, -1.0),
        };
        if row.terms.is_empty() {
            let ok = match c.sense {
                Sense::Eq => row.constant.abs() <= 1e-12,
                _ => row.constant >= -1e-12,
            };
            if !ok {
                return Err(SolverError::InfeasibleRow(c.name.clone()));
            }
            continue;
        }
        match c.sense {
            Sense::Eq => zero.push(row),
            _ => nonneg.push(row),
        }
    }
    if !zero.is_empty() {
        prog.blocks.push(ConeBlock::Zero(zero));
    }
    if !nonneg.is_empty() {
        prog.blocks.push(ConeBlock::Nonneg(nonneg));
    }

    let one = AffineRow {
        terms: Vec::new(),
        constant: 1.0,
    };
    for q in &system.quadratic {
        prog.push_rotated(&q.quad, &AffineRow::from_expr(&q.lin, -1.0), &one);
    }
    for c in &system.cones {
        prog.push_rotated(
            &c.quad,
            &AffineRow::from_expr(&c.u, 1.0),
            &AffineRow::from_expr(&c.v, 1.0),
        );
    }

    for &(v, c) in &system.objective.linear.terms {
        prog.objective[v] += c;
    }
    prog.objective_constant = system.objective.linear.constant;
    if epigraph {
        prog.objective[n] = 1.0;
        prog.push_rotated(&system.objective.quad, &AffineRow::var(n, 1.0, 0.0), &one);
    }
    Ok(prog)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConeOptions {
    pub tolerance: f64,
    pub max_iter: u32,
    /// Seconds; infinite for no limit.
    pub time_limit: f64,
}

impl Default for ConeOptions {
    fn default() -> Self {
        ConeOptions {
            tolerance: 1e-8,
            max_iter: 200,
            time_limit: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConeStatus {
    Optimal,
    /// Converged to the reduced tolerances only.
    NearOptimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    TimeLimit,
    NumericalFailure,
}

impl ConeStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, ConeStatus::Optimal | ConeStatus::NearOptimal)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeResult {
    pub status: ConeStatus,
    /// Values of the system variables (epigraph variables dropped).
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: u32,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

/// Solves `min cᵀx s.t. Ax + s = b, s ∈ K` with a primal-dual
/// interior-point method (NT scaling, predictor-corrector steps).
pub fn solve_cone(prog: &ConeProgram, opts: &ConeOptions) -> NodeResult {
    let n = prog.num_vars;
    if prog.blocks.is_empty() && prog.objective.iter().all(|&c| c == 0.0) {
        return NodeResult {
            status: ConeStatus::Optimal,
            x: vec![0.0; prog.system_vars],
            objective: prog.objective_constant,
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
        };
    }
    let (mut ii, mut jj, mut vv) = (Vec::new(), Vec::new(), Vec::new());
    let mut b = Vec::new();
    let mut cones = Vec::new();
    let mut row = 0usize;
    for block in &prog.blocks {
        let (rows, cone) = match block {
            ConeBlock::Zero(r) => (r, SupportedConeT::ZeroConeT(r.len())),
            ConeBlock::Nonneg(r) => (r, SupportedConeT::NonnegativeConeT(r.len())),
            ConeBlock::Soc(r) => (r, SupportedConeT::SecondOrderConeT(r.len())),
        };
        // s = b − A x = affine(x)  ⇒  A = −terms, b = constant
        for r in rows {
            for &(v, c) in &r.terms {
                if c != 0.0 {
                    ii.push(row);
                    jj.push(v);
                    vv.push(-c);
                }
            }
            b.push(r.constant);
            row += 1;
        }
        cones.push(cone);
    }
    let a = CscMatrix::new_from_triplets(row, n, ii, jj, vv);
    let p = CscMatrix::<f64>::zeros((n, n));
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(opts.max_iter)
        .time_limit(opts.time_limit)
        .tol_gap_abs(opts.tolerance)
        .tol_gap_rel(opts.tolerance)
        .tol_feas(opts.tolerance)
        .build()
        .expect("valid solver settings");
    let mut solver = match DefaultSolver::new(&p, &prog.objective, &a, &b, &cones, settings) {
        Ok(s) => s,
        Err(_) => {
            return NodeResult {
                status: ConeStatus::NumericalFailure,
                x: vec![0.0; prog.system_vars],
                objective: f64::NAN,
                iterations: 0,
                primal_residual: f64::NAN,
                dual_residual: f64::NAN,
            }
        }
    };
    solver.solve();
    let sol = &solver.solution;
    let status = match sol.status {
        SolverStatus::Solved => ConeStatus::Optimal,
        SolverStatus::AlmostSolved => ConeStatus::NearOptimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => ConeStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => ConeStatus::Unbounded,
        SolverStatus::MaxIterations => ConeStatus::IterationLimit,
        SolverStatus::MaxTime => ConeStatus::TimeLimit,
        _ => ConeStatus::NumericalFailure,
    };
    NodeResult {
        status,
        x: sol.x[..prog.system_vars].to_vec(),
        objective: sol.obj_val + prog.objective_constant,
        iterations: sol.iterations,
        primal_residual: sol.r_prim,
        dual_residual: sol.r_dual,
    }
}

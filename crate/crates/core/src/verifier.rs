//! Exact physics for checking relaxed solutions: residuals of the nonconvex
//! equalities, a Newton hydraulic solve, a radial power-flow sweep, and a
//! recovery step that rebuilds exact heads and losses on an optimum.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::model::{ElectricNetwork, NexusCase, RadialTopology, WaterNetwork};
use crate::solver::{solve_cone, to_cone_with_bounds, ConeOptions};
use crate::system::{ConstraintSystem, LinExpr, NonconvexKind, Sense, VarKind};

/// Flow below which pipe losses are linearized in the Newton solve, m³/s.
pub const FLOW_REGULARIZATION: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VerifyError {
    #[error("solution has {got} values, system has {expected} variables")]
    Dimension { got: usize, expected: usize },
    #[error("hydraulic solve stopped after {iterations} iterations, residual {residual:e}")]
    HydraulicNonConvergence { iterations: usize, residual: f64 },
    #[error(
        "power-flow sweep diverged after {iterations} iterations (residual {residual:e}); likely voltage collapse"
    )]
    Divergence { iterations: usize, residual: f64 },
    #[error("input has wrong length: {0}")]
    Shape(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residual {
    pub name: String,
    pub kind: NonconvexKind,
    pub period: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactnessReport {
    pub epsilon: f64,
    pub max_residual: f64,
    pub exact: bool,
    /// Largest residual per equality kind.
    pub by_kind: BTreeMap<String, f64>,
    pub residuals: Vec<Residual>,
}

impl ExactnessReport {
    /// Per-period maximum residual of each kind, `[period][kind]` in the
    /// order of `by_kind`.
    pub fn per_period(&self, periods: usize) -> Vec<BTreeMap<String, f64>> {
        let mut out = vec![BTreeMap::new(); periods];
        for r in &self.residuals {
            if r.period < periods {
                let e = out[r.period].entry(kind_name(r.kind)).or_insert(0.0);
                *e = f64::max(*e, r.value);
            }
        }
        out
    }
}

pub fn kind_name(kind: NonconvexKind) -> String {
    match kind {
        NonconvexKind::BranchFlow => "branch_flow",
        NonconvexKind::BessLoss => "bess_loss",
        NonconvexKind::PipeHeadLoss => "pipe_head_loss",
        NonconvexKind::PumpHead => "pump_head",
        NonconvexKind::PumpPower => "pump_power",
    }
    .to_string()
}

/// Residuals of every nonconvex equality of `exact` at `x`.
pub fn exactness(x: &[f64], exact: &ConstraintSystem, epsilon: f64) -> Result<ExactnessReport, VerifyError> {
    if x.len() != exact.num_vars() {
        return Err(VerifyError::Dimension {
            got: x.len(),
            expected: exact.num_vars(),
        });
    }
    let residuals: Vec<Residual> = exact
        .nonconvex
        .iter()
        .map(|n| Residual {
            name: n.name.clone(),
            kind: n.kind,
            period: n.period,
            value: n.residual(x),
        })
        .collect();
    let mut by_kind = BTreeMap::new();
    for r in &residuals {
        let e = by_kind.entry(kind_name(r.kind)).or_insert(0.0);
        *e = f64::max(*e, r.value);
    }
    let max_residual = residuals.iter().map(|r| r.value).fold(0.0, f64::max);
    Ok(ExactnessReport {
        epsilon,
        max_residual,
        exact: max_residual <= epsilon,
        by_kind,
        residuals,
    })
}

/// Inputs of one hydraulic solve.
#[derive(Debug, Clone, PartialEq)]
pub struct HydraulicInput {
    /// On/off per pump.
    pub status: Vec<bool>,
    /// Net withdrawal per node, m³/s (demand plus tank inflow). Ignored at
    /// fixed-head nodes, which supply the balance.
    pub withdrawal: Vec<f64>,
    /// Nodes with a prescribed pressure head.
    pub fixed_head: Vec<Option<f64>>,
    /// Heads used to place parts of the network not connected to a fixed
    /// head; such a part is anchored here and shifted into its head bounds.
    pub head_hint: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HydraulicState {
    pub flow: Vec<f64>,
    pub head: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// Largest violation of a node head bound.
    pub bound_violation: f64,
}

/// Newton–Raphson on nodal mass balance and per-pipe head equations.
pub fn hydraulic_solve(water: &WaterNetwork, input: &HydraulicInput) -> Result<HydraulicState, VerifyError> {
    let (nn, np) = (water.nodes.len(), water.pipes.len());
    if input.status.len() != water.pumps.len() {
        return Err(VerifyError::Shape("pump status"));
    }
    if input.withdrawal.len() != nn || input.fixed_head.len() != nn || input.head_hint.len() != nn {
        return Err(VerifyError::Shape("node vectors"));
    }
    let pump_of: Vec<Option<usize>> = (0..np).map(|k| water.pump_on_pipe(k)).collect();
    let active: Vec<usize> = (0..np)
        .filter(|&k| pump_of[k].is_none_or(|p| input.status[p]))
        .collect();

    // Components over active pipes; each needs one fixed head.
    let mut comp: Vec<usize> = (0..nn).collect();
    fn root(c: &mut [usize], mut i: usize) -> usize {
        while c[i] != i {
            c[i] = c[c[i]];
            i = c[i];
        }
        i
    }
    for &k in &active {
        let (a, b) = (root(&mut comp, water.pipes[k].from), root(&mut comp, water.pipes[k].to));
        if a != b {
            comp[a.max(b)] = a.min(b);
        }
    }
    let labels: Vec<usize> = (0..nn).map(|i| root(&mut comp, i)).collect();
    let mut fixed: Vec<Option<f64>> = input.fixed_head.clone();
    let mut floating = Vec::new();
    for c in 0..nn {
        if labels[c] != c {
            continue;
        }
        let members: Vec<usize> = (0..nn).filter(|&i| labels[i] == c).collect();
        if members.iter().all(|&i| fixed[i].is_none()) {
            fixed[c] = Some(input.head_hint[c]);
            floating.push(members);
        }
    }
    let free: Vec<usize> = (0..nn).filter(|&i| fixed[i].is_none()).collect();
    let mut col_of = vec![usize::MAX; nn];
    for (j, &i) in free.iter().enumerate() {
        col_of[i] = j;
    }
    let m = active.len();
    let dim = m + free.len();

    let mut flow = vec![0.0; np];
    let mut head: Vec<f64> = (0..nn).map(|i| fixed[i].unwrap_or(input.head_hint[i])).collect();
    for &k in &active {
        flow[k] = 1e-3;
    }
    let total = |i: usize, head: &[f64]| head[i] + water.nodes[i].elevation;
    let loss = |k: usize, f: f64| {
        let r = water.pipes[k].resistance;
        if f.abs() < FLOW_REGULARIZATION {
            r * FLOW_REGULARIZATION * f
        } else {
            r * f * f.abs()
        }
    };
    let dloss = |k: usize, f: f64| {
        let r = water.pipes[k].resistance;
        if f.abs() < FLOW_REGULARIZATION {
            r * FLOW_REGULARIZATION
        } else {
            2.0 * r * f.abs()
        }
    };
    let residual = |flow: &[f64], head: &[f64]| -> DVector<f64> {
        let mut r = DVector::zeros(dim);
        for (row, &k) in active.iter().enumerate() {
            let p = &water.pipes[k];
            let gain = pump_of[k].map_or(0.0, |u| water.pumps[u].head_gain(flow[k]));
            r[row] = total(p.from, head) - total(p.to, head) + gain - loss(k, flow[k]);
        }
        for (j, &i) in free.iter().enumerate() {
            let mut s = input.withdrawal[i];
            for &k in &active {
                let p = &water.pipes[k];
                if p.from == i {
                    s += flow[k];
                }
                if p.to == i {
                    s -= flow[k];
                }
            }
            r[m + j] = s;
        }
        r
    };

    let mut res = residual(&flow, &head);
    let mut it = 0;
    let tol = 1e-10;
    while res.amax() > tol {
        if it >= 100 {
            return Err(VerifyError::HydraulicNonConvergence {
                iterations: it,
                residual: res.amax(),
            });
        }
        it += 1;
        let mut jac = DMatrix::zeros(dim, dim);
        for (row, &k) in active.iter().enumerate() {
            let p = &water.pipes[k];
            let slope = pump_of[k].map_or(0.0, |u| water.pumps[u].head_slope);
            jac[(row, row)] = slope - dloss(k, flow[k]);
            if col_of[p.from] != usize::MAX {
                jac[(row, m + col_of[p.from])] += 1.0;
            }
            if col_of[p.to] != usize::MAX {
                jac[(row, m + col_of[p.to])] -= 1.0;
            }
            if col_of[p.from] != usize::MAX {
                jac[(m + col_of[p.from], row)] += 1.0;
            }
            if col_of[p.to] != usize::MAX {
                jac[(m + col_of[p.to], row)] -= 1.0;
            }
        }
        let Some(step) = jac.lu().solve(&(-&res)) else {
            return Err(VerifyError::HydraulicNonConvergence {
                iterations: it,
                residual: res.amax(),
            });
        };
        let mut t = 1.0;
        loop {
            let mut f2 = flow.clone();
            let mut y2 = head.clone();
            for (row, &k) in active.iter().enumerate() {
                f2[k] += t * step[row];
            }
            for (j, &i) in free.iter().enumerate() {
                y2[i] += t * step[m + j];
            }
            let r2 = residual(&f2, &y2);
            if r2.norm() < res.norm() || t < 1e-4 {
                flow = f2;
                head = y2;
                res = r2;
                break;
            }
            t *= 0.5;
        }
    }

    // Move floating parts into their head bounds, as close to the hint as
    // the bounds allow.
    for members in &floating {
        let lo = members
            .iter()
            .map(|&i| water.nodes[i].head_min - head[i])
            .fold(f64::NEG_INFINITY, f64::max);
        let hi = members
            .iter()
            .map(|&i| water.nodes[i].head_max - head[i])
            .fold(f64::INFINITY, f64::min);
        let shift = if lo <= hi { 0f64.clamp(lo, hi) } else { 0.0 };
        for &i in members {
            head[i] += shift;
        }
    }
    let bound_violation = (0..nn)
        .map(|i| {
            let n = &water.nodes[i];
            (n.head_min - head[i]).max(head[i] - n.head_max).max(0.0)
        })
        .fold(0.0, f64::max);
    Ok(HydraulicState {
        flow,
        head,
        iterations: it,
        residual: res.amax(),
        bound_violation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistFlowState {
    /// Per line (oriented away from the root).
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub i: Vec<f64>,
    /// Squared voltage per bus.
    pub v: Vec<f64>,
    /// Power drawn from the root bus.
    pub root_p: f64,
    pub root_q: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Backward/forward sweep of the branch-flow equations with the root's
/// squared voltage fixed. Injections at the root are ignored.
pub fn distflow_solve(
    net: &ElectricNetwork,
    p_inj: &[f64],
    q_inj: &[f64],
    v_root: f64,
) -> Result<DistFlowState, VerifyError> {
    let nb = net.buses.len();
    if p_inj.len() != nb || q_inj.len() != nb {
        return Err(VerifyError::Shape("bus injections"));
    }
    let topo = RadialTopology::build(net).map_err(|_| VerifyError::Shape("feeder is not radial"))?;
    let nl = net.lines.len();
    let (mut p, mut q, mut cur) = (vec![0.0; nl], vec![0.0; nl], vec![0.0; nl]);
    let mut v = vec![v_root; nb];
    let mut residual = f64::INFINITY;
    for it in 1..=200 {
        for &k in topo.order.iter().rev() {
            let Some(l) = topo.parent_line[k] else { continue };
            let line = &net.lines[l];
            let (mut sp, mut sq) = (0.0, 0.0);
            for &c in &topo.child_lines[k] {
                sp += p[c];
                sq += q[c];
            }
            p[l] = sp + line.r * cur[l] - p_inj[k];
            q[l] = sq + line.x * cur[l] - q_inj[k];
        }
        let mut change: f64 = 0.0;
        for &k in &topo.order {
            let Some(l) = topo.parent_line[k] else { continue };
            let line = &net.lines[l];
            let h = line.from;
            let i_new = (p[l] * p[l] + q[l] * q[l]) / v[h];
            let v_new = v[h] - 2.0 * (line.r * p[l] + line.x * q[l]) + (line.r * line.r + line.x * line.x) * i_new;
            change = change.max((i_new - cur[l]).abs()).max((v_new - v[k]).abs());
            cur[l] = i_new;
            v[k] = v_new;
            if !(v_new > 0.0) || !v_new.is_finite() {
                return Err(VerifyError::Divergence {
                    iterations: it,
                    residual: change,
                });
            }
        }
        residual = change;
        if change <= 1e-12 {
            let root = net.root;
            let (mut rp, mut rq) = (0.0, 0.0);
            for &c in &topo.child_lines[root] {
                rp += p[c];
                rq += q[c];
            }
            return Ok(DistFlowState {
                p,
                q,
                i: cur,
                v,
                root_p: rp,
                root_q: rq,
                iterations: it,
                residual: change,
            });
        }
    }
    Err(VerifyError::Divergence {
        iterations: 200,
        residual,
    })
}

/// Net bus injections (generation + PV + storage − load − pumps) in period
/// `t` of a solution of a joint system.
pub fn bus_injections(case: &NexusCase, sys: &ConstraintSystem, x: &[f64], t: usize) -> (Vec<f64>, Vec<f64>) {
    let lay = &sys.layout;
    let e = &case.electric;
    let mut p: Vec<f64> = e.buses.iter().map(|b| -b.p_load[t]).collect();
    let mut q: Vec<f64> = e.buses.iter().map(|b| -b.q_load[t]).collect();
    for (i, bus) in e.buses.iter().enumerate() {
        if let Some(pv) = &bus.pv {
            p[i] += pv.p[t];
            q[i] += pv.q[t];
        }
        if bus.generator.is_some() && !lay.gen_p[i].is_empty() {
            p[i] += x[lay.gen_p[i][t]];
            q[i] += x[lay.gen_q[i][t]];
        }
    }
    for (b, u) in case.bess.iter().enumerate() {
        p[u.bus] += x[lay.bess_p[b][t]];
        q[u.bus] += x[lay.bess_q[b][t]];
    }
    for (k, pump) in case.water.pumps.iter().enumerate() {
        if let Some(&v) = lay.pump_power.get(k).and_then(|r| r.get(t)) {
            p[pump.bus] -= x[v];
            q[pump.bus] -= x[v] / pump.pf_ratio;
        }
    }
    (p, q)
}

/// Hydraulic input for period `t` of a solution: pump statuses, nodal
/// withdrawals, sources held at their solved heads.
pub fn hydraulic_input(case: &NexusCase, sys: &ConstraintSystem, x: &[f64], t: usize) -> HydraulicInput {
    let lay = &sys.layout;
    let w = &case.water;
    let mut withdrawal: Vec<f64> = w.nodes.iter().map(|n| n.demand[t]).collect();
    for (s, tank) in w.tanks.iter().enumerate() {
        withdrawal[tank.node] += x[lay.tank_flow[s][t]];
    }
    let head_hint: Vec<f64> = (0..w.nodes.len()).map(|i| x[lay.head[i][t]]).collect();
    let fixed_head = (0..w.nodes.len())
        .map(|i| w.nodes[i].source.map(|_| head_hint[i]))
        .collect();
    HydraulicInput {
        status: lay.pump_status.iter().map(|r| x[r[t]] >= 0.5).collect(),
        withdrawal,
        fixed_head,
        head_hint,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecoveryOptions {
    pub epsilon: f64,
    /// Relative objective slack allowed in the loss-tightening solve.
    pub objective_slack: f64,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        RecoveryOptions {
            epsilon: 1e-5,
            objective_slack: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recovery {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Residuals of the point handed in.
    pub before: ExactnessReport,
    /// Residuals after recovery.
    pub after: ExactnessReport,
    /// Largest convex-constraint violation of the recovered point.
    pub feasibility: f64,
    pub tightened_losses: bool,
    pub hydraulic_periods: usize,
}

/// Rebuilds an exact point on the optimal face of `relaxed` around `x`.
///
/// If line or storage losses sit strictly inside their cones, the relaxation
/// is re-solved with binaries fixed and the objective held within a small
/// slack while total losses are minimized. Heads then come from an exact
/// hydraulic solve of each period's flows; they do not enter the objective.
pub fn recover(
    case: &NexusCase,
    relaxed: &ConstraintSystem,
    exact: &ConstraintSystem,
    x: &[f64],
    opts: &RecoveryOptions,
) -> Result<Recovery, VerifyError> {
    let before = exactness(x, exact, opts.epsilon)?;
    let mut x = x.to_vec();
    let loss_kinds = ["branch_flow", "bess_loss"];
    let loose = loss_kinds
        .iter()
        .any(|k| before.by_kind.get(*k).copied().unwrap_or(0.0) > opts.epsilon);
    let mut tightened = false;
    if loose {
        if let Some(y) = tighten_losses(relaxed, &x, opts.objective_slack) {
            x = y;
            tightened = true;
        }
    }
    let mut periods = 0;
    if !relaxed.layout.head.is_empty() {
        for t in 0..case.periods() {
            let input = hydraulic_input(case, relaxed, &x, t);
            let Ok(state) = hydraulic_solve(&case.water, &input) else {
                continue;
            };
            let lay = &relaxed.layout;
            let flows_agree = (0..case.water.pipes.len()).all(|k| (state.flow[k] - x[lay.flow[k][t]]).abs() <= 1e-7);
            if !flows_agree || state.bound_violation > 1e-9 {
                continue;
            }
            for (k, f) in state.flow.iter().enumerate() {
                x[lay.flow[k][t]] = *f;
            }
            for (i, y) in state.head.iter().enumerate() {
                x[lay.head[i][t]] = *y;
            }
            for (k, pump) in case.water.pumps.iter().enumerate() {
                x[lay.pump_gain[k][t]] = pump.head_gain(state.flow[pump.pipe]);
            }
            periods += 1;
        }
    }
    let after = exactness(&x, exact, opts.epsilon)?;
    Ok(Recovery {
        objective: relaxed.objective.eval(&x),
        feasibility: relaxed.max_violation(&x),
        x,
        before,
        after,
        tightened_losses: tightened,
        hydraulic_periods: periods,
    })
}

fn tighten_losses(relaxed: &ConstraintSystem, x: &[f64], slack: f64) -> Option<Vec<f64>> {
    let mut sys = relaxed.clone();
    let z = relaxed.objective.eval(x);
    let cap = z + slack * z.abs().max(1.0);
    let obj = sys.objective.clone();
    if obj.quad.is_empty() {
        let mut e = obj.linear.clone();
        e.constant -= cap;
        sys.add_linear("objective_cap", e, Sense::Le);
    } else {
        let mut lin = obj.linear.clone();
        lin.constant -= cap;
        sys.add_quadratic("objective_cap", obj.quad.clone(), lin);
    }
    let mut losses = LinExpr::new();
    for row in sys.layout.line_i.iter().chain(sys.layout.bess_loss.iter()) {
        for &v in row {
            losses.push(v, 1.0);
        }
    }
    sys.objective.linear = losses;
    sys.objective.quad.clear();
    let bounds: Vec<(f64, f64)> = sys
        .variables
        .iter()
        .enumerate()
        .map(|(i, v)| match v.kind {
            VarKind::Binary => {
                let b = x[i].round();
                (b, b)
            }
            VarKind::Continuous => (v.lb, v.ub),
        })
        .collect();
    let prog = to_cone_with_bounds(&sys, &bounds).ok()?;
    let res = solve_cone(&prog, &ConeOptions::default());
    res.status.has_solution().then_some(res.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Bus, Line, Pipe, WaterNode};

    fn node(id: &str, elevation: f64) -> WaterNode {
        WaterNode {
            id: id.into(),
            elevation,
            head_min: -1e3,
            head_max: 1e3,
            demand: vec![0.0],
            source: None,
        }
    }

    #[test]
    fn single_pipe_closed_form() {
        let r = 52.88;
        let water = WaterNetwork {
            nodes: vec![node("s", 0.0), node("d", 0.0)],
            pipes: vec![Pipe {
                id: "p".into(),
                from: 0,
                to: 1,
                resistance: r,
                flow_min: -1.0,
                flow_max: 1.0,
            }],
            pumps: vec![],
            tanks: vec![],
            irrigation: vec![],
        };
        let (h, yd) = (40.0, 12.5);
        // Fix both heads; the pipe flow follows from the loss alone.
        let input = HydraulicInput {
            status: vec![],
            withdrawal: vec![0.0, 0.0],
            fixed_head: vec![Some(h), Some(yd)],
            head_hint: vec![h, yd],
        };
        let s = hydraulic_solve(&water, &input).unwrap();
        let want = ((h - yd) / r).sqrt();
        assert!((s.flow[0] - want).abs() < 1e-8, "{} vs {want}", s.flow[0]);
    }

    #[test]
    fn two_bus_closed_form() {
        // Load P, Q at the far end of one line; solve V·ℐ = P₀² + Q₀² with
        // P₀ = P + rℐ, Q₀ = Q + xℐ, by fixed-point on the scalar ℐ.
        let (r, x, pl, ql, v0) = (0.02, 0.04, 0.8, 0.3, 1.0);
        let net = ElectricNetwork {
            buses: vec![bus("a"), bus("b")],
            lines: vec![Line {
                from: 0,
                to: 1,
                r,
                x,
                i_max: 10.0,
                s_max: 10.0,
            }],
            root: 0,
        };
        let s = distflow_solve(&net, &[0.0, -pl], &[0.0, -ql], v0).unwrap();
        // ℐ solves (r²+x²)ℐ² + (2(rP+xQ) − V)ℐ + P² + Q² = 0, smaller root
        let a = r * r + x * x;
        let b = 2.0 * (r * pl + x * ql) - v0;
        let c = pl * pl + ql * ql;
        let i = (-b - (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
        assert!((s.i[0] - i).abs() < 1e-10);
        assert!((s.p[0] - (pl + r * i)).abs() < 1e-10);
        let v1 = v0 - 2.0 * (r * s.p[0] + x * s.q[0]) + a * i;
        assert!((s.v[1] - v1).abs() < 1e-10);
    }

    fn bus(id: &str) -> Bus {
        Bus {
            id: id.into(),
            v_min: 0.81,
            v_max: 1.21,
            p_load: vec![0.0],
            q_load: vec![0.0],
            generator: None,
            pv: None,
        }
    }

    #[test]
    fn flat_start_without_load() {
        let net = ElectricNetwork {
            buses: vec![bus("a"), bus("b"), bus("c")],
            lines: vec![
                Line {
                    from: 0,
                    to: 1,
                    r: 0.01,
                    x: 0.02,
                    i_max: 1.0,
                    s_max: 1.0,
                },
                Line {
                    from: 1,
                    to: 2,
                    r: 0.01,
                    x: 0.02,
                    i_max: 1.0,
                    s_max: 1.0,
                },
            ],
            root: 0,
        };
        let s = distflow_solve(&net, &[0.0; 3], &[0.0; 3], 1.0).unwrap();
        assert!(s.v.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!(s.p.iter().chain(&s.i).all(|&v| v == 0.0));
    }
}

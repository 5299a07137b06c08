//! Constraint systems for the exact co-optimization model, its convex
//! relaxation, the flexible-irrigation variant and the two-stage baseline.
//!
//! Exact and relaxed systems built from the same case and options share one
//! variable layout, so a point of one can be evaluated against the other.

use crate::geometry::{
    hull_constraints, one_way_chord, pipe_polygon, pump_power_hull, GeometryError, HullBlock, HullSpec, PumpPowerHull,
    Sense as Side,
};
use crate::model::{NexusCase, RadialTopology, TankOwner, ValidationReport};
use crate::system::{ConstraintSystem, LinExpr, NonconvexExpr, NonconvexKind, Sense, VarKind};

/// Seconds per hour; tank volumes are m³ and flows m³/s.
const SECONDS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BuildError {
    #[error("case failed validation:\n{0}")]
    Invalid(ValidationReport),
    #[error("case has no irrigation loads")]
    NoIrrigation,
    #[error("pipe {0} has an unbounded head range")]
    UnboundedHeads(String),
    #[error("no pump on pipe index {0}")]
    NotPumpPipe(usize),
    #[error("pump schedule must be {pumps} x {periods}")]
    ScheduleShape { pumps: usize, periods: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Physics {
    /// Nonconvex equalities kept as such.
    Exact,
    /// Nonconvex equalities replaced by their hulls.
    Relaxed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Irrigation {
    /// Irrigation runs on each load's baseline schedule.
    Baseline,
    /// One binary per load and period with a fixed number of on-periods.
    Flexible,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scope {
    Joint,
    /// Water network and pump power only; minimizes pumped energy.
    Water,
    /// Feeder only, with pump power fixed per pump and period (p.u.).
    Electric(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub physics: Physics,
    pub irrigation: Irrigation,
    pub scope: Scope,
}

impl ModelConfig {
    pub fn joint(physics: Physics, irrigation: Irrigation) -> Self {
        ModelConfig {
            physics,
            irrigation,
            scope: Scope::Joint,
        }
    }
}

/// Exact co-optimization model with irrigation on its baseline schedule.
pub fn build_minlp(case: &NexusCase) -> Result<ConstraintSystem, BuildError> {
    build(case, &ModelConfig::joint(Physics::Exact, Irrigation::Baseline))
}

/// Convex relaxation of `build_minlp`, same variable layout.
pub fn build_micp(case: &NexusCase) -> Result<ConstraintSystem, BuildError> {
    build(case, &ModelConfig::joint(Physics::Relaxed, Irrigation::Baseline))
}

/// `build_micp` with dispatchable irrigation.
pub fn build_dsm(case: &NexusCase) -> Result<ConstraintSystem, BuildError> {
    if case.water.irrigation.is_empty() {
        return Err(BuildError::NoIrrigation);
    }
    build(case, &ModelConfig::joint(Physics::Relaxed, Irrigation::Flexible))
}

/// Exact counterpart of `build_dsm`, same variable layout.
pub fn build_dsm_minlp(case: &NexusCase) -> Result<ConstraintSystem, BuildError> {
    if case.water.irrigation.is_empty() {
        return Err(BuildError::NoIrrigation);
    }
    build(case, &ModelConfig::joint(Physics::Exact, Irrigation::Flexible))
}

/// Second stage of the independent baseline: the feeder dispatch for a
/// given pump power schedule.
#[derive(Debug, Clone)]
pub struct ElectricStage {
    case: NexusCase,
}

impl ElectricStage {
    pub fn new(case: &NexusCase) -> Self {
        ElectricStage { case: case.clone() }
    }

    /// `pump_power[p][t]` in p.u.
    pub fn build(&self, pump_power: &[Vec<f64>]) -> Result<ConstraintSystem, BuildError> {
        self.build_with(pump_power, Physics::Relaxed)
    }

    pub fn build_with(&self, pump_power: &[Vec<f64>], physics: Physics) -> Result<ConstraintSystem, BuildError> {
        let cfg = ModelConfig {
            physics,
            irrigation: Irrigation::Baseline,
            scope: Scope::Electric(pump_power.to_vec()),
        };
        build(&self.case, &cfg)
    }
}

/// Water-only pump scheduling (stage 1) and the feeder stage built from its
/// pump powers.
pub fn build_independent(case: &NexusCase) -> Result<(ConstraintSystem, ElectricStage), BuildError> {
    let cfg = ModelConfig {
        physics: Physics::Relaxed,
        irrigation: Irrigation::Baseline,
        scope: Scope::Water,
    };
    let stage1 = build(case, &cfg)?;
    Ok((stage1, ElectricStage { case: case.clone() }))
}

/// Per-row big-M constants for the pump on-off logic of one pipe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BigM {
    /// Relaxes R·f² ≤ Δ + y^G when the pump is off.
    pub convex: f64,
    /// Relaxes Δ + y^G ≤ R·f̄·f when the pump is off.
    pub secant: f64,
    /// Flow bound when on.
    pub flow: f64,
}

/// max(ȳᵢ − y̲ⱼ + hᵢ − hⱼ + ȳ^G, R·f̄², f̄) for the pump pipe `pipe`: a single
/// constant valid for every row of the on-off logic.
pub fn big_m_value(case: &NexusCase, pipe: usize) -> Result<f64, BuildError> {
    let (pipe_ref, pump) = pump_pipe(case, pipe)?;
    let (from, to) = (&case.water.nodes[pipe_ref.from], &case.water.nodes[pipe_ref.to]);
    check_heads(case, pipe)?;
    let f_max = pipe_ref.flow_max;
    let gain_max = pump.head_intercept.max(pump.head_gain(f_max));
    let head = from.head_max - to.head_min + from.elevation - to.elevation + gain_max;
    Ok(head.max(pipe_ref.resistance * f_max * f_max).max(f_max))
}

/// Tightest constants for each row, from the node head bounds with the
/// pump off (f = 0, y^G = C).
pub fn pump_big_m(case: &NexusCase, pipe: usize) -> Result<BigM, BuildError> {
    let (pipe_ref, pump) = pump_pipe(case, pipe)?;
    check_heads(case, pipe)?;
    let (from, to) = (&case.water.nodes[pipe_ref.from], &case.water.nodes[pipe_ref.to]);
    let dh = from.elevation - to.elevation;
    let c = pump.head_intercept;
    Ok(BigM {
        convex: (to.head_max - from.head_min - dh - c).max(0.0),
        secant: (from.head_max - to.head_min + dh + c).max(0.0),
        flow: pipe_ref.flow_max,
    })
}

fn pump_pipe(case: &NexusCase, pipe: usize) -> Result<(&crate::model::Pipe, &crate::model::Pump), BuildError> {
    let p = case.water.pipes.get(pipe).ok_or(BuildError::NotPumpPipe(pipe))?;
    let k = case.water.pump_on_pipe(pipe).ok_or(BuildError::NotPumpPipe(pipe))?;
    Ok((p, &case.water.pumps[k]))
}

fn check_heads(case: &NexusCase, pipe: usize) -> Result<(), BuildError> {
    let p = &case.water.pipes[pipe];
    let finite = [p.from, p.to].iter().all(|&n| {
        let node = &case.water.nodes[n];
        node.head_min.is_finite() && node.head_max.is_finite()
    });
    if finite {
        Ok(())
    } else {
        Err(BuildError::UnboundedHeads(p.id.clone()))
    }
}

/// Hull input for the line-flow set of line `l`. When S̄² exceeds V̄·Ī the
/// disc is shrunk to V̄·Ī, which the equality implies anyway.
pub fn line_hull_spec(case: &NexusCase, l: usize) -> HullSpec {
    let line = &case.electric.lines[l];
    let from = &case.electric.buses[line.from];
    let mut spec = HullSpec::branch_flow(line.s_max, from.v_min, from.v_max, line.i_max);
    spec.c = spec.c.min(from.v_max * line.i_max);
    spec
}

pub fn bess_hull_spec(case: &NexusCase, b: usize) -> HullSpec {
    let u = &case.bess[b];
    let bus = &case.electric.buses[u.bus];
    HullSpec::storage_loss(u.r_batt, u.r_cvt, u.s_max, bus.v_min, bus.v_max)
}

/// Every hull input the relaxation of `case` uses, labeled by device.
pub fn hull_specs(case: &NexusCase) -> Vec<(String, HullSpec)> {
    let e = &case.electric;
    let mut out: Vec<(String, HullSpec)> = (0..e.lines.len())
        .map(|l| {
            let line = &e.lines[l];
            (
                format!("line {}-{}", e.buses[line.from].id, e.buses[line.to].id),
                line_hull_spec(case, l),
            )
        })
        .collect();
    for (b, u) in case.bess.iter().enumerate() {
        if u.r_batt + u.r_cvt > 0.0 {
            out.push((format!("bess {}", u.id), bess_hull_spec(case, b)));
        }
    }
    out
}

pub fn pump_hull(case: &NexusCase, pump: usize) -> Result<PumpPowerHull, GeometryError> {
    let p = &case.water.pumps[pump];
    let f_max = case.water.pipes[p.pipe].flow_max;
    pump_power_hull(p.power_quadratic, p.power_linear, f_max, p.efficiency)
}

/// Builds the system described by `cfg`.
pub fn build(case: &NexusCase, cfg: &ModelConfig) -> Result<ConstraintSystem, BuildError> {
    let report = crate::model::validate_case(case);
    if !report.is_valid() {
        return Err(BuildError::Invalid(report));
    }
    if let Scope::Electric(power) = &cfg.scope {
        let (np, t) = (case.water.pumps.len(), case.periods());
        if power.len() != np || power.iter().any(|row| row.len() != t) {
            return Err(BuildError::ScheduleShape { pumps: np, periods: t });
        }
    }
    let topo = RadialTopology::build(&case.electric).expect("validated case has a radial feeder");
    let name = match (&cfg.scope, cfg.physics, cfg.irrigation) {
        (Scope::Water, ..) => "water-stage",
        (Scope::Electric(_), ..) => "electric-stage",
        (_, Physics::Exact, Irrigation::Baseline) => "co-opt",
        (_, Physics::Relaxed, Irrigation::Baseline) => "c-co-opt",
        (_, Physics::Exact, Irrigation::Flexible) => "dsm",
        (_, Physics::Relaxed, Irrigation::Flexible) => "c-dsm",
    };
    let mut b = Builder {
        case,
        cfg,
        topo,
        sys: ConstraintSystem::new(name),
    };
    b.run()?;
    Ok(b.sys)
}

struct Builder<'a> {
    case: &'a NexusCase,
    cfg: &'a ModelConfig,
    topo: RadialTopology,
    sys: ConstraintSystem,
}

impl Builder<'_> {
    fn electric(&self) -> bool {
        !matches!(self.cfg.scope, Scope::Water)
    }

    fn water(&self) -> bool {
        !matches!(self.cfg.scope, Scope::Electric(_))
    }

    fn exact(&self) -> bool {
        self.cfg.physics == Physics::Exact
    }

    fn var(&mut self, name: String, kind: VarKind, lb: f64, ub: f64, t: usize, dev: &str) -> usize {
        self.sys.add_var(name, kind, lb, ub, Some(t), Some(dev))
    }

    fn series(&mut self, prefix: &str, dev: &str, kind: VarKind, lb: f64, ub: f64) -> Vec<usize> {
        (0..self.case.periods())
            .map(|t| self.var(format!("{prefix}[{dev}][{t}]"), kind, lb, ub, t, dev))
            .collect()
    }

    fn run(&mut self) -> Result<(), BuildError> {
        self.sys.layout.periods = self.case.periods();
        if self.electric() {
            self.electric_vars();
        }
        if self.water() {
            self.pump_power_vars();
            self.water_vars();
        }
        if self.electric() {
            self.electric_rows()?;
        }
        if self.water() {
            self.water_rows()?;
        }
        self.objective();
        Ok(())
    }

    fn electric_vars(&mut self) {
        let case = self.case;
        let e = &case.electric;
        for bus in &e.buses {
            let v = self.series("V", &bus.id, VarKind::Continuous, bus.v_min, bus.v_max);
            self.sys.layout.voltage.push(v);
        }
        for line in &e.lines {
            let id = format!("{}-{}", e.buses[line.from].id, e.buses[line.to].id);
            let s = line.s_max;
            let p = self.series("P", &id, VarKind::Continuous, -s, s);
            let q = self.series("Q", &id, VarKind::Continuous, -s, s);
            let i = self.series("I", &id, VarKind::Continuous, 0.0, line.i_max);
            self.sys.layout.line_p.push(p);
            self.sys.layout.line_q.push(q);
            self.sys.layout.line_i.push(i);
        }
        for bus in &e.buses {
            let (p, q) = match &bus.generator {
                Some(g) => (
                    self.series("PG", &bus.id, VarKind::Continuous, g.p_min, g.p_max),
                    self.series("QG", &bus.id, VarKind::Continuous, g.q_min, g.q_max),
                ),
                None => (Vec::new(), Vec::new()),
            };
            self.sys.layout.gen_p.push(p);
            self.sys.layout.gen_q.push(q);
        }
        for u in &case.bess {
            let s = u.s_max;
            let lossless = u.r_batt + u.r_cvt == 0.0;
            let p = self.series("PES", &u.id, VarKind::Continuous, -s, s);
            let q = self.series("QES", &u.id, VarKind::Continuous, -s, s);
            let l_ub = if lossless { 0.0 } else { f64::INFINITY };
            let l = self.series("LES", &u.id, VarKind::Continuous, 0.0, l_ub);
            let en = self.series("EES", &u.id, VarKind::Continuous, u.e_min, u.e_max);
            self.sys.layout.bess_p.push(p);
            self.sys.layout.bess_q.push(q);
            self.sys.layout.bess_loss.push(l);
            self.sys.layout.bess_energy.push(en);
        }
    }

    fn pump_power_vars(&mut self) {
        let case = self.case;
        for (k, pump) in case.water.pumps.iter().enumerate() {
            let hull = pump_hull(case, k).expect("validated pump");
            let f_max = hull.f_max;
            let mut top = hull.bounds(f_max).1;
            if hull.quadratic < 0.0 {
                let vertex = (-hull.linear / (2.0 * hull.quadratic)).clamp(0.0, f_max);
                top = top.max(hull.curve(vertex));
            }
            let ub = top.max(0.0) / pump.efficiency;
            let p = self.series("PPump", &pump.id, VarKind::Continuous, 0.0, ub);
            self.sys.layout.pump_power.push(p);
        }
    }

    fn water_vars(&mut self) {
        let case = self.case;
        let w = &case.water;
        for node in &w.nodes {
            let y = self.series("y", &node.id, VarKind::Continuous, node.head_min, node.head_max);
            self.sys.layout.head.push(y);
        }
        for pipe in &w.pipes {
            let f = self.series("f", &pipe.id, VarKind::Continuous, pipe.flow_min, pipe.flow_max);
            self.sys.layout.flow.push(f);
        }
        for pump in &w.pumps {
            let f_max = w.pipes[pump.pipe].flow_max;
            let (g0, g1) = (pump.head_intercept, pump.head_gain(f_max));
            let g = self.series("yG", &pump.id, VarKind::Continuous, g0.min(g1), g0.max(g1));
            self.sys.layout.pump_gain.push(g);
        }
        for pump in &w.pumps {
            let a = self.series("alpha", &pump.id, VarKind::Binary, 0.0, 1.0);
            self.sys.layout.pump_status.push(a);
        }
        for node in &w.nodes {
            let s = match node.source {
                Some(src) => self.series("wG", &node.id, VarKind::Continuous, src.min, src.max),
                None => Vec::new(),
            };
            self.sys.layout.source.push(s);
        }
        for tank in &w.tanks {
            let f = self.series("wS", &tank.id, VarKind::Continuous, tank.flow_min, tank.flow_max);
            let s = self.series("S", &tank.id, VarKind::Continuous, tank.min, tank.max);
            self.sys.layout.tank_flow.push(f);
            self.sys.layout.tank_level.push(s);
        }
        if self.cfg.irrigation == Irrigation::Flexible {
            for irr in &w.irrigation {
                let a = self.series("irr", &irr.id, VarKind::Binary, 0.0, 1.0);
                self.sys.layout.irrigation.push(a);
            }
        }
    }

    /// Pump power at `(pump, t)`: a variable, or a constant in the feeder stage.
    fn pump_power(&self, k: usize, t: usize) -> LinExpr {
        match &self.cfg.scope {
            Scope::Electric(power) => LinExpr::constant(power[k][t]),
            _ => LinExpr::var(self.sys.layout.pump_power[k][t]),
        }
    }

    fn electric_rows(&mut self) -> Result<(), BuildError> {
        let case = self.case;
        let e = &case.electric;
        let lay = self.sys.layout.clone();
        for t in 0..case.periods() {
            for (i, bus) in e.buses.iter().enumerate() {
                // Σ children − parent + r·ℐ_parent − injections = 0
                let mut p = LinExpr::new();
                let mut q = LinExpr::new();
                for &l in &self.topo.child_lines[i] {
                    p.push(lay.line_p[l][t], 1.0);
                    q.push(lay.line_q[l][t], 1.0);
                }
                if let Some(l) = self.topo.parent_line[i] {
                    let line = &e.lines[l];
                    p.push(lay.line_p[l][t], -1.0);
                    p.push(lay.line_i[l][t], line.r);
                    q.push(lay.line_q[l][t], -1.0);
                    q.push(lay.line_i[l][t], line.x);
                }
                if bus.generator.is_some() {
                    p.push(lay.gen_p[i][t], -1.0);
                    q.push(lay.gen_q[i][t], -1.0);
                }
                if let Some(pv) = &bus.pv {
                    p.constant -= pv.p[t];
                    q.constant -= pv.q[t];
                }
                p.constant += bus.p_load[t];
                q.constant += bus.q_load[t];
                for (b, u) in case.bess.iter().enumerate() {
                    if u.bus == i {
                        p.push(lay.bess_p[b][t], -1.0);
                        q.push(lay.bess_q[b][t], -1.0);
                    }
                }
                for (k, pump) in case.water.pumps.iter().enumerate() {
                    if pump.bus == i {
                        let pp = self.pump_power(k, t);
                        p.extend(&pp, 1.0);
                        q.extend(&pp, 1.0 / pump.pf_ratio);
                    }
                }
                self.sys.add_linear(format!("p_balance[{}][{t}]", bus.id), p, Sense::Eq);
                self.sys.add_linear(format!("q_balance[{}][{t}]", bus.id), q, Sense::Eq);
            }
            for (l, line) in e.lines.iter().enumerate() {
                let id = format!("{}-{}", e.buses[line.from].id, e.buses[line.to].id);
                let (p, q, cur) = (lay.line_p[l][t], lay.line_q[l][t], lay.line_i[l][t]);
                let (vi, vk) = (lay.voltage[line.from][t], lay.voltage[line.to][t]);
                let drop = LinExpr::var(vi)
                    .add(vk, -1.0)
                    .add(p, -2.0 * line.r)
                    .add(q, -2.0 * line.x)
                    .add(cur, line.r * line.r + line.x * line.x);
                self.sys.add_linear(format!("v_drop[{id}][{t}]"), drop, Sense::Eq);
                let name = format!("branch_flow[{id}][{t}]");
                if self.exact() {
                    self.sys.add_nonconvex(
                        &name,
                        NonconvexKind::BranchFlow,
                        t,
                        NonconvexExpr::Bilinear {
                            quad: vec![(p, 1.0), (q, 1.0)],
                            u: vi,
                            v: cur,
                        },
                    );
                    self.disc(format!("s_max[{id}][{t}]"), p, q, line.s_max);
                } else {
                    let block = hull_constraints(&line_hull_spec(case, l))?;
                    self.emit_hull(&name, &block, [p, q, vi, cur]);
                }
            }
            for (b, u) in case.bess.iter().enumerate() {
                let (p, q, loss) = (lay.bess_p[b][t], lay.bess_q[b][t], lay.bess_loss[b][t]);
                let v = lay.voltage[u.bus][t];
                let name = format!("bess_loss[{}][{t}]", u.id);
                let lossless = u.r_batt + u.r_cvt == 0.0;
                if lossless {
                    self.disc(format!("bess_s_max[{}][{t}]", u.id), p, q, u.s_max);
                } else if self.exact() {
                    self.sys.add_nonconvex(
                        &name,
                        NonconvexKind::BessLoss,
                        t,
                        NonconvexExpr::Bilinear {
                            quad: vec![(p, u.r_batt + u.r_cvt), (q, u.r_cvt)],
                            u: loss,
                            v,
                        },
                    );
                    self.disc(format!("bess_s_max[{}][{t}]", u.id), p, q, u.s_max);
                } else {
                    let block = hull_constraints(&bess_hull_spec(case, b))?;
                    self.emit_hull(&name, &block, [p, q, v, loss]);
                }
                // E_t = E_{t−1} − Δt·(P + L)
                let dt = case.time.hours_per_period;
                let mut en = LinExpr::var(lay.bess_energy[b][t]).add(p, dt).add(loss, dt);
                if t == 0 {
                    en.constant -= u.e0;
                } else {
                    en.push(lay.bess_energy[b][t - 1], -1.0);
                }
                self.sys
                    .add_linear(format!("bess_energy[{}][{t}]", u.id), en, Sense::Eq);
            }
        }
        Ok(())
    }

    fn disc(&mut self, name: String, p: usize, q: usize, s_max: f64) {
        self.sys
            .add_quadratic(name, vec![(p, 1.0), (q, 1.0)], LinExpr::constant(-s_max * s_max));
    }

    /// Rotated cone plus the block's rows over `x = [x1, x2, x3, x4]`.
    fn emit_hull(&mut self, name: &str, block: &HullBlock, x: [usize; 4]) {
        let mut quad = vec![(x[0], block.cone[0])];
        if block.cone[1] != 0.0 {
            quad.push((x[1], block.cone[1]));
        }
        self.sys.add_cone(name, quad, LinExpr::var(x[2]), LinExpr::var(x[3]));
        for row in &block.rows {
            let mut lin = LinExpr::constant(-row.rhs);
            for i in 0..4 {
                lin.push(x[i], row.lin[i]);
            }
            let rname = format!("{name}:{}", row.label);
            if row.is_linear() {
                self.sys.add_linear(rname, lin, Sense::Le);
            } else {
                let q = (0..4)
                    .filter(|&i| row.quad[i] != 0.0)
                    .map(|i| (x[i], row.quad[i]))
                    .collect();
                self.sys.add_quadratic(rname, q, lin);
            }
        }
    }

    /// y_from − y_to + h_from − h_to
    fn head_drop(&self, pipe: usize, t: usize) -> LinExpr {
        let w = &self.case.water;
        let p = &w.pipes[pipe];
        let lay = &self.sys.layout;
        LinExpr::var(lay.head[p.from][t])
            .add(lay.head[p.to][t], -1.0)
            .plus(w.nodes[p.from].elevation - w.nodes[p.to].elevation)
    }

    fn water_rows(&mut self) -> Result<(), BuildError> {
        let case = self.case;
        let w = &case.water;
        let lay = self.sys.layout.clone();
        let dt = case.time.hours_per_period * SECONDS_PER_HOUR;
        let incidence = w.incidence();
        let big_m: Vec<BigM> = w
            .pumps
            .iter()
            .map(|p| pump_big_m(case, p.pipe))
            .collect::<Result<_, _>>()?;
        let hulls: Vec<PumpPowerHull> = (0..w.pumps.len())
            .map(|k| pump_hull(case, k))
            .collect::<Result<_, _>>()?;
        for t in 0..case.periods() {
            for (i, node) in w.nodes.iter().enumerate() {
                let mut bal = LinExpr::constant(node.demand[t]);
                for (k, &a) in incidence[i].iter().enumerate() {
                    bal.push(lay.flow[k][t], f64::from(a));
                }
                if node.source.is_some() {
                    bal.push(lay.source[i][t], -1.0);
                }
                for (s, tank) in w.tanks.iter().enumerate() {
                    if tank.node == i {
                        bal.push(lay.tank_flow[s][t], 1.0);
                    }
                }
                self.sys.add_linear(format!("mass[{}][{t}]", node.id), bal, Sense::Eq);
            }
            for (k, pipe) in w.pipes.iter().enumerate() {
                if w.pump_on_pipe(k).is_some() {
                    continue;
                }
                let f = lay.flow[k][t];
                let drop = self.head_drop(k, t);
                let name = format!("head_loss[{}][{t}]", pipe.id);
                if self.exact() {
                    self.sys.add_nonconvex(
                        name,
                        NonconvexKind::PipeHeadLoss,
                        t,
                        NonconvexExpr::SignedSquare {
                            lhs: drop,
                            flow: f,
                            coef: pipe.resistance,
                        },
                    );
                } else {
                    self.pipe_relaxation(&name, k, f, drop)?;
                }
            }
            for (k, pump) in w.pumps.iter().enumerate() {
                let pipe = &w.pipes[pump.pipe];
                let f = lay.flow[pump.pipe][t];
                let g = lay.pump_gain[k][t];
                let alpha = lay.pump_status[k][t];
                let power = lay.pump_power[k][t];
                self.sys.add_linear(
                    format!("head_gain[{}][{t}]", pump.id),
                    LinExpr::var(g).add(f, -pump.head_slope).plus(-pump.head_intercept),
                    Sense::Eq,
                );
                let mut lhs = self.head_drop(pump.pipe, t);
                lhs.push(g, 1.0);
                let r = pipe.resistance;
                if self.exact() {
                    self.sys.add_nonconvex(
                        format!("pump_head[{}][{t}]", pump.id),
                        NonconvexKind::PumpHead,
                        t,
                        NonconvexExpr::Disjunction {
                            status: alpha,
                            lhs,
                            flow: f,
                            coef: r,
                        },
                    );
                    self.sys.add_nonconvex(
                        format!("pump_power[{}][{t}]", pump.id),
                        NonconvexKind::PumpPower,
                        t,
                        NonconvexExpr::Polynomial {
                            power,
                            efficiency: pump.efficiency,
                            flow: f,
                            quadratic: pump.power_quadratic,
                            linear: pump.power_linear,
                        },
                    );
                    continue;
                }
                let m = big_m[k];
                // R·f² ≤ lhs + M(1 − α)
                let mut convex = LinExpr::constant(-m.convex);
                convex.extend(&lhs, -1.0);
                convex.push(alpha, m.convex);
                self.sys
                    .add_quadratic(format!("pump_head_lo[{}][{t}]", pump.id), vec![(f, r)], convex);
                // lhs + M(α − 1) ≤ R·f̄·f
                let mut secant = lhs.clone();
                secant.push(alpha, m.secant);
                secant.constant -= m.secant;
                secant.push(f, -r * pipe.flow_max);
                self.sys
                    .add_linear(format!("pump_head_hi[{}][{t}]", pump.id), secant, Sense::Le);
                self.sys.add_linear(
                    format!("pump_flow[{}][{t}]", pump.id),
                    LinExpr::var(f).add(alpha, -m.flow),
                    Sense::Le,
                );
                self.pump_power_rows(k, t, &hulls[k], power, f);
            }
            for (s, tank) in w.tanks.iter().enumerate() {
                // S_t − S_{t−1} − Δt·(inflow − draws) = 0
                let mut bal = LinExpr::var(lay.tank_level[s][t]).add(lay.tank_flow[s][t], -dt);
                if t == 0 {
                    bal.constant -= tank.initial;
                } else {
                    bal.push(lay.tank_level[s][t - 1], -1.0);
                }
                if tank.owner == TankOwner::Customer {
                    for (j, irr) in w.irrigation.iter().enumerate() {
                        if irr.tank_node != tank.node {
                            continue;
                        }
                        bal.constant += dt * irr.demand[t];
                        match self.cfg.irrigation {
                            Irrigation::Flexible => bal.push(lay.irrigation[j][t], dt * irr.rate),
                            Irrigation::Baseline => {
                                if irr.baseline[t] {
                                    bal.constant += dt * irr.rate;
                                }
                            }
                        }
                    }
                }
                self.sys.add_linear(format!("tank[{}][{t}]", tank.id), bal, Sense::Eq);
            }
        }
        if self.cfg.irrigation == Irrigation::Flexible {
            for (j, irr) in w.irrigation.iter().enumerate() {
                let mut sum = LinExpr::constant(-(irr.hours_on as f64));
                for &a in &lay.irrigation[j] {
                    sum.push(a, 1.0);
                }
                self.sys
                    .add_linear(format!("irrigation_hours[{}]", irr.id), sum, Sense::Eq);
            }
        }
        Ok(())
    }

    fn pipe_relaxation(&mut self, name: &str, k: usize, f: usize, drop: LinExpr) -> Result<(), BuildError> {
        let pipe = &self.case.water.pipes[k];
        let r = pipe.resistance;
        let half = |sys: &mut ConstraintSystem, label: &str, slope: f64, intercept: f64, side: Side| {
            // drop − slope·f − intercept ≤ 0 (Below) or ≥ 0 (Above)
            let mut e = drop.clone();
            e.push(f, -slope);
            e.constant -= intercept;
            let sense = match side {
                Side::Below => Sense::Le,
                Side::Above => Sense::Ge,
            };
            sys.add_linear(format!("{name}:{label}"), e, sense);
        };
        if pipe.flow_min < 0.0 && pipe.flow_max > 0.0 {
            let poly = pipe_polygon(r, pipe.flow_min, pipe.flow_max)?;
            for (line, label) in poly.lines.iter().zip(["l1", "l2", "l3", "l4"]) {
                half(&mut self.sys, label, line.slope, line.intercept, line.sense);
            }
            return Ok(());
        }
        let chord = one_way_chord(r, pipe.flow_min, pipe.flow_max);
        half(&mut self.sys, "chord", chord.slope, chord.intercept, chord.sense);
        // The curve itself bounds the other side: R·f² ≤ drop for f ≥ 0,
        // drop ≤ −R·f² for f ≤ 0.
        let sign = if pipe.flow_min >= 0.0 { -1.0 } else { 1.0 };
        let mut lin = LinExpr::new();
        lin.extend(&drop, sign);
        self.sys.add_quadratic(format!("{name}:curve"), vec![(f, r)], lin);
        Ok(())
    }

    fn pump_power_rows(&mut self, k: usize, t: usize, hull: &PumpPowerHull, power: usize, f: usize) {
        let id = &self.case.water.pumps[k].id;
        let eta = hull.efficiency;
        let curve_lin = LinExpr::new().add(f, hull.linear).add(power, -eta);
        if hull.quadratic >= 0.0 {
            // a₁f² + a₀f ≤ ηP ≤ (a₁f̄ + a₀)f
            let mut upper = LinExpr::new().add(power, eta).add(f, -hull.chord_slope);
            upper.terms.retain(|&(_, c)| c != 0.0);
            self.sys
                .add_linear(format!("pump_power_hi[{id}][{t}]"), upper, Sense::Le);
            if hull.quadratic > 0.0 {
                self.sys.add_quadratic(
                    format!("pump_power_lo[{id}][{t}]"),
                    vec![(f, hull.quadratic)],
                    curve_lin,
                );
            } else {
                self.sys
                    .add_linear(format!("pump_power_lo[{id}][{t}]"), curve_lin, Sense::Le);
            }
        } else {
            // (a₁f̄ + a₀)f ≤ ηP ≤ a₁f² + a₀f
            let mut lower = LinExpr::new().add(power, eta).add(f, -hull.chord_slope);
            lower.terms.retain(|&(_, c)| c != 0.0);
            self.sys
                .add_linear(format!("pump_power_lo[{id}][{t}]"), lower, Sense::Ge);
            let upper = LinExpr::new().add(power, eta).add(f, -hull.linear);
            self.sys
                .add_quadratic(format!("pump_power_hi[{id}][{t}]"), vec![(f, -hull.quadratic)], upper);
        }
    }

    fn objective(&mut self) {
        let case = self.case;
        let dt = case.time.hours_per_period;
        let lay = &self.sys.layout;
        let mut lin = LinExpr::new();
        let mut quad = Vec::new();
        if self.electric() {
            let root = case.electric.root;
            for t in 0..case.periods() {
                lin.push(lay.gen_p[root][t], dt * case.prices[t]);
            }
            for i in case.electric.generator_buses() {
                let g = case.electric.buses[i].generator.as_ref().expect("generator bus");
                for t in 0..case.periods() {
                    lin.push(lay.gen_p[i][t], dt * g.c1);
                    if g.c2 > 0.0 {
                        quad.push((lay.gen_p[i][t], dt * g.c2));
                    }
                }
            }
        } else {
            for row in &lay.pump_power {
                for &p in row {
                    lin.push(p, dt);
                }
            }
        }
        self.sys.objective.linear = lin;
        self.sys.objective.quad = quad;
    }
}

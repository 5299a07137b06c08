//! Indexed variables and constraint blocks shared by every model variant.

use std::collections::HashMap;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lb: f64,
    pub ub: f64,
    pub period: Option<usize>,
    pub device: Option<String>,
}

/// Σ coef·x + constant
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        LinExpr::default()
    }

    pub fn var(v: usize) -> Self {
        LinExpr {
            terms: vec![(v, 1.0)],
            constant: 0.0,
        }
    }

    pub fn constant(c: f64) -> Self {
        LinExpr {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn add(mut self, v: usize, coef: f64) -> Self {
        self.push(v, coef);
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn push(&mut self, v: usize, coef: f64) {
        if coef != 0.0 {
            self.terms.push((v, coef));
        }
    }

    pub fn extend(&mut self, other: &LinExpr, scale: f64) {
        for &(v, c) in &other.terms {
            self.push(v, c * scale);
        }
        self.constant += other.constant * scale;
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().fold(self.constant, |acc, &(v, c)| acc + c * x[v])
    }

    /// Sum of |term| magnitudes at `x`, used to scale tolerances.
    pub fn magnitude(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .fold(self.constant.abs(), |acc, &(v, c)| acc + (c * x[v]).abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

/// expr (sense) 0
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearConstraint {
    pub name: String,
    pub expr: LinExpr,
    pub sense: Sense,
}

/// Σ q·x² + lin ≤ 0 with q ≥ 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadConstraint {
    pub name: String,
    pub quad: Vec<(usize, f64)>,
    pub lin: LinExpr,
}

/// Σ q·x² ≤ u·v with u, v ≥ 0 and q ≥ 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeConstraint {
    pub name: String,
    pub quad: Vec<(usize, f64)>,
    pub u: LinExpr,
    pub v: LinExpr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NonconvexKind {
    BranchFlow,
    BessLoss,
    PipeHeadLoss,
    PumpHead,
    PumpPower,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum NonconvexExpr {
    /// Σ q·x² = u·v
    Bilinear {
        quad: Vec<(usize, f64)>,
        u: usize,
        v: usize,
    },
    /// lhs = coef·sgn(f)·f²
    SignedSquare { lhs: LinExpr, flow: usize, coef: f64 },
    /// status = 1 ⇒ lhs = coef·f²; status = 0 ⇒ f = 0
    Disjunction {
        status: usize,
        lhs: LinExpr,
        flow: usize,
        coef: f64,
    },
    /// efficiency·power = quadratic·f² + linear·f
    Polynomial {
        power: usize,
        efficiency: f64,
        flow: usize,
        quadratic: f64,
        linear: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonconvexEquality {
    pub name: String,
    pub kind: NonconvexKind,
    pub period: usize,
    pub expr: NonconvexExpr,
}

impl NonconvexEquality {
    /// Absolute residual at `x`. Binary statuses are read as on when ≥ 0.5.
    pub fn residual(&self, x: &[f64]) -> f64 {
        match &self.expr {
            NonconvexExpr::Bilinear { quad, u, v } => {
                let q: f64 = quad.iter().map(|&(i, c)| c * x[i] * x[i]).sum();
                (q - x[*u] * x[*v]).abs()
            }
            NonconvexExpr::SignedSquare { lhs, flow, coef } => {
                let f = x[*flow];
                (lhs.eval(x) - coef * f * f.abs()).abs()
            }
            NonconvexExpr::Disjunction {
                status,
                lhs,
                flow,
                coef,
            } => {
                let f = x[*flow];
                if x[*status] >= 0.5 {
                    (lhs.eval(x) - coef * f * f).abs()
                } else {
                    f.abs()
                }
            }
            NonconvexExpr::Polynomial {
                power,
                efficiency,
                flow,
                quadratic,
                linear,
            } => {
                let f = x[*flow];
                (efficiency * x[*power] - quadratic * f * f - linear * f).abs()
            }
        }
    }
}

/// linear + Σ q·x²
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Objective {
    pub linear: LinExpr,
    pub quad: Vec<(usize, f64)>,
}

impl Objective {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.linear.eval(x) + self.quad.iter().map(|&(i, q)| q * x[i] * x[i]).sum::<f64>()
    }
}

/// Index tables from model entities to variables, `[entity][period]`.
/// Entities absent from a model variant have empty rows.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Layout {
    pub periods: usize,
    pub voltage: Vec<Vec<usize>>,
    pub line_p: Vec<Vec<usize>>,
    pub line_q: Vec<Vec<usize>>,
    pub line_i: Vec<Vec<usize>>,
    /// Per bus; empty without a generator.
    pub gen_p: Vec<Vec<usize>>,
    pub gen_q: Vec<Vec<usize>>,
    pub bess_p: Vec<Vec<usize>>,
    pub bess_q: Vec<Vec<usize>>,
    pub bess_loss: Vec<Vec<usize>>,
    pub bess_energy: Vec<Vec<usize>>,
    pub pump_power: Vec<Vec<usize>>,
    pub pump_status: Vec<Vec<usize>>,
    pub pump_gain: Vec<Vec<usize>>,
    pub head: Vec<Vec<usize>>,
    pub flow: Vec<Vec<usize>>,
    /// Per water node; empty unless the node is a source.
    pub source: Vec<Vec<usize>>,
    /// Per tank: net inflow and storage level.
    pub tank_flow: Vec<Vec<usize>>,
    pub tank_level: Vec<Vec<usize>>,
    pub irrigation: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConstraintSystem {
    pub name: String,
    pub variables: Vec<Variable>,
    pub linear: Vec<LinearConstraint>,
    pub quadratic: Vec<QuadConstraint>,
    pub cones: Vec<ConeConstraint>,
    pub nonconvex: Vec<NonconvexEquality>,
    pub objective: Objective,
    pub layout: Layout,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl ConstraintSystem {
    pub fn new(name: impl Into<String>) -> Self {
        ConstraintSystem {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        kind: VarKind,
        lb: f64,
        ub: f64,
        period: Option<usize>,
        device: Option<&str>,
    ) -> usize {
        let name = name.into();
        let id = self.variables.len();
        self.index.insert(name.clone(), id);
        self.variables.push(Variable {
            name,
            kind,
            lb,
            ub,
            period,
            device: device.map(str::to_string),
        });
        id
    }

    pub fn continuous(&mut self, name: impl Into<String>, lb: f64, ub: f64) -> usize {
        self.add_var(name, VarKind::Continuous, lb, ub, None, None)
    }

    pub fn binary(&mut self, name: impl Into<String>) -> usize {
        self.add_var(name, VarKind::Binary, 0.0, 1.0, None, None)
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn binaries(&self) -> Vec<usize> {
        (0..self.variables.len())
            .filter(|&i| self.variables[i].kind == VarKind::Binary)
            .collect()
    }

    pub fn add_linear(&mut self, name: impl Into<String>, expr: LinExpr, sense: Sense) {
        self.linear.push(LinearConstraint {
            name: name.into(),
            expr,
            sense,
        });
    }

    pub fn add_quadratic(&mut self, name: impl Into<String>, quad: Vec<(usize, f64)>, lin: LinExpr) {
        self.quadratic.push(QuadConstraint {
            name: name.into(),
            quad,
            lin,
        });
    }

    pub fn add_cone(&mut self, name: impl Into<String>, quad: Vec<(usize, f64)>, u: LinExpr, v: LinExpr) {
        self.cones.push(ConeConstraint {
            name: name.into(),
            quad,
            u,
            v,
        });
    }

    pub fn add_nonconvex(&mut self, name: impl Into<String>, kind: NonconvexKind, period: usize, expr: NonconvexExpr) {
        self.nonconvex.push(NonconvexEquality {
            name: name.into(),
            kind,
            period,
            expr,
        });
    }

    pub fn is_convex(&self) -> bool {
        self.nonconvex.is_empty()
    }

    /// Names of quadratic or cone constraints that touch a binary variable.
    pub fn binary_purity_violations(&self) -> Vec<String> {
        let is_bin = |v: usize| self.variables[v].kind == VarKind::Binary;
        let mut bad = Vec::new();
        for q in &self.quadratic {
            if q.quad.iter().any(|&(v, _)| is_bin(v)) {
                bad.push(q.name.clone());
            }
        }
        for c in &self.cones {
            let touches = c.quad.iter().any(|&(v, _)| is_bin(v))
                || c.u.terms.iter().any(|&(v, _)| is_bin(v))
                || c.v.terms.iter().any(|&(v, _)| is_bin(v));
            if touches {
                bad.push(c.name.clone());
            }
        }
        bad
    }

    /// Largest scaled violation of bounds, linear, quadratic and cone
    /// constraints at `x`. Nonconvex equalities are not included.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.violations(x).into_iter().map(|(_, v)| v).fold(0.0, f64::max)
    }

    /// Name and scaled violation of every violated convex constraint.
    pub fn violations(&self, x: &[f64]) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        let mut note = |name: &str, amount: f64, scale: f64| {
            let v = amount / scale.max(1.0);
            if v > 0.0 {
                out.push((name.to_string(), v));
            }
        };
        for (i, var) in self.variables.iter().enumerate() {
            let v = (var.lb - x[i]).max(x[i] - var.ub).max(0.0);
            note(&var.name, v, x[i].abs());
            if var.kind == VarKind::Binary {
                let frac = (x[i] - x[i].round()).abs();
                note(&var.name, frac, 1.0);
            }
        }
        for c in &self.linear {
            let val = c.expr.eval(x);
            let amount = match c.sense {
                Sense::Le => val.max(0.0),
                Sense::Ge => (-val).max(0.0),
                Sense::Eq => val.abs(),
            };
            note(&c.name, amount, c.expr.magnitude(x));
        }
        for q in &self.quadratic {
            let sq: f64 = q.quad.iter().map(|&(i, c)| c * x[i] * x[i]).sum();
            let val = sq + q.lin.eval(x);
            note(&q.name, val.max(0.0), sq + q.lin.magnitude(x));
        }
        for c in &self.cones {
            let sq: f64 = c.quad.iter().map(|&(i, q)| q * x[i] * x[i]).sum();
            let (u, v) = (c.u.eval(x), c.v.eval(x));
            let amount = (sq - u * v).max(-u).max(-v).max(0.0);
            note(&c.name, amount, sq + (u * v).abs());
        }
        out
    }

    /// Largest residual per nonconvex kind.
    pub fn nonconvex_residuals(&self, x: &[f64]) -> Vec<(NonconvexKind, f64)> {
        let kinds = [
            NonconvexKind::BranchFlow,
            NonconvexKind::BessLoss,
            NonconvexKind::PipeHeadLoss,
            NonconvexKind::PumpHead,
            NonconvexKind::PumpPower,
        ];
        kinds
            .iter()
            .map(|&k| {
                let r = self
                    .nonconvex
                    .iter()
                    .filter(|n| n.kind == k)
                    .map(|n| n.residual(x))
                    .fold(0.0, f64::max);
                (k, r)
            })
            .collect()
    }

    /// JSON interchange dump of variables, blocks and objective.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("constraint system serializes")
    }

    /// Constraint counts per block, in a fixed order.
    pub fn counts(&self) -> SystemCounts {
        SystemCounts {
            variables: self.variables.len(),
            binaries: self.binaries().len(),
            linear_eq: self.linear.iter().filter(|c| c.sense == Sense::Eq).count(),
            linear_ineq: self.linear.iter().filter(|c| c.sense != Sense::Eq).count(),
            quadratic: self.quadratic.len(),
            cones: self.cones.len(),
            nonconvex: self.nonconvex.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SystemCounts {
    pub variables: usize,
    pub binaries: usize,
    pub linear_eq: usize,
    pub linear_ineq: usize,
    pub quadratic: usize,
    pub cones: usize,
    pub nonconvex: usize,
}

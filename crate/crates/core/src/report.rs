//! Machine-readable reports. Every JSON report carries `schema_version`;
//! wall-clock times are kept out so reruns compare byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::model::NexusCase;
use crate::study::{SolveOutcome, SolveSummary, Variant};
use crate::system::{ConstraintSystem, SystemCounts};
use crate::verifier::ExactnessReport;

pub const SCHEMA_VERSION: u32 = 1;

/// Wraps a report body with the schema version and report kind.
#[derive(Debug, Clone, Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub schema_version: u32,
    pub report: &'a str,
    pub case: &'a str,
    #[serde(flatten)]
    pub body: &'a T,
}

pub fn envelope<'a, T: Serialize>(report: &'a str, case: &'a NexusCase, body: &'a T) -> Envelope<'a, T> {
    Envelope {
        schema_version: SCHEMA_VERSION,
        report,
        case: &case.name,
        body,
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct SolutionReport {
    pub model: String,
    pub variant: Variant,
    pub counts: SystemCounts,
    pub solver: SolveSummary,
    pub objective: f64,
    pub gap: f64,
    pub exact: bool,
    pub schedule: Schedule,
    /// Every variable by name; empty without a solution.
    pub variables: BTreeMap<String, f64>,
}

impl SolutionReport {
    pub fn new(case: &NexusCase, out: &SolveOutcome) -> Self {
        let variables = if out.x.is_empty() {
            BTreeMap::new()
        } else {
            out.system
                .variables
                .iter()
                .zip(&out.x)
                .map(|(v, &x)| (v.name.clone(), x))
                .collect()
        };
        SolutionReport {
            model: out.model.clone(),
            variant: out.variant,
            counts: out.counts,
            solver: out.solver.clone(),
            objective: out.objective,
            gap: out.gap,
            exact: out.is_exact(),
            schedule: Schedule::new(case, &out.system, &out.x),
            variables,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExactnessSummary {
    pub epsilon: f64,
    pub exact: bool,
    pub max_residual: f64,
    pub by_kind: BTreeMap<String, f64>,
    /// `[period]` → kind → largest residual.
    pub per_period: Vec<BTreeMap<String, f64>>,
    /// Same figures for the relaxed optimum before recovery.
    pub relaxed_max_residual: Option<f64>,
    pub relaxed_by_kind: Option<BTreeMap<String, f64>>,
    /// Largest violation of the relaxation at the reported point.
    pub feasibility: Option<f64>,
}

impl ExactnessSummary {
    pub fn new(case: &NexusCase, out: &SolveOutcome) -> Option<Self> {
        let e: &ExactnessReport = out.exactness.as_ref()?;
        Some(ExactnessSummary {
            epsilon: e.epsilon,
            exact: e.exact,
            max_residual: e.max_residual,
            by_kind: e.by_kind.clone(),
            per_period: e.per_period(case.periods()),
            relaxed_max_residual: out.relaxed.as_ref().map(|r| r.max_residual),
            relaxed_by_kind: out.relaxed.as_ref().map(|r| r.by_kind.clone()),
            feasibility: out.feasibility,
        })
    }
}

impl ExactnessSummary {
    /// One row per period, one column per equality kind.
    pub fn to_csv(&self) -> String {
        let kinds: Vec<&String> = self.by_kind.keys().collect();
        let mut s = String::from("t");
        for k in &kinds {
            write!(s, ",{k}").unwrap();
        }
        s.push('\n');
        for (t, row) in self.per_period.iter().enumerate() {
            write!(s, "{t}").unwrap();
            for k in &kinds {
                write!(s, ",{}", row.get(*k).copied().unwrap_or(0.0)).unwrap();
            }
            s.push('\n');
        }
        s
    }
}

/// Every input time series of the case in internal units: price, bus
/// loads, PV output, node demands and irrigation draws.
pub fn profiles(case: &NexusCase) -> Schedule {
    let mut cols: Vec<(String, &[f64])> = vec![("price".into(), &case.prices)];
    for b in &case.electric.buses {
        cols.push((format!("PL[{}]", b.id), &b.p_load));
        cols.push((format!("QL[{}]", b.id), &b.q_load));
        if let Some(pv) = &b.pv {
            cols.push((format!("PRE[{}]", b.id), &pv.p));
            cols.push((format!("QRE[{}]", b.id), &pv.q));
        }
    }
    for n in &case.water.nodes {
        cols.push((format!("wCT[{}]", n.id), &n.demand));
    }
    for irr in &case.water.irrigation {
        cols.push((format!("fD[{}]", irr.id), &irr.demand));
    }
    Schedule {
        rows: (0..case.periods())
            .map(|t| {
                cols.iter()
                    .map(|(_, v)| v.get(t).copied().unwrap_or(f64::NAN))
                    .collect()
            })
            .collect(),
        columns: cols.into_iter().map(|(n, _)| n).collect(),
    }
}

/// Per-period dispatch table.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Schedule {
    pub columns: Vec<String>,
    /// `[period][column]`.
    pub rows: Vec<Vec<f64>>,
}

impl Schedule {
    /// Empty when `x` is.
    pub fn new(case: &NexusCase, sys: &ConstraintSystem, x: &[f64]) -> Self {
        if x.is_empty() {
            return Schedule::default();
        }
        let l = &sys.layout;
        let e = &case.electric;
        let w = &case.water;
        let mut cols: Vec<(String, Vec<f64>)> = Vec::new();
        let pick = |ids: &[usize]| ids.iter().map(|&v| x[v]).collect::<Vec<f64>>();

        cols.push(("price".into(), case.prices.clone()));
        let mut gens = vec![e.root];
        gens.extend(e.generator_buses());
        for b in gens {
            if let Some(ids) = l.gen_p.get(b).filter(|v| !v.is_empty()) {
                cols.push((format!("PG[{}]", e.buses[b].id), pick(ids)));
            }
        }
        for (k, u) in case.bess.iter().enumerate() {
            if let Some(ids) = l.bess_p.get(k) {
                cols.push((format!("PES[{}]", u.id), pick(ids)));
            }
        }
        for (k, p) in w.pumps.iter().enumerate() {
            if let Some(ids) = l.pump_power.get(k) {
                cols.push((format!("PPump[{}]", p.id), pick(ids)));
            }
            if let Some(ids) = l.pump_status.get(k) {
                cols.push((format!("alpha[{}]", p.id), pick(ids)));
            }
        }
        for (k, tk) in w.tanks.iter().enumerate() {
            if let Some(ids) = l.tank_level.get(k) {
                cols.push((format!("S[{}]", tk.id), pick(ids)));
            }
        }
        for (k, irr) in w.irrigation.iter().enumerate() {
            match l.irrigation.get(k).filter(|v| !v.is_empty()) {
                Some(ids) => cols.push((format!("irr[{}]", irr.id), pick(ids))),
                None => cols.push((
                    format!("irr[{}]", irr.id),
                    irr.baseline.iter().map(|&on| if on { 1.0 } else { 0.0 }).collect(),
                )),
            }
        }

        let periods = case.periods();
        let rows = (0..periods)
            .map(|t| {
                cols.iter()
                    .map(|(_, v)| v.get(t).copied().unwrap_or(f64::NAN))
                    .collect()
            })
            .collect();
        Schedule {
            columns: cols.into_iter().map(|(n, _)| n).collect(),
            rows,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t");
        for c in &self.columns {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        for (t, row) in self.rows.iter().enumerate() {
            write!(s, "{t}").unwrap();
            for v in row {
                write!(s, ",{v}").unwrap();
            }
            s.push('\n');
        }
        s
    }
}

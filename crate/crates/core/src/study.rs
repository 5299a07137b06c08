//! End-to-end pipelines: solve and verify, irrigation comparison,
//! independent-vs-joint comparison, PV hosting sweep and hull checks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::builder::{self, BuildError, ElectricStage};
use crate::geometry::{random_spec, verify_hull, ContainmentReport, GeometryError, HullCase, VerifyOptions};
use crate::model::NexusCase;
use crate::solver::{branch_and_bound, BnbOptions, Solution, SolveStatus, SolverError};
use crate::system::{ConstraintSystem, SystemCounts};
use crate::verifier::{recover, ExactnessReport, RecoveryOptions, VerifyError};

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Irrigation on its baseline schedule.
    CoOpt,
    /// Dispatchable irrigation.
    Dsm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyOptions {
    pub bnb: BnbOptions,
    /// Exactness threshold on nonconvex residuals.
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            bnb: BnbOptions::default(),
            epsilon: 1e-5,
            seed: 0,
        }
    }
}

/// Branch-and-bound summary without the point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveSummary {
    pub status: SolveStatus,
    pub objective: f64,
    pub bound: f64,
    pub gap: f64,
    pub nodes: usize,
}

impl SolveSummary {
    fn of(s: &Solution) -> Self {
        SolveSummary {
            status: s.status,
            objective: s.objective,
            bound: s.bound,
            gap: s.gap,
            nodes: s.nodes,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveOutcome {
    pub model: String,
    pub variant: Variant,
    pub counts: SystemCounts,
    pub solver: SolveSummary,
    /// Objective of the recovered point.
    pub objective: f64,
    /// Gap of the recovered point against the branch-and-bound bound.
    pub gap: f64,
    /// Residuals of the raw relaxed optimum.
    pub relaxed: Option<ExactnessReport>,
    /// Residuals of the reported point.
    pub exactness: Option<ExactnessReport>,
    /// Largest violation of the relaxation's convex constraints.
    pub feasibility: Option<f64>,
    /// Values of every variable, in system order; empty without a solution.
    pub x: Vec<f64>,
    #[serde(skip)]
    pub wall_time: f64,
    #[serde(skip)]
    pub system: ConstraintSystem,
}

impl SolveOutcome {
    pub fn is_exact(&self) -> bool {
        self.exactness.as_ref().is_some_and(|e| e.exact)
    }
}

/// Builds the relaxation, solves it, and rebuilds an exact point on the
/// optimum when the exact physics allow.
pub fn solve(case: &NexusCase, variant: Variant, opts: &StudyOptions) -> Result<SolveOutcome, StudyError> {
    let (relaxed, exact) = match variant {
        Variant::CoOpt => (builder::build_micp(case)?, builder::build_minlp(case)?),
        Variant::Dsm => (builder::build_dsm(case)?, builder::build_dsm_minlp(case)?),
    };
    let sol = branch_and_bound(&relaxed, &opts.bnb)?;
    let mut out = SolveOutcome {
        model: relaxed.name.clone(),
        variant,
        counts: relaxed.counts(),
        solver: SolveSummary::of(&sol),
        objective: sol.objective,
        gap: sol.gap,
        relaxed: None,
        exactness: None,
        feasibility: None,
        x: Vec::new(),
        wall_time: sol.wall_time,
        system: ConstraintSystem::default(),
    };
    if sol.status.has_solution() {
        let rec = recover(
            case,
            &relaxed,
            &exact,
            &sol.x,
            &RecoveryOptions {
                epsilon: opts.epsilon,
                ..Default::default()
            },
        )?;
        out.objective = rec.objective;
        out.gap = Solution::relative_gap(rec.objective, sol.bound);
        out.relaxed = Some(rec.before);
        out.exactness = Some(rec.after);
        out.feasibility = Some(rec.feasibility);
        out.x = rec.x;
    }
    out.system = relaxed;
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct DsmComparison {
    pub co_opt: SolveSummary,
    pub dsm: SolveSummary,
    pub co_opt_cost: f64,
    pub dsm_cost: f64,
    pub saving: f64,
    pub relative_saving: f64,
    pub irrigation_share: f64,
    #[serde(skip)]
    pub outcomes: (SolveOutcome, SolveOutcome),
}

pub fn dsm_compare(case: &NexusCase, opts: &StudyOptions) -> Result<DsmComparison, StudyError> {
    let base = solve(case, Variant::CoOpt, opts)?;
    let dsm = solve(case, Variant::Dsm, opts)?;
    let saving = base.objective - dsm.objective;
    Ok(DsmComparison {
        co_opt: base.solver.clone(),
        dsm: dsm.solver.clone(),
        co_opt_cost: base.objective,
        dsm_cost: dsm.objective,
        saving,
        relative_saving: saving / base.objective.abs().max(1.0),
        irrigation_share: irrigation_share(case),
        outcomes: (base, dsm),
    })
}

/// Irrigation volume over total water withdrawals across the horizon.
pub fn irrigation_share(case: &NexusCase) -> f64 {
    let w = &case.water;
    let irrigation: f64 = w.irrigation.iter().map(|i| i.rate * i.hours_on as f64).sum();
    let demand: f64 = w.nodes.iter().flat_map(|n| n.demand.iter()).sum::<f64>()
        + w.irrigation.iter().flat_map(|i| i.demand.iter()).sum::<f64>();
    let total = irrigation + demand;
    if total > 0.0 {
        irrigation / total
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IndependentOutcome {
    /// Pump scheduling on the water side alone.
    pub stage1: SolveSummary,
    /// Pumped energy, p.u.·h.
    pub pump_energy: f64,
    /// `[pump][period]`, p.u.
    pub pump_power: Vec<Vec<f64>>,
    /// Feeder dispatch with the pump schedule fixed.
    pub stage2: Option<SolveSummary>,
    pub cost: f64,
}

/// Water utility schedules pumps for least energy; the feeder is then
/// dispatched around that schedule.
pub fn independent(case: &NexusCase, opts: &StudyOptions) -> Result<IndependentOutcome, StudyError> {
    let (stage1, stage2) = builder::build_independent(case)?;
    let s1 = branch_and_bound(&stage1, &opts.bnb)?;
    let mut out = IndependentOutcome {
        stage1: SolveSummary::of(&s1),
        pump_energy: s1.objective,
        pump_power: Vec::new(),
        stage2: None,
        cost: f64::INFINITY,
    };
    if !s1.status.has_solution() {
        return Ok(out);
    }
    out.pump_power = pump_schedule(&stage1, &s1.x);
    let sys = stage2.build(&out.pump_power)?;
    let s2 = branch_and_bound(&sys, &opts.bnb)?;
    out.cost = s2.objective;
    out.stage2 = Some(SolveSummary::of(&s2));
    Ok(out)
}

fn pump_schedule(sys: &ConstraintSystem, x: &[f64]) -> Vec<Vec<f64>> {
    sys.layout
        .pump_power
        .iter()
        .map(|row| row.iter().map(|&v| x[v].max(0.0)).collect())
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub independent: IndependentOutcome,
    pub co_opt: SolveSummary,
    pub co_opt_cost: f64,
    pub saving: f64,
    pub relative_saving: f64,
}

pub fn compare(case: &NexusCase, opts: &StudyOptions) -> Result<Comparison, StudyError> {
    let ind = independent(case, opts)?;
    let co = solve(case, Variant::CoOpt, opts)?;
    let saving = ind.cost - co.objective;
    Ok(Comparison {
        co_opt: co.solver.clone(),
        co_opt_cost: co.objective,
        saving,
        relative_saving: saving / co.objective.abs().max(1.0),
        independent: ind,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Probe {
    pub multiplier: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HostingCap {
    /// Largest PV multiplier found feasible.
    pub multiplier: f64,
    /// Smallest multiplier found infeasible; absent if none was.
    pub first_infeasible: Option<f64>,
    /// PV energy over load energy at the cap.
    pub penetration: f64,
    pub probes: Vec<Probe>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PenetrationReport {
    pub base_penetration: f64,
    pub resolution: f64,
    pub max_multiplier: f64,
    pub independent: HostingCap,
    pub co_optimized: HostingCap,
    /// Co-optimized cap over independent cap.
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    /// Absolute resolution on the PV multiplier.
    pub resolution: f64,
    /// The search stops doubling here.
    pub max_multiplier: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            resolution: 1e-3,
            max_multiplier: 16.0,
        }
    }
}

/// Bisects the largest PV multiplier for which each scheme stays feasible.
pub fn penetration_sweep(
    case: &NexusCase,
    opts: &StudyOptions,
    sweep: &SweepOptions,
) -> Result<PenetrationReport, StudyError> {
    let mut bnb = opts.bnb;
    bnb.feasibility_only = true;
    let base = case.pv_penetration();

    let joint = |m: f64| -> Result<bool, StudyError> {
        let sys = builder::build_micp(&case.with_pv_scale(m))?;
        Ok(branch_and_bound(&sys, &bnb)?.status.has_solution())
    };
    let co = bisect(joint, sweep)?;

    // The water-side schedule does not depend on PV.
    let (stage1, _) = builder::build_independent(case)?;
    let s1 = branch_and_bound(&stage1, &opts.bnb)?;
    let ind = if s1.status.has_solution() {
        let power = pump_schedule(&stage1, &s1.x);
        let feeder = |m: f64| -> Result<bool, StudyError> {
            let sys = ElectricStage::new(&case.with_pv_scale(m)).build(&power)?;
            Ok(branch_and_bound(&sys, &bnb)?.status.has_solution())
        };
        bisect(feeder, sweep)?
    } else {
        (0.0, Some(0.0), vec![])
    };
    let cap = |(m, inf, probes): (f64, Option<f64>, Vec<Probe>)| HostingCap {
        multiplier: m,
        first_infeasible: inf,
        penetration: m * base,
        probes,
    };
    let (co, ind) = (cap(co), cap(ind));
    let ratio = if ind.multiplier > 0.0 {
        co.multiplier / ind.multiplier
    } else {
        f64::INFINITY
    };
    Ok(PenetrationReport {
        base_penetration: base,
        resolution: sweep.resolution,
        max_multiplier: sweep.max_multiplier,
        independent: ind,
        co_optimized: co,
        ratio,
    })
}

type Bracket = (f64, Option<f64>, Vec<Probe>);

fn bisect(
    mut feasible: impl FnMut(f64) -> Result<bool, StudyError>,
    sweep: &SweepOptions,
) -> Result<Bracket, StudyError> {
    let mut probes = Vec::new();
    let mut check = |m: f64, probes: &mut Vec<Probe>| -> Result<bool, StudyError> {
        let ok = feasible(m)?;
        probes.push(Probe {
            multiplier: m,
            feasible: ok,
        });
        Ok(ok)
    };
    if !check(0.0, &mut probes)? {
        return Ok((0.0, Some(0.0), probes));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    loop {
        if !check(hi, &mut probes)? {
            break;
        }
        lo = hi;
        if hi >= sweep.max_multiplier {
            return Ok((lo, None, probes));
        }
        hi = (hi * 2.0).min(sweep.max_multiplier);
    }
    while hi - lo > sweep.resolution {
        let mid = 0.5 * (lo + hi);
        if check(mid, &mut probes)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo, Some(hi), probes))
}

#[derive(Debug, Clone, Serialize)]
pub struct SpecCheck {
    pub label: String,
    pub case: Option<HullCase>,
    pub report: ContainmentReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct HullVerifyReport {
    pub samples: usize,
    pub seed: u64,
    pub specs: Vec<SpecCheck>,
    pub total_violations: usize,
    pub contained: bool,
}

/// Containment check over every hull the case's relaxation uses plus
/// `random` specs spread over the four coefficient cases.
pub fn hull_verify(case: &NexusCase, random: usize, opts: &VerifyOptions) -> Result<HullVerifyReport, StudyError> {
    let mut specs: Vec<(String, crate::geometry::HullSpec)> = builder::hull_specs(case);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let cases = [HullCase::One, HullCase::Two, HullCase::Three, HullCase::Four];
    for k in 0..random {
        let c = cases[k % 4];
        specs.push((format!("random {k} ({c:?})"), random_spec(c, &mut rng)));
    }
    let mut checks = Vec::with_capacity(specs.len());
    for (i, (label, spec)) in specs.into_iter().enumerate() {
        let o = VerifyOptions {
            seed: opts.seed.wrapping_add(i as u64),
            ..*opts
        };
        let report = verify_hull(&spec, &o)?;
        let case = crate::geometry::hull_cut(&spec)?.map(|c| c.case);
        checks.push(SpecCheck { label, case, report });
    }
    let total: usize = checks.iter().map(|c| c.report.violations).sum();
    Ok(HullVerifyReport {
        samples: opts.samples,
        seed: opts.seed,
        specs: checks,
        total_violations: total,
        contained: total == 0,
    })
}

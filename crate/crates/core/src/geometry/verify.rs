//! Monte-Carlo containment check of the nonconvex set in its relaxation, and
//! tightness probes by maximizing random directions over the relaxation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::hull::{hull_constraints, HullBlock, HullCase, HullSpec};
use super::GeometryError;
use crate::solver::{solve_cone, to_cone, ConeOptions};
use crate::system::{ConstraintSystem, LinExpr, Sense};

/// Stand-in for an infinite x4 bound when x3 may reach zero.
pub const X4_CAP: f64 = 1e6;

const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyOptions {
    pub samples: usize,
    pub seed: u64,
    pub probes: usize,
    /// Scaled violation above which a sample counts as outside.
    pub tolerance: f64,
    /// Relative residual of the cone equality for a probe to count as tight.
    pub tight_tolerance: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            samples: 1_000_000,
            seed: 0,
            probes: 64,
            tolerance: 1e-9,
            tight_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub point: [f64; 4],
    pub constraint: String,
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TightnessReport {
    pub probes: usize,
    pub solved: usize,
    pub tight: usize,
    pub fraction: f64,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContainmentReport {
    pub spec: HullSpec,
    pub rows: Vec<String>,
    pub samples: usize,
    /// Draws discarded because they fell outside the box or the disc.
    pub rejected: usize,
    pub violations: usize,
    pub max_violation: f64,
    pub worst: Option<Violation>,
    pub tightness: TightnessReport,
}

impl ContainmentReport {
    pub fn contained(&self) -> bool {
        self.violations == 0
    }
}

/// Samples the nonconvex set of `spec` and checks each point against its
/// pruned relaxation.
pub fn verify_hull(spec: &HullSpec, opts: &VerifyOptions) -> Result<ContainmentReport, GeometryError> {
    let block = hull_constraints(spec)?;
    Ok(verify_block(&block, opts))
}

/// Same as `verify_hull` for an arbitrary block; the block's spec defines
/// the nonconvex set that is sampled.
pub fn verify_block(block: &HullBlock, opts: &VerifyOptions) -> ContainmentReport {
    let spec = block.spec;
    let chunks = opts.samples.div_ceil(CHUNK);
    let partial: Vec<Partial> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let n = CHUNK.min(opts.samples - k * CHUNK);
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(k as u64 + 1);
            check_chunk(block, &spec, n, &mut rng, opts.tolerance)
        })
        .collect();
    let mut total = Partial::default();
    for p in partial {
        total.merge(p);
    }
    ContainmentReport {
        spec,
        rows: block.rows.iter().map(|r| r.label.to_string()).collect(),
        samples: total.accepted,
        rejected: total.rejected,
        violations: total.violations,
        max_violation: total.max_violation,
        worst: total.worst,
        tightness: probe(block, opts),
    }
}

#[derive(Default)]
struct Partial {
    accepted: usize,
    rejected: usize,
    violations: usize,
    max_violation: f64,
    worst: Option<Violation>,
}

impl Partial {
    fn merge(&mut self, o: Partial) {
        self.accepted += o.accepted;
        self.rejected += o.rejected;
        self.violations += o.violations;
        if o.max_violation > self.max_violation {
            self.max_violation = o.max_violation;
            self.worst = o.worst;
        }
    }
}

fn x4_upper(spec: &HullSpec) -> f64 {
    let reach = if spec.x3_min > 0.0 {
        spec.ac() / spec.x3_min
    } else {
        X4_CAP
    };
    spec.x4_max.min(reach).max(spec.x4_min)
}

fn x3_upper(spec: &HullSpec) -> f64 {
    let reach = if spec.x4_min > 0.0 {
        spec.ac() / spec.x4_min
    } else {
        spec.x3_max
    };
    spec.x3_max.min(reach).max(spec.x3_min)
}

/// Draws alternate between two schemes: a point of the disc with x3 uniform
/// and x4 solved from the cone equality, and (x3, x4) uniform with a point
/// of the matching ellipse. The second reaches the corners near x3·x4 = ac.
fn draw(spec: &HullSpec, rng: &mut ChaCha8Rng, second: bool) -> Option<[f64; 4]> {
    let r = spec.c.sqrt();
    let x3_hi = x3_upper(spec);
    let x4_hi = x4_upper(spec);
    let x3 = if x3_hi > spec.x3_min {
        rng.gen_range(spec.x3_min..=x3_hi)
    } else {
        spec.x3_min
    };
    if !second {
        let rad = r * rng.gen::<f64>().sqrt();
        let th = rng.gen_range(0.0..std::f64::consts::TAU);
        let (x1, x2) = (rad * th.cos(), rad * th.sin());
        let q = spec.a * x1 * x1 + spec.b * x2 * x2;
        if x3 <= 0.0 {
            return None;
        }
        let x4 = q / x3;
        if x4 < spec.x4_min || x4 > spec.x4_max {
            return None;
        }
        return Some([x1, x2, x3, x4]);
    }
    let x4 = if x4_hi > spec.x4_min {
        rng.gen_range(spec.x4_min..=x4_hi)
    } else {
        spec.x4_min
    };
    let q = x3 * x4;
    if q > spec.ac() {
        return None;
    }
    let th = rng.gen_range(0.0..std::f64::consts::TAU);
    let (x1, x2) = if spec.b > 0.0 {
        ((q / spec.a).sqrt() * th.cos(), (q / spec.b).sqrt() * th.sin())
    } else if q == 0.0 {
        (0.0, r * rng.gen_range(-1.0..=1.0))
    } else {
        // b = 0: x2 is free within the disc
        let x1 = (q / spec.a).sqrt() * th.cos().signum();
        let room = (spec.c - x1 * x1).max(0.0).sqrt();
        (x1, room * rng.gen_range(-1.0..=1.0))
    };
    if x1 * x1 + x2 * x2 > spec.c {
        return None;
    }
    Some([x1, x2, x3, x4])
}

fn check_chunk(block: &HullBlock, spec: &HullSpec, n: usize, rng: &mut ChaCha8Rng, tol: f64) -> Partial {
    let mut out = Partial::default();
    let mut attempts = 0usize;
    while out.accepted < n && attempts < 1000 * n {
        attempts += 1;
        let Some(x) = draw(spec, rng, attempts.is_multiple_of(2)) else {
            out.rejected += 1;
            continue;
        };
        out.accepted += 1;
        let mut worst: Option<(&str, f64)> = None;
        let cone = block.cone_slack(&x) / (x[2] * x[3]).abs().max(1.0);
        if cone > tol {
            worst = Some(("cone", cone));
        }
        for row in &block.rows {
            let v = row.slack(&x) / row.scale(&x);
            if v > tol && worst.is_none_or(|w| v > w.1) {
                worst = Some((row.label, v));
            }
        }
        let bx = block.box_violation(&x);
        if bx > tol && worst.is_none_or(|w| bx > w.1) {
            worst = Some(("box", bx));
        }
        if let Some((label, v)) = worst {
            out.violations += 1;
            if v > out.max_violation {
                out.max_violation = v;
                out.worst = Some(Violation {
                    point: x,
                    constraint: label.to_string(),
                    amount: v,
                });
            }
        }
    }
    out
}

/// Maximizes random directions over the relaxation and measures how far
/// each maximizer is from the cone equality.
fn probe(block: &HullBlock, opts: &VerifyOptions) -> TightnessReport {
    let spec = block.spec;
    let results: Vec<Option<f64>> = (0..opts.probes)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(u64::MAX - k as u64);
            let mut d = [0.0; 4];
            let mut norm = 0.0;
            while norm < 1e-6 {
                for di in d.iter_mut() {
                    *di = rng.gen_range(-1.0..=1.0);
                }
                norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            }
            let sys = relaxation_system(block, &d);
            let prog = to_cone(&sys).ok()?;
            let res = solve_cone(&prog, &ConeOptions::default());
            if !res.status.has_solution() {
                return None;
            }
            let x = &res.x;
            let prod = x[2] * x[3];
            let q = spec.a * x[0] * x[0] + spec.b * x[1] * x[1];
            Some((prod - q).abs() / prod.abs().max(1.0))
        })
        .collect();
    let solved: Vec<f64> = results.into_iter().flatten().collect();
    let tight = solved.iter().filter(|&&r| r <= opts.tight_tolerance).count();
    TightnessReport {
        probes: opts.probes,
        solved: solved.len(),
        tight,
        fraction: if opts.probes == 0 {
            1.0
        } else {
            tight as f64 / opts.probes as f64
        },
        max_residual: solved.iter().copied().fold(0.0, f64::max),
    }
}

fn relaxation_system(block: &HullBlock, dir: &[f64; 4]) -> ConstraintSystem {
    let spec = block.spec;
    let r = spec.c.sqrt();
    let mut sys = ConstraintSystem::new("hull-probe");
    let x = [
        sys.continuous("x1", -r, r),
        sys.continuous("x2", -r, r),
        sys.continuous("x3", spec.x3_min, spec.x3_max),
        sys.continuous("x4", spec.x4_min, spec.x4_max.min(X4_CAP)),
    ];
    sys.add_cone(
        "cone",
        vec![(x[0], block.cone[0]), (x[1], block.cone[1])],
        LinExpr::var(x[2]),
        LinExpr::var(x[3]),
    );
    for row in &block.rows {
        let mut lin = LinExpr::constant(-row.rhs);
        for i in 0..4 {
            lin.push(x[i], row.lin[i]);
        }
        if row.is_linear() {
            sys.add_linear(row.label, lin, Sense::Le);
        } else {
            let quad = (0..4)
                .filter(|&i| row.quad[i] != 0.0)
                .map(|i| (x[i], row.quad[i]))
                .collect();
            sys.add_quadratic(row.label, quad, lin);
        }
    }
    for i in 0..4 {
        sys.objective.linear.push(x[i], -dir[i]);
    }
    sys
}

/// A random spec whose cut falls in `case`: draws a box, then places a·c
/// inside that case's interval.
pub fn random_spec<R: Rng>(case: HullCase, rng: &mut R) -> HullSpec {
    loop {
        let a: f64 = rng.gen_range(0.1..3.0);
        let b = a * rng.gen_range(0.0..=1.0);
        let x3_min: f64 = rng.gen_range(0.2..1.5);
        let x3_max = x3_min + rng.gen_range(0.05..1.0);
        let x4_min: f64 = rng.gen_range(0.0..1.0);
        let x4_max = x4_min + rng.gen_range(0.1..3.0);
        let hi_lo = x3_max * x4_min;
        let lo_hi = x3_min * x4_max;
        let (lo, hi) = match case {
            HullCase::One => (hi_lo, lo_hi),
            HullCase::Two => (lo_hi, hi_lo),
            HullCase::Three => (hi_lo.max(lo_hi), x3_max * x4_max),
            HullCase::Four => (x3_min * x4_min, hi_lo.min(lo_hi)),
        };
        if !(hi - lo > 1e-3 * hi.max(1e-3)) {
            continue;
        }
        // Stay off the interval ends so the case is unambiguous.
        let ac = lo + (hi - lo) * rng.gen_range(0.02..0.98);
        if ac <= 0.0 {
            continue;
        }
        return HullSpec {
            a,
            b,
            c: ac / a,
            x3_min,
            x3_max,
            x4_min,
            x4_max,
        };
    }
}

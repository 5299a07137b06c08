use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use wen_core::geometry::VerifyOptions;
use wen_core::report::{envelope, profiles, to_json, ExactnessSummary, Schedule, SolutionReport};
use wen_core::solver::{BnbOptions, SolveStatus};
use wen_core::study::{self, StudyOptions, SweepOptions, Variant};
use wen_core::{load_case, NexusCase};

/// Exit codes.
const OK: u8 = 0;
const INPUT: u8 = 1;
const INEXACT: u8 = 2;
const INFEASIBLE: u8 = 3;
const RESOURCE: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "wen", version, about = "Water-energy nexus co-optimization studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Co-optimize the feeder and water network and check exactness.
    Solve(Common),
    /// Compare fixed and dispatchable irrigation.
    Dsm(Common),
    /// Compare the two-stage independent schedule with co-optimization.
    Compare(Common),
    /// Bisect the PV hosting cap of both schemes.
    PenetrationSweep {
        #[command(flatten)]
        common: Common,
        /// Absolute resolution on the PV multiplier.
        #[arg(long, default_value_t = 1e-3)]
        resolution: f64,
        #[arg(long, default_value_t = 16.0)]
        max_multiplier: f64,
    },
    /// Sample-check every hull relaxation of the case plus random ones.
    HullVerify {
        #[command(flatten)]
        common: Common,
        /// Samples per hull.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        /// Randomized hulls on top of the case's own.
        #[arg(long, default_value_t = 100)]
        random: usize,
    },
    /// Write every input profile of the case to profiles.csv.
    Profiles(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Case file; the bundled 13-bus/8-node case when omitted.
    #[arg(long)]
    case: Option<PathBuf>,
    /// Positional alternative to --case.
    #[arg(conflicts_with = "case")]
    case_file: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Relative branch-and-bound gap.
    #[arg(long, default_value_t = 1e-4)]
    gap: f64,
    /// Seconds per branch-and-bound run.
    #[arg(long, default_value_t = 600.0)]
    time_limit: f64,
    #[arg(long, default_value_t = 100_000)]
    node_limit: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Exactness threshold on nonconvex residuals.
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
    /// Report formats to write.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Format::Json, Format::Csv])]
    format: Vec<Format>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

impl Common {
    fn load(&self) -> anyhow::Result<NexusCase> {
        match self.case.as_ref().or(self.case_file.as_ref()) {
            Some(p) => load_case(p).with_context(|| format!("loading {}", p.display())),
            None => Ok(NexusCase::bundled()),
        }
    }

    fn study(&self) -> StudyOptions {
        StudyOptions {
            bnb: BnbOptions {
                gap: self.gap,
                time_limit: self.time_limit,
                node_limit: self.node_limit,
                workers: self.workers.max(1),
                ..Default::default()
            },
            epsilon: self.epsilon,
            seed: self.seed,
        }
    }

    fn wants(&self, f: Format) -> bool {
        self.format.contains(&f)
    }

    fn out_dir(&self) -> anyhow::Result<&Path> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }

    fn write(&self, name: &str, contents: &str) -> anyhow::Result<()> {
        let path = self.out_dir()?.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }

    fn write_json<T: Serialize>(&self, name: &str, kind: &str, case: &NexusCase, body: &T) -> anyhow::Result<()> {
        if self.wants(Format::Json) {
            self.write(name, &to_json(&envelope(kind, case, body)))?;
        }
        Ok(())
    }
}

fn status_code(status: SolveStatus) -> u8 {
    match status {
        SolveStatus::Optimal | SolveStatus::Feasible => OK,
        SolveStatus::Infeasible => INFEASIBLE,
        SolveStatus::TimeLimit | SolveStatus::NodeLimit | SolveStatus::NumericalFailure => RESOURCE,
    }
}

fn worst(codes: &[u8]) -> u8 {
    // Infeasible and resource limits outrank a failed check.
    let rank = |c: u8| match c {
        INFEASIBLE => 3,
        RESOURCE => 2,
        INEXACT => 1,
        _ => 0,
    };
    codes.iter().copied().max_by_key(|&c| rank(c)).unwrap_or(OK)
}

fn solve(c: &Common) -> anyhow::Result<u8> {
    let case = c.load()?;
    let out = study::solve(&case, Variant::CoOpt, &c.study())?;
    let report = SolutionReport::new(&case, &out);
    c.write_json("solution.json", "solution", &case, &report)?;
    if let Some(ex) = ExactnessSummary::new(&case, &out) {
        c.write_json("exactness.json", "exactness", &case, &ex)?;
        if c.wants(Format::Csv) {
            c.write("exactness.csv", &ex.to_csv())?;
        }
    }
    if c.wants(Format::Csv) && !report.schedule.rows.is_empty() {
        c.write("schedule.csv", &report.schedule.to_csv())?;
    }
    println!("status {:?}", out.solver.status);
    if out.solver.status.has_solution() {
        println!("objective {:.6}", out.objective);
        println!("gap {:.3e}", out.gap);
        if let Some(e) = &out.exactness {
            println!(
                "max residual {:.3e} ({})",
                e.max_residual,
                if e.exact { "exact" } else { "inexact" }
            );
        }
    }
    eprintln!("wall time {:.3} s", out.wall_time);
    let code = status_code(out.solver.status);
    Ok(if code == OK && !out.is_exact() { INEXACT } else { code })
}

fn dsm(c: &Common) -> anyhow::Result<u8> {
    let case = c.load()?;
    let cmp = study::dsm_compare(&case, &c.study())?;
    c.write_json("dsm.json", "dsm", &case, &cmp)?;
    if c.wants(Format::Csv) {
        for o in [&cmp.outcomes.0, &cmp.outcomes.1] {
            let s = Schedule::new(&case, &o.system, &o.x);
            if !s.rows.is_empty() {
                c.write(&format!("schedule-{}.csv", o.model), &s.to_csv())?;
            }
        }
    }
    println!("{:<10} {:>14}", "scheme", "cost");
    println!("{:<10} {:>14.4}", "co-opt", cmp.co_opt_cost);
    println!("{:<10} {:>14.4}", "dsm", cmp.dsm_cost);
    println!("saving {:.4} ({:.3}%)", cmp.saving, 100.0 * cmp.relative_saving);
    let mut code = worst(&[status_code(cmp.co_opt.status), status_code(cmp.dsm.status)]);
    if code == OK && cmp.dsm_cost > cmp.co_opt_cost * (1.0 + 1e-4) + 1e-9 {
        eprintln!("dispatchable irrigation cost exceeds the fixed schedule");
        code = INEXACT;
    }
    Ok(code)
}

fn compare(c: &Common) -> anyhow::Result<u8> {
    let case = c.load()?;
    let cmp = study::compare(&case, &c.study())?;
    c.write_json("compare.json", "compare", &case, &cmp)?;
    if c.wants(Format::Csv) {
        let cost = |v: f64| if v.is_finite() { v.to_string() } else { String::new() };
        c.write(
            "compare.csv",
            &format!(
                "scheme,cost\nindependent,{}\nco-opt,{}\n",
                cost(cmp.independent.cost),
                cost(cmp.co_opt_cost)
            ),
        )?;
    }
    println!("{:<12} {:>14}", "scheme", "cost");
    println!("{:<12} {:>14.4}", "independent", cmp.independent.cost);
    println!("{:<12} {:>14.4}", "co-opt", cmp.co_opt_cost);
    println!("saving {:.4} ({:.3}%)", cmp.saving, 100.0 * cmp.relative_saving);
    let mut codes = vec![
        status_code(cmp.independent.stage1.status),
        status_code(cmp.co_opt.status),
    ];
    if let Some(s2) = &cmp.independent.stage2 {
        codes.push(status_code(s2.status));
    }
    Ok(worst(&codes))
}

fn penetration(c: &Common, resolution: f64, max_multiplier: f64) -> anyhow::Result<u8> {
    anyhow::ensure!(resolution > 0.0, "--resolution must be positive");
    anyhow::ensure!(max_multiplier >= 1.0, "--max-multiplier must be at least 1");
    let case = c.load()?;
    let r = study::penetration_sweep(
        &case,
        &c.study(),
        &SweepOptions {
            resolution,
            max_multiplier,
        },
    )?;
    c.write_json("penetration.json", "penetration-sweep", &case, &r)?;
    if c.wants(Format::Csv) {
        let mut s = String::from("scheme,multiplier,feasible\n");
        for (name, cap) in [("independent", &r.independent), ("co-opt", &r.co_optimized)] {
            for p in &cap.probes {
                s.push_str(&format!("{name},{},{}\n", p.multiplier, p.feasible));
            }
        }
        c.write("penetration.csv", &s)?;
    }
    println!("base penetration {:.4}", r.base_penetration);
    for (name, cap) in [("independent", &r.independent), ("co-opt", &r.co_optimized)] {
        println!(
            "{name:<12} multiplier {:.4} penetration {:.4}",
            cap.multiplier, cap.penetration
        );
    }
    println!("ratio {:.4}", r.ratio);
    Ok(OK)
}

fn hull_verify(c: &Common, samples: usize, random: usize) -> anyhow::Result<u8> {
    let case = c.load()?;
    let opts = VerifyOptions {
        samples,
        seed: c.seed,
        ..Default::default()
    };
    let r = study::hull_verify(&case, random, &opts)?;
    c.write_json("hull-verify.json", "hull-verify", &case, &r)?;
    if c.wants(Format::Csv) {
        let mut s = String::from("label,case,samples,violations,max_violation,tight_fraction\n");
        for k in &r.specs {
            s.push_str(&format!(
                "\"{}\",{},{},{},{},{}\n",
                k.label,
                k.case.map(|c| format!("{c:?}")).unwrap_or_default(),
                k.report.samples,
                k.report.violations,
                k.report.max_violation,
                k.report.tightness.fraction
            ));
        }
        c.write("hull-verify.csv", &s)?;
    }
    println!("{} hulls, {} samples each", r.specs.len(), r.samples);
    println!("violations {}", r.total_violations);
    Ok(if r.contained { OK } else { INEXACT })
}

fn export_profiles(c: &Common) -> anyhow::Result<u8> {
    let case = c.load()?;
    let p = profiles(&case);
    c.write("profiles.csv", &p.to_csv())?;
    println!("{} profiles, {} periods", p.columns.len(), p.rows.len());
    Ok(OK)
}

fn run(cli: &Cli) -> anyhow::Result<u8> {
    match &cli.command {
        Command::Solve(c) => solve(c),
        Command::Dsm(c) => dsm(c),
        Command::Compare(c) => compare(c),
        Command::PenetrationSweep {
            common,
            resolution,
            max_multiplier,
        } => penetration(common, *resolution, *max_multiplier),
        Command::HullVerify {
            common,
            samples,
            random,
        } => hull_verify(common, *samples, *random),
        Command::Profiles(c) => export_profiles(c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { INPUT } else { OK });
        }
    };
    let start = Instant::now();
    let code = match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<study::StudyError>() {
                Some(study::StudyError::Solver(_) | study::StudyError::Verify(_)) => RESOURCE,
                _ => INPUT,
            }
        }
    };
    eprintln!("done in {:.3} s", start.elapsed().as_secs_f64());
    ExitCode::from(code)
}

use std::fmt;

use serde::Serialize;

use super::case::{NexusCase, TankOwner};
use super::topology::{RadialTopology, TopologyError};

/// Outcome of `validate_case`. `violations` make a case unusable; `flags`
/// are informational.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub flags: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

struct Checker {
    report: ValidationReport,
    periods: usize,
}

impl Checker {
    fn require(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.report.violations.push(msg());
        }
    }

    fn profile(&mut self, what: &str, v: &[f64]) {
        let t = self.periods;
        self.require(v.len() == t, || {
            format!("{what}: profile has {} values, expected {t}", v.len())
        });
        self.require(v.iter().all(|x| x.is_finite()), || {
            format!("{what}: profile contains non-finite values")
        });
    }
}

pub fn validate_case(case: &NexusCase) -> ValidationReport {
    let mut c = Checker {
        report: ValidationReport::default(),
        periods: case.time.periods,
    };
    c.require(case.time.periods > 0, || "time grid has no periods".into());
    c.require(case.time.hours_per_period > 0.0, || {
        "period length must be positive".into()
    });
    c.profile("prices", &case.prices);
    c.require(case.prices.iter().all(|&p| p >= 0.0), || {
        "prices must be nonnegative".into()
    });

    let el = &case.electric;
    match RadialTopology::build(el) {
        Ok(_) => {}
        Err(TopologyError::LineCount { buses, lines }) => c.report.violations.push(format!(
            "electric network is not radial: {buses} buses but {lines} lines"
        )),
        Err(TopologyError::Cycle) => c.report.violations.push("electric network contains a cycle".into()),
        Err(TopologyError::Unreachable(ids)) => {
            let names: Vec<&str> = ids.iter().map(|&i| el.buses[i].id.as_str()).collect();
            c.report
                .violations
                .push(format!("buses unreachable from the root: {}", names.join(", ")))
        }
    }
    for b in &el.buses {
        c.require(b.v_min < b.v_max && b.v_min > 0.0, || {
            format!("bus {}: voltage bounds must satisfy 0 < min < max", b.id)
        });
        c.profile(&format!("bus {} active load", b.id), &b.p_load);
        c.profile(&format!("bus {} reactive load", b.id), &b.q_load);
        if let Some(pv) = &b.pv {
            c.profile(&format!("bus {} pv active", b.id), &pv.p);
            c.profile(&format!("bus {} pv reactive", b.id), &pv.q);
            c.require(pv.p.iter().all(|&p| p >= 0.0), || {
                format!("bus {}: pv output must be nonnegative", b.id)
            });
        }
        if let Some(g) = &b.generator {
            c.require(g.p_min <= g.p_max && g.q_min <= g.q_max, || {
                format!("bus {}: generator limits out of order", b.id)
            });
            c.require(g.c2 >= 0.0, || {
                format!("bus {}: quadratic cost must be nonnegative", b.id)
            });
        }
    }
    c.require(el.buses[el.root].generator.is_some(), || {
        "root bus needs a generator entry for the grid connection".into()
    });
    for l in &el.lines {
        let name = format!("line {}-{}", el.buses[l.from].id, el.buses[l.to].id);
        c.require(l.r >= 0.0 && l.x >= 0.0, || {
            format!("{name}: impedance must be nonnegative")
        });
        c.require(l.s_max > 0.0 && l.i_max > 0.0, || {
            format!("{name}: ratings must be positive")
        });
        let v_min = el.buses[l.from].v_min;
        if l.s_max * l.s_max > v_min * l.i_max {
            c.report.flags.push(format!(
                "{name}: S_max^2 exceeds V_min*I_max; general hull cut case applies"
            ));
        }
    }

    for s in &case.bess {
        c.require(s.r_batt >= 0.0 && s.r_cvt >= 0.0, || {
            format!("bess {}: loss coefficients must be nonnegative", s.id)
        });
        c.require(s.e_min <= s.e0 && s.e0 <= s.e_max, || {
            format!("bess {}: initial energy outside bounds", s.id)
        });
        c.require(s.s_max > 0.0, || {
            format!("bess {}: apparent-power cap must be positive", s.id)
        });
    }

    let w = &case.water;
    for n in &w.nodes {
        c.require(n.head_min <= n.head_max, || {
            format!("water node {}: head bounds out of order", n.id)
        });
        c.profile(&format!("water node {} demand", n.id), &n.demand);
        if let Some(src) = n.source {
            c.require(src.min <= src.max, || {
                format!("water node {}: source bounds out of order", n.id)
            });
        }
    }
    c.require(w.nodes.iter().any(|n| n.source.is_some()), || {
        "water network needs at least one source node".into()
    });
    for (k, p) in w.pipes.iter().enumerate() {
        c.require(p.resistance > 0.0, || {
            format!("pipe {}: resistance must be positive", p.id)
        });
        c.require(p.flow_min < p.flow_max, || {
            format!("pipe {}: flow bounds must satisfy min < max", p.id)
        });
        c.require(p.from != p.to, || format!("pipe {}: self loop", p.id));
        let pumps = w.pumps.iter().filter(|q| q.pipe == k).count();
        c.require(pumps <= 1, || format!("pipe {}: more than one pump", p.id));
        if pumps == 1 {
            c.require(p.flow_min == 0.0, || {
                format!("pipe {}: pump pipes must have zero minimum flow", p.id)
            });
        }
    }
    for p in &w.pumps {
        c.require(p.efficiency > 0.0 && p.efficiency <= 1.0, || {
            format!("pump {}: efficiency must lie in (0, 1]", p.id)
        });
        c.require(p.head_intercept > 0.0, || {
            format!("pump {}: shutoff head must be positive", p.id)
        });
        c.require(p.pf_ratio > 0.0, || {
            format!("pump {}: power-factor ratio must be positive", p.id)
        });
    }
    for t in &w.tanks {
        c.require(t.min <= t.initial && t.initial <= t.max, || {
            format!("tank {}: initial storage outside bounds", t.id)
        });
        c.require(t.flow_min <= t.flow_max, || {
            format!("tank {}: flow bounds out of order", t.id)
        });
    }
    for ir in &w.irrigation {
        c.require(ir.hours_on > 0 && ir.hours_on <= case.time.periods, || {
            format!("irrigation {}: on-hours must lie in 1..=periods", ir.id)
        });
        c.require(ir.rate > 0.0, || format!("irrigation {}: rate must be positive", ir.id));
        c.profile(&format!("irrigation {} demand", ir.id), &ir.demand);
        c.require(ir.baseline.iter().filter(|&&b| b).count() == ir.hours_on, || {
            format!("irrigation {}: baseline schedule must have on-hours periods", ir.id)
        });
        let owner = w.tank_at(ir.tank_node).map(|t| w.tanks[t].owner);
        c.require(owner == Some(TankOwner::Customer), || {
            format!("irrigation {}: node must hold a customer tank", ir.id)
        });
    }
    c.report
}

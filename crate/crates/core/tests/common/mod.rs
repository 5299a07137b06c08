#![allow(dead_code)]

use rand::Rng;
use serde_json::{json, Value};

use wen_core::model::case_from_str;
use wen_core::system::ConstraintSystem;
use wen_core::verifier::{distflow_solve, hydraulic_solve, HydraulicInput};
use wen_core::NexusCase;

/// Two buses and three water nodes: source n1, pump pipe n1→n2, utility
/// tank at n2, normal pipe n2→n3 to a demand node. The pump and a battery
/// sit on bus 2.
pub fn toy_json(periods: usize) -> Value {
    let prices: Vec<f64> = (0..periods)
        .map(|t| [30.0, 55.0, 20.0, 45.0, 60.0, 25.0][t % 6])
        .collect();
    let load: Vec<f64> = (0..periods).map(|t| 300.0 + 40.0 * (t % 3) as f64).collect();
    json!({
        "name": "toy",
        "time": { "periods": periods, "hours_per_period": 1.0 },
        "bases": { "s_base_mva": 1.0, "v_base_kv": 4.16 },
        "prices": { "per_mwh": prices },
        "electric": {
            "root": "1",
            "buses": [
                { "id": "1", "v_min_pu": 1.0, "v_max_pu": 1.05,
                  "generator": { "p_min_kw": 0, "p_max_kw": 3000, "q_min_kvar": -2000, "q_max_kvar": 2000 } },
                { "id": "2", "v_min_pu": 0.95, "v_max_pu": 1.05, "p_kw": load, "q_kvar": 100.0 }
            ],
            "lines": [
                { "from": "1", "to": "2", "r_ohm": 0.2, "x_ohm": 0.4, "ampacity_a": 500, "s_max_kva": 3000 }
            ]
        },
        "water": {
            "nodes": [
                { "id": "n1", "elevation_m": 0.0, "head_min_m": 0.0, "head_max_m": 0.0,
                  "source": { "min_m3s": 0.0, "max_m3s": 0.3 } },
                { "id": "n2", "elevation_m": 0.0, "head_min_m": 0.0, "head_max_m": 60.0 },
                { "id": "n3", "elevation_m": 5.0, "head_min_m": 0.0, "head_max_m": 60.0, "demand_m3s": 0.02 }
            ],
            "pipes": [
                { "id": "p12", "from": "n1", "to": "n2", "resistance": 2.0, "flow_min_m3s": 0.0, "flow_max_m3s": 0.2 },
                { "id": "p23", "from": "n2", "to": "n3", "resistance": 50.0, "flow_min_m3s": -0.1, "flow_max_m3s": 0.1 }
            ],
            "pumps": [
                { "id": "pump", "pipe": "p12", "bus": "2", "head_slope": 20.0, "head_intercept_m": 30.0,
                  "efficiency": 0.8, "pf_ratio": 2.0 }
            ],
            "tanks": [
                { "id": "t2", "node": "n2", "min_m3": 0.0, "max_m3": 400.0, "initial_m3": 200.0,
                  "owner": "utility", "flow_min_m3s": -0.1, "flow_max_m3s": 0.1 }
            ]
        },
        "bess": [
            { "id": "b2", "bus": "2", "r_batt_pu": 0.02, "r_cvt_pu": 0.01, "s_max_kva": 200,
              "e_min_kwh": 20, "e_max_kwh": 400, "e0_kwh": 200 }
        ]
    })
}

pub fn case_of(v: &Value) -> NexusCase {
    case_from_str(&v.to_string()).expect("toy case is valid")
}

pub fn toy(periods: usize) -> NexusCase {
    case_of(&toy_json(periods))
}

/// Toy with a customer tank at n3 feeding an irrigation load.
pub fn toy_irrigated(periods: usize, hours_on: usize) -> NexusCase {
    let mut v = toy_json(periods);
    v["water"]["tanks"].as_array_mut().unwrap().push(json!({
        "id": "t3", "node": "n3", "min_m3": 0.0, "max_m3": 600.0, "initial_m3": 100.0,
        "owner": "customer", "flow_min_m3s": 0.0, "flow_max_m3s": 0.1
    }));
    v["water"]["irrigation"] = json!([{
        "id": "irr", "tank_node": "n3", "rate_m3s": 0.03, "hours_on": hours_on,
        "demand_m3s": 0.005
    }]);
    case_of(&v)
}

/// A point satisfying every exact equation of `exact`, built period by
/// period from random pump statuses and battery set points with the
/// hydraulic and branch-flow solvers. `None` when the draw leaves a bound.
/// Assumes the toy topology: one pump feeding everything but the source,
/// no irrigation.
pub fn exact_point(case: &NexusCase, exact: &ConstraintSystem, rng: &mut impl Rng) -> Option<Vec<f64>> {
    let lay = &exact.layout;
    let mut x = vec![0.0; exact.num_vars()];
    let w = &case.water;
    let e = &case.electric;
    let dt = case.time.hours_per_period;
    let mut level: Vec<f64> = w.tanks.iter().map(|t| t.initial).collect();
    let mut energy: Vec<f64> = case.bess.iter().map(|b| b.e0).collect();

    for t in 0..case.periods() {
        // Tank inflows first; the tree's flows then follow from mass balance.
        let status: Vec<bool> = w.pumps.iter().map(|_| rng.gen_bool(0.6)).collect();
        let mut withdrawal: Vec<f64> = w.nodes.iter().map(|n| n.demand[t]).collect();
        let mut inflow: Vec<f64> = w.tanks.iter().map(|k| rng.gen_range(k.flow_min..=k.flow_max)).collect();
        if status.iter().any(|on| !on) {
            // Cut off from the source: the first tank covers everything else.
            let rest: f64 = withdrawal.iter().sum::<f64>() + inflow[1..].iter().sum::<f64>();
            inflow[0] = -rest;
            if inflow[0] < w.tanks[0].flow_min {
                return None;
            }
        }
        for (s, tank) in w.tanks.iter().enumerate() {
            let q = inflow[s];
            withdrawal[tank.node] += q;
            x[lay.tank_flow[s][t]] = q;
            level[s] += 3600.0 * dt * q;
            if level[s] < tank.min || level[s] > tank.max {
                return None;
            }
            x[lay.tank_level[s][t]] = level[s];
        }
        let fixed_head = w.nodes.iter().map(|n| n.source.map(|_| n.head_min)).collect();
        let head_hint = w.nodes.iter().map(|n| rng.gen_range(n.head_min..=n.head_max)).collect();
        let hs = hydraulic_solve(
            w,
            &HydraulicInput {
                status: status.clone(),
                withdrawal,
                fixed_head,
                head_hint,
            },
        )
        .ok()?;
        if hs.bound_violation > 0.0 {
            return None;
        }
        for (k, p) in w.pipes.iter().enumerate() {
            let f = hs.flow[k];
            if f < p.flow_min || f > p.flow_max {
                return None;
            }
            x[lay.flow[k][t]] = f;
        }
        for (i, n) in w.nodes.iter().enumerate() {
            x[lay.head[i][t]] = hs.head[i];
            if let Some(src) = n.source {
                // Supply equals the net flow out of the node.
                let out: f64 = w
                    .pipes
                    .iter()
                    .enumerate()
                    .map(|(k, p)| {
                        if p.from == i {
                            hs.flow[k]
                        } else if p.to == i {
                            -hs.flow[k]
                        } else {
                            0.0
                        }
                    })
                    .sum::<f64>()
                    + n.demand[t];
                if out < src.min || out > src.max {
                    return None;
                }
                x[lay.source[i][t]] = out;
            }
        }

        let mut p_inj: Vec<f64> = e.buses.iter().map(|b| -b.p_load[t]).collect();
        let mut q_inj: Vec<f64> = e.buses.iter().map(|b| -b.q_load[t]).collect();
        for (i, b) in e.buses.iter().enumerate() {
            if let Some(pv) = &b.pv {
                p_inj[i] += pv.p[t];
                q_inj[i] += pv.q[t];
            }
        }
        for (k, pump) in w.pumps.iter().enumerate() {
            let f = hs.flow[pump.pipe];
            let on = status[k];
            let gain = pump.head_gain(f);
            let power = if on {
                (pump.power_quadratic * f * f + pump.power_linear * f) / pump.efficiency
            } else {
                0.0
            };
            x[lay.pump_status[k][t]] = if on { 1.0 } else { 0.0 };
            x[lay.pump_gain[k][t]] = gain;
            x[lay.pump_power[k][t]] = power;
            p_inj[pump.bus] -= power;
            q_inj[pump.bus] -= power / pump.pf_ratio;
        }
        let mut bess_pq = Vec::new();
        for (b, u) in case.bess.iter().enumerate() {
            let r = u.s_max * rng.gen::<f64>().sqrt();
            let th = rng.gen_range(0.0..std::f64::consts::TAU);
            let (p, q) = (r * th.cos(), r * th.sin());
            x[lay.bess_p[b][t]] = p;
            x[lay.bess_q[b][t]] = q;
            p_inj[u.bus] += p;
            q_inj[u.bus] += q;
            bess_pq.push((p, q));
        }

        let root = &e.buses[e.root];
        let v_root = rng.gen_range(root.v_min..=root.v_max);
        let df = distflow_solve(e, &p_inj, &q_inj, v_root).ok()?;
        for (i, b) in e.buses.iter().enumerate() {
            if df.v[i] < b.v_min || df.v[i] > b.v_max {
                return None;
            }
            x[lay.voltage[i][t]] = df.v[i];
        }
        for (l, line) in e.lines.iter().enumerate() {
            if df.i[l] > line.i_max || df.p[l].hypot(df.q[l]) > line.s_max {
                return None;
            }
            x[lay.line_p[l][t]] = df.p[l];
            x[lay.line_q[l][t]] = df.q[l];
            x[lay.line_i[l][t]] = df.i[l];
        }
        let g = root.generator.as_ref()?;
        if df.root_p < g.p_min || df.root_p > g.p_max || df.root_q < g.q_min || df.root_q > g.q_max {
            return None;
        }
        x[lay.gen_p[e.root][t]] = df.root_p;
        x[lay.gen_q[e.root][t]] = df.root_q;

        for (b, u) in case.bess.iter().enumerate() {
            let (p, q) = bess_pq[b];
            let loss = ((u.r_batt + u.r_cvt) * p * p + u.r_cvt * q * q) / df.v[u.bus];
            energy[b] -= dt * (p + loss);
            if energy[b] < u.e_min || energy[b] > u.e_max {
                return None;
            }
            x[lay.bess_loss[b][t]] = loss;
            x[lay.bess_energy[b][t]] = energy[b];
        }
    }
    Some(x)
}

/// Draws until `exact_point` succeeds.
pub fn exact_point_retry(
    case: &NexusCase,
    exact: &ConstraintSystem,
    rng: &mut impl Rng,
    tries: usize,
) -> Option<Vec<f64>> {
    (0..tries).find_map(|_| exact_point(case, exact, rng))
}

/// Random mixed-integer conic program with `n` binaries: a unit is usable
/// only when its binary is on, its quadratic cost lives in a rotated cone,
/// and the units jointly cover a demand.
pub fn random_micp(rng: &mut impl Rng, n: usize) -> ConstraintSystem {
    use wen_core::system::{LinExpr, Sense};
    let mut s = ConstraintSystem::new(format!("random-{n}"));
    let z: Vec<usize> = (0..n).map(|j| s.binary(format!("z{j}"))).collect();
    let cap: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..3.0)).collect();
    let x: Vec<usize> = (0..n).map(|j| s.continuous(format!("x{j}"), 0.0, cap[j])).collect();
    let y: Vec<usize> = (0..n).map(|j| s.continuous(format!("y{j}"), 0.0, 1e3)).collect();
    let mut obj = LinExpr::new();
    let mut cover = LinExpr::new();
    for j in 0..n {
        s.add_linear(format!("on{j}"), LinExpr::var(x[j]).add(z[j], -cap[j]), Sense::Le);
        s.add_cone(
            format!("cost{j}"),
            vec![(x[j], rng.gen_range(0.1..2.0))],
            LinExpr::var(y[j]),
            LinExpr::constant(1.0),
        );
        obj.push(z[j], rng.gen_range(0.2..2.0));
        obj.push(y[j], 1.0);
        obj.push(x[j], rng.gen_range(-0.5..0.5));
        cover.push(x[j], 1.0);
    }
    let total: f64 = cap.iter().sum();
    s.add_linear("cover", cover.plus(-rng.gen_range(0.2..0.6) * total), Sense::Ge);
    if n >= 3 && rng.gen_bool(0.5) {
        // Two units that exclude each other.
        s.add_linear("exclusive", LinExpr::var(z[0]).add(z[1], 1.0).plus(-1.0), Sense::Le);
    }
    let k = rng.gen_range(1..=n);
    let mut card = LinExpr::constant(-(k as f64));
    for &v in &z {
        card.push(v, 1.0);
    }
    s.add_linear("count", card, Sense::Le);
    s.objective.linear = obj;
    if rng.gen_bool(0.5) {
        s.objective.quad = vec![(x[0], rng.gen_range(0.1..1.0))];
    }
    s
}

/// Minimum over every binary assignment of the fixed continuous problem;
/// `None` if every assignment is infeasible.
pub fn enumerate(sys: &ConstraintSystem) -> Option<f64> {
    use wen_core::solver::{solve_cone, to_cone_with_bounds, ConeOptions};
    let bins = sys.binaries();
    assert!(bins.len() <= 16);
    let base: Vec<(f64, f64)> = sys.variables.iter().map(|v| (v.lb, v.ub)).collect();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << bins.len()) {
        let mut bounds = base.clone();
        for (k, &b) in bins.iter().enumerate() {
            let v = f64::from((mask >> k) & 1);
            bounds[b] = (v, v);
        }
        let r = solve_cone(&to_cone_with_bounds(sys, &bounds).ok()?, &ConeOptions::default());
        if r.status.has_solution() {
            best = Some(best.map_or(r.objective, |b: f64| b.min(r.objective)));
        }
    }
    best
}

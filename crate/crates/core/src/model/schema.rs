//! On-disk case format. Physical units in the file (kW, kvar, Ω, A, kWh,
//! $/MWh, m, m³/s); `into_case` converts everything to the internal bases.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::case::*;
use super::topology::RadialTopology;
use super::units::{pipe_resistance, Bases};
use super::CaseError;

/// A time series: explicit values, a constant, or a named shape times a scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSpec {
    Values(Vec<f64>),
    Constant(f64),
    Shaped { shape: String, scale: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseFile {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub description: Option<String>,
    pub time: TimeSpec,
    pub bases: Bases,
    #[serde(default)]
    pub shapes: BTreeMap<String, Vec<f64>>,
    pub prices: PriceSpec,
    pub electric: ElectricSpec,
    pub water: WaterSpec,
    #[serde(default)]
    pub bess: Vec<BessSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub periods: usize,
    #[serde(default = "one")]
    pub hours_per_period: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceSpec {
    pub per_mwh: ProfileSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElectricSpec {
    pub root: String,
    pub buses: Vec<BusSpec>,
    pub lines: Vec<LineSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusSpec {
    pub id: String,
    /// Voltage magnitude bounds, p.u.
    pub v_min_pu: f64,
    pub v_max_pu: f64,
    #[serde(default)]
    pub p_kw: Option<ProfileSpec>,
    #[serde(default)]
    pub q_kvar: Option<ProfileSpec>,
    #[serde(default)]
    pub generator: Option<GeneratorSpec>,
    #[serde(default)]
    pub pv: Option<PvSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub p_min_kw: f64,
    pub p_max_kw: f64,
    pub q_min_kvar: f64,
    pub q_max_kvar: f64,
    #[serde(default)]
    pub c1_per_mwh: f64,
    #[serde(default)]
    pub c2_per_mw2h: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PvSpec {
    pub p_kw: ProfileSpec,
    #[serde(default)]
    pub q_kvar: Option<ProfileSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSpec {
    pub from: String,
    pub to: String,
    pub r_ohm: f64,
    pub x_ohm: f64,
    pub ampacity_a: f64,
    pub s_max_kva: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BessSpec {
    pub id: String,
    pub bus: String,
    pub r_batt_pu: f64,
    pub r_cvt_pu: f64,
    pub s_max_kva: f64,
    pub e_min_kwh: f64,
    pub e_max_kwh: f64,
    pub e0_kwh: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaterSpec {
    pub nodes: Vec<NodeSpec>,
    pub pipes: Vec<PipeSpec>,
    #[serde(default)]
    pub pumps: Vec<PumpSpec>,
    #[serde(default)]
    pub tanks: Vec<TankSpec>,
    #[serde(default)]
    pub irrigation: Vec<IrrigationSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    pub elevation_m: f64,
    pub head_min_m: f64,
    pub head_max_m: f64,
    #[serde(default)]
    pub demand_m3s: Option<ProfileSpec>,
    #[serde(default)]
    pub source: Option<SourceSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub min_m3s: f64,
    pub max_m3s: f64,
}

/// Either `resistance` directly or the (friction, length, diameter) triple.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipeSpec {
    pub id: String,
    pub from: String,
    pub to: String,
    #[serde(default)]
    pub resistance: Option<f64>,
    #[serde(default)]
    pub friction: Option<f64>,
    #[serde(default)]
    pub length_m: Option<f64>,
    #[serde(default)]
    pub diameter_m: Option<f64>,
    pub flow_min_m3s: f64,
    pub flow_max_m3s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpSpec {
    pub id: String,
    pub pipe: String,
    pub bus: String,
    pub head_slope: f64,
    pub head_intercept_m: f64,
    pub efficiency: f64,
    pub pf_ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TankSpec {
    pub id: String,
    pub node: String,
    pub min_m3: f64,
    pub max_m3: f64,
    pub initial_m3: f64,
    pub owner: TankOwner,
    pub flow_min_m3s: f64,
    pub flow_max_m3s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrrigationSpec {
    pub id: String,
    pub tank_node: String,
    pub rate_m3s: f64,
    pub hours_on: usize,
    #[serde(default)]
    pub demand_m3s: Option<ProfileSpec>,
    /// Periods irrigated when the schedule is fixed; defaults to `0..hours_on`.
    #[serde(default)]
    pub baseline_periods: Option<Vec<usize>>,
}

struct Resolver<'a> {
    periods: usize,
    shapes: &'a BTreeMap<String, Vec<f64>>,
}

impl Resolver<'_> {
    fn profile(&self, spec: Option<&ProfileSpec>, scale: f64) -> Result<Vec<f64>, CaseError> {
        let raw = match spec {
            None => vec![0.0; self.periods],
            Some(ProfileSpec::Values(v)) => v.clone(),
            Some(ProfileSpec::Constant(c)) => vec![*c; self.periods],
            Some(ProfileSpec::Shaped { shape, scale: k }) => self
                .shapes
                .get(shape)
                .ok_or_else(|| CaseError::DanglingReference {
                    kind: "shape",
                    id: shape.clone(),
                })?
                .iter()
                .map(|v| v * k)
                .collect(),
        };
        Ok(raw.into_iter().map(|v| v * scale).collect())
    }
}

fn lookup(found: Option<usize>, kind: &'static str, id: &str) -> Result<usize, CaseError> {
    found.ok_or_else(|| CaseError::DanglingReference {
        kind,
        id: id.to_string(),
    })
}

impl CaseFile {
    /// Resolves ids, profiles and units. Does not validate invariants.
    pub fn into_case(self) -> Result<NexusCase, CaseError> {
        let bases = self.bases;
        let t = self.time.periods;
        let res = Resolver {
            periods: t,
            shapes: &self.shapes,
        };
        let kw = bases.kw_to_pu(1.0);

        let mut buses = Vec::with_capacity(self.electric.buses.len());
        for b in &self.electric.buses {
            let generator = b.generator.as_ref().map(|g| Generator {
                p_min: g.p_min_kw * kw,
                p_max: g.p_max_kw * kw,
                q_min: g.q_min_kvar * kw,
                q_max: g.q_max_kvar * kw,
                c1: bases.price_to_pu(g.c1_per_mwh),
                c2: g.c2_per_mw2h * bases.s_base_mva * bases.s_base_mva,
            });
            let pv = match &b.pv {
                Some(pv) => Some(PvProfile {
                    p: res.profile(Some(&pv.p_kw), kw)?,
                    q: res.profile(pv.q_kvar.as_ref(), kw)?,
                }),
                None => None,
            };
            buses.push(Bus {
                id: b.id.clone(),
                v_min: b.v_min_pu * b.v_min_pu,
                v_max: b.v_max_pu * b.v_max_pu,
                p_load: res.profile(b.p_kw.as_ref(), kw)?,
                q_load: res.profile(b.q_kvar.as_ref(), kw)?,
                generator,
                pv,
            });
        }
        let bus_idx = |id: &str| lookup(buses.iter().position(|b| b.id == id), "bus", id);
        let root = bus_idx(&self.electric.root)?;
        let mut lines = Vec::with_capacity(self.electric.lines.len());
        for l in &self.electric.lines {
            lines.push(Line {
                from: bus_idx(&l.from)?,
                to: bus_idx(&l.to)?,
                r: bases.ohm_to_pu(l.r_ohm),
                x: bases.ohm_to_pu(l.x_ohm),
                i_max: bases.ampacity_to_pu2(l.ampacity_a),
                s_max: l.s_max_kva * kw,
            });
        }
        let mut electric = ElectricNetwork { buses, lines, root };
        if let Ok(topo) = RadialTopology::build(&electric) {
            for (bus, pl) in topo.parent_line.iter().enumerate() {
                if let Some(k) = *pl {
                    let line = &mut electric.lines[k];
                    if line.to != bus {
                        std::mem::swap(&mut line.from, &mut line.to);
                    }
                }
            }
        }

        let mut bess = Vec::with_capacity(self.bess.len());
        for b in &self.bess {
            bess.push(BessUnit {
                id: b.id.clone(),
                bus: lookup(electric.bus_index(&b.bus), "bus", &b.bus)?,
                r_batt: b.r_batt_pu,
                r_cvt: b.r_cvt_pu,
                s_max: b.s_max_kva * kw,
                e_min: b.e_min_kwh * kw,
                e_max: b.e_max_kwh * kw,
                e0: b.e0_kwh * kw,
            });
        }

        let w = &self.water;
        let mut nodes = Vec::with_capacity(w.nodes.len());
        for n in &w.nodes {
            nodes.push(WaterNode {
                id: n.id.clone(),
                elevation: n.elevation_m,
                head_min: n.head_min_m,
                head_max: n.head_max_m,
                demand: res.profile(n.demand_m3s.as_ref(), 1.0)?,
                source: n.source.as_ref().map(|s| SourceBounds {
                    min: s.min_m3s,
                    max: s.max_m3s,
                }),
            });
        }
        let node_idx = |id: &str| lookup(nodes.iter().position(|n| n.id == id), "water node", id);
        let mut pipes = Vec::with_capacity(w.pipes.len());
        for p in &w.pipes {
            let resistance = match (p.resistance, p.friction, p.length_m, p.diameter_m) {
                (Some(r), None, None, None) => r,
                (None, Some(f), Some(l), Some(d)) => pipe_resistance(f, l, d)?,
                _ => {
                    return Err(CaseError::InvalidValue(format!(
                        "pipe {} needs either `resistance` or all of `friction`, `length_m`, `diameter_m`",
                        p.id
                    )))
                }
            };
            pipes.push(Pipe {
                id: p.id.clone(),
                from: node_idx(&p.from)?,
                to: node_idx(&p.to)?,
                resistance,
                flow_min: p.flow_min_m3s,
                flow_max: p.flow_max_m3s,
            });
        }
        let mut pumps = Vec::with_capacity(w.pumps.len());
        for p in &w.pumps {
            let pipe = lookup(pipes.iter().position(|x| x.id == p.pipe), "pipe", &p.pipe)?;
            let bus = lookup(electric.bus_index(&p.bus), "bus", &p.bus)?;
            pumps.push(Pump::new(
                p.id.clone(),
                pipe,
                bus,
                p.head_slope,
                p.head_intercept_m,
                p.efficiency,
                p.pf_ratio,
                &bases,
            ));
        }
        let mut tanks = Vec::with_capacity(w.tanks.len());
        for tk in &w.tanks {
            tanks.push(Tank {
                id: tk.id.clone(),
                node: node_idx(&tk.node)?,
                min: tk.min_m3,
                max: tk.max_m3,
                initial: tk.initial_m3,
                owner: tk.owner,
                flow_min: tk.flow_min_m3s,
                flow_max: tk.flow_max_m3s,
            });
        }
        let mut irrigation = Vec::with_capacity(w.irrigation.len());
        for ir in &w.irrigation {
            let periods = ir
                .baseline_periods
                .clone()
                .unwrap_or_else(|| (0..ir.hours_on.min(t)).collect());
            let mut baseline = vec![false; t];
            for p in periods {
                if p >= t {
                    return Err(CaseError::InvalidValue(format!(
                        "irrigation {} baseline period {p} outside horizon of {t}",
                        ir.id
                    )));
                }
                baseline[p] = true;
            }
            irrigation.push(IrrigationLoad {
                id: ir.id.clone(),
                tank_node: node_idx(&ir.tank_node)?,
                rate: ir.rate_m3s,
                hours_on: ir.hours_on,
                demand: res.profile(ir.demand_m3s.as_ref(), 1.0)?,
                baseline,
            });
        }

        let prices = res
            .profile(Some(&self.prices.per_mwh), 1.0)?
            .into_iter()
            .map(|p| bases.price_to_pu(p))
            .collect();

        Ok(NexusCase {
            name: self.name.unwrap_or_else(|| "unnamed".into()),
            electric,
            water: WaterNetwork {
                nodes,
                pipes,
                pumps,
                tanks,
                irrigation,
            },
            bess,
            time: TimeGrid {
                periods: t,
                hours_per_period: self.time.hours_per_period,
            },
            prices,
            bases,
        })
    }
}

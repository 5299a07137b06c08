//! In-memory network data. Electric quantities are per-unit on the case
//! power base, water quantities are SI.

use serde::{Deserialize, Serialize};

use super::units::{Bases, RHO_G};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Generator {
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// Linear cost, $ per p.u.·h.
    pub c1: f64,
    /// Quadratic cost, $ per (p.u.)²·h.
    pub c2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PvProfile {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bus {
    pub id: String,
    /// Squared-voltage bounds, p.u.².
    pub v_min: f64,
    pub v_max: f64,
    pub p_load: Vec<f64>,
    pub q_load: Vec<f64>,
    pub generator: Option<Generator>,
    pub pv: Option<PvProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Squared-current cap, p.u.².
    pub i_max: f64,
    /// Apparent-power cap, p.u.
    pub s_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElectricNetwork {
    pub buses: Vec<Bus>,
    /// Lines are oriented away from the root after loading.
    pub lines: Vec<Line>,
    pub root: usize,
}

impl ElectricNetwork {
    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Buses with a dispatchable generator other than the PCC.
    pub fn generator_buses(&self) -> Vec<usize> {
        (0..self.buses.len())
            .filter(|&i| i != self.root && self.buses[i].generator.is_some())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BessUnit {
    pub id: String,
    pub bus: usize,
    pub r_batt: f64,
    pub r_cvt: f64,
    pub s_max: f64,
    /// Energy bounds and initial energy, p.u.·h.
    pub e_min: f64,
    pub e_max: f64,
    pub e0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SourceBounds {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaterNode {
    pub id: String,
    pub elevation: f64,
    /// Pressure-head bounds, m.
    pub head_min: f64,
    pub head_max: f64,
    /// Uncontrollable withdrawal, m³/s.
    pub demand: Vec<f64>,
    pub source: Option<SourceBounds>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pipe {
    pub id: String,
    pub from: usize,
    pub to: usize,
    /// Head-loss coefficient R, s²/m⁵.
    pub resistance: f64,
    pub flow_min: f64,
    pub flow_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pump {
    pub id: String,
    pub pipe: usize,
    pub bus: usize,
    /// Head gain y = slope·f + intercept (s/m², m).
    pub head_slope: f64,
    pub head_intercept: f64,
    pub efficiency: f64,
    /// Fixed P/Q ratio of the motor.
    pub pf_ratio: f64,
    /// Electric coefficients of η·P = a₁f² + a₀f in p.u.
    pub power_quadratic: f64,
    pub power_linear: f64,
}

impl Pump {
    pub fn new(
        id: String,
        pipe: usize,
        bus: usize,
        head_slope: f64,
        head_intercept: f64,
        efficiency: f64,
        pf_ratio: f64,
        bases: &Bases,
    ) -> Self {
        let kappa = RHO_G / bases.s_base_watts();
        Pump {
            id,
            pipe,
            bus,
            head_slope,
            head_intercept,
            efficiency,
            pf_ratio,
            power_quadratic: kappa * head_slope,
            power_linear: kappa * head_intercept,
        }
    }

    pub fn head_gain(&self, flow: f64) -> f64 {
        self.head_slope * flow + self.head_intercept
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TankOwner {
    Utility,
    Customer,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tank {
    pub id: String,
    pub node: usize,
    pub min: f64,
    pub max: f64,
    pub initial: f64,
    pub owner: TankOwner,
    /// Bounds on the flow into the tank, m³/s.
    pub flow_min: f64,
    pub flow_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IrrigationLoad {
    pub id: String,
    pub tank_node: usize,
    /// Draw rate while on, m³/s.
    pub rate: f64,
    /// Periods on per horizon.
    pub hours_on: usize,
    /// Fixed (non-irrigation) draw from the customer tank.
    pub demand: Vec<f64>,
    /// Schedule used when irrigation is not dispatchable.
    pub baseline: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaterNetwork {
    pub nodes: Vec<WaterNode>,
    pub pipes: Vec<Pipe>,
    pub pumps: Vec<Pump>,
    pub tanks: Vec<Tank>,
    pub irrigation: Vec<IrrigationLoad>,
}

impl WaterNetwork {
    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn pipe_index(&self, id: &str) -> Option<usize> {
        self.pipes.iter().position(|p| p.id == id)
    }

    pub fn pump_on_pipe(&self, pipe: usize) -> Option<usize> {
        self.pumps.iter().position(|p| p.pipe == pipe)
    }

    pub fn tank_at(&self, node: usize) -> Option<usize> {
        self.tanks.iter().position(|t| t.node == node)
    }

    /// Node-by-pipe incidence: +1 at the start node, −1 at the end node.
    pub fn incidence(&self) -> Vec<Vec<i8>> {
        let mut a = vec![vec![0i8; self.pipes.len()]; self.nodes.len()];
        for (k, p) in self.pipes.iter().enumerate() {
            a[p.from][k] += 1;
            a[p.to][k] -= 1;
        }
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    pub periods: usize,
    pub hours_per_period: f64,
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid {
            periods: 24,
            hours_per_period: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NexusCase {
    pub name: String,
    pub electric: ElectricNetwork,
    pub water: WaterNetwork,
    pub bess: Vec<BessUnit>,
    pub time: TimeGrid,
    /// PCC energy price, $ per p.u.·h.
    pub prices: Vec<f64>,
    pub bases: Bases,
}

impl NexusCase {
    pub fn periods(&self) -> usize {
        self.time.periods
    }

    /// Copy with every PV profile multiplied by `factor`.
    pub fn with_pv_scale(&self, factor: f64) -> NexusCase {
        let mut c = self.clone();
        for bus in &mut c.electric.buses {
            if let Some(pv) = &mut bus.pv {
                pv.p.iter_mut().for_each(|v| *v *= factor);
                pv.q.iter_mut().for_each(|v| *v *= factor);
            }
        }
        c
    }

    /// Copy with every price multiplied by `factor`.
    pub fn with_price_scale(&self, factor: f64) -> NexusCase {
        let mut c = self.clone();
        c.prices.iter_mut().for_each(|p| *p *= factor);
        for bus in &mut c.electric.buses {
            if let Some(g) = &mut bus.generator {
                g.c1 *= factor;
                g.c2 *= factor;
            }
        }
        c
    }

    /// PV energy over electric load energy across the horizon.
    pub fn pv_penetration(&self) -> f64 {
        let pv: f64 = self
            .electric
            .buses
            .iter()
            .filter_map(|b| b.pv.as_ref())
            .map(|pv| pv.p.iter().sum::<f64>())
            .sum();
        let load: f64 = self.electric.buses.iter().map(|b| b.p_load.iter().sum::<f64>()).sum();
        if load > 0.0 {
            pv / load
        } else {
            0.0
        }
    }
}

//! Unit bookkeeping and the Darcy-Weisbach pipe coefficient.

use serde::{Deserialize, Serialize};

use super::CaseError;

/// Gravitational acceleration, m/s².
pub const GRAVITY: f64 = 9.81;
/// Water density, kg/m³.
pub const WATER_DENSITY: f64 = 1000.0;
/// ρ·g, W per (m · m³/s) of hydraulic power.
pub const RHO_G: f64 = WATER_DENSITY * GRAVITY;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bases {
    pub s_base_mva: f64,
    pub v_base_kv: f64,
}

impl Default for Bases {
    fn default() -> Self {
        Bases {
            s_base_mva: 1.0,
            v_base_kv: 4.16,
        }
    }
}

impl Bases {
    pub fn s_base_watts(&self) -> f64 {
        self.s_base_mva * 1e6
    }

    /// Base impedance, Ω.
    pub fn z_base(&self) -> f64 {
        self.v_base_kv * self.v_base_kv / self.s_base_mva
    }

    /// Base line current, A (three-phase).
    pub fn i_base(&self) -> f64 {
        self.s_base_mva * 1e3 / (3f64.sqrt() * self.v_base_kv)
    }

    pub fn kw_to_pu(&self, kw: f64) -> f64 {
        kw / (self.s_base_mva * 1e3)
    }

    pub fn ohm_to_pu(&self, ohm: f64) -> f64 {
        ohm / self.z_base()
    }

    /// Squared per-unit current for an ampacity in A.
    pub fn ampacity_to_pu2(&self, amps: f64) -> f64 {
        let i = amps / self.i_base();
        i * i
    }

    /// $/MWh to $ per p.u.·h.
    pub fn price_to_pu(&self, per_mwh: f64) -> f64 {
        per_mwh * self.s_base_mva
    }
}

/// Head-loss coefficient R = 8fL / (π² g D⁵) in s²/m⁵.
pub fn pipe_resistance(friction: f64, length: f64, diameter: f64) -> Result<f64, CaseError> {
    for (name, v) in [("friction", friction), ("length", length), ("diameter", diameter)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(CaseError::InvalidValue(format!(
                "pipe {name} must be positive, got {v}"
            )));
        }
    }
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    Ok(8.0 * friction * length / (pi2 * GRAVITY * diameter.powi(5)))
}

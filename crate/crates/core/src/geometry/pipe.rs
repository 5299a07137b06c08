//! Linear and convex-quadratic relaxations of the pipe and pump curves.

use serde::Serialize;

use super::GeometryError;

/// 2√2 − 2
pub const TANGENT_SLOPE: f64 = 0.828_427_124_746_190_1;
/// 3 − 2√2
pub const TANGENT_OFFSET: f64 = 0.171_572_875_253_809_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sense {
    /// Δy ≤ slope·f + intercept
    Below,
    /// Δy ≥ slope·f + intercept
    Above,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HalfPlane {
    pub slope: f64,
    pub intercept: f64,
    pub sense: Sense,
}

impl HalfPlane {
    pub fn value(&self, f: f64) -> f64 {
        self.slope * f + self.intercept
    }

    /// Distance by which (f, dy) violates the half-plane, or 0.
    pub fn violation(&self, f: f64, dy: f64) -> f64 {
        match self.sense {
            Sense::Below => (dy - self.value(f)).max(0.0),
            Sense::Above => (self.value(f) - dy).max(0.0),
        }
    }

    /// Line through two points of the curve.
    fn through(p: (f64, f64), q: (f64, f64), sense: Sense) -> HalfPlane {
        let slope = (q.1 - p.1) / (q.0 - p.0);
        HalfPlane {
            slope,
            intercept: p.1 - slope * p.0,
            sense,
        }
    }
}

/// R·sgn(f)·f²
pub fn signed_loss(r: f64, f: f64) -> f64 {
    r * f * f.abs()
}

/// Four half-planes enclosing Δy = R·sgn(f)·f² on [f̲, f̄].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolygonRelaxation {
    pub resistance: f64,
    pub f_min: f64,
    pub f_max: f64,
    /// Upper line through (f̄, Rf̄²) tangent to the negative branch, lower
    /// line through (f̲, −Rf̲²) tangent to the positive branch, tangent at
    /// f̄, tangent at f̲.
    pub lines: [HalfPlane; 4],
}

impl PolygonRelaxation {
    pub fn upper(&self, f: f64) -> f64 {
        self.lines
            .iter()
            .filter(|l| l.sense == Sense::Below)
            .map(|l| l.value(f))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn lower(&self, f: f64) -> f64 {
        self.lines
            .iter()
            .filter(|l| l.sense == Sense::Above)
            .map(|l| l.value(f))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, f: f64, dy: f64, tol: f64) -> bool {
        self.lines.iter().all(|l| l.violation(f, dy) <= tol)
    }
}

/// Polygon for a bidirectional pipe, f̲ < 0 < f̄.
///
/// The tangent at f̄ only stays below the negative branch while
/// |f̲| ≤ (1+√2)·f̄, and symmetrically for the tangent at f̲; outside that
/// range the tangent is replaced by the endpoint chord.
pub fn pipe_polygon(r: f64, f_min: f64, f_max: f64) -> Result<PolygonRelaxation, GeometryError> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(GeometryError::InvalidSpec(format!(
            "resistance must be positive, got {r}"
        )));
    }
    if !(f_min < 0.0 && 0.0 < f_max) || !f_min.is_finite() || !f_max.is_finite() {
        return Err(GeometryError::NotBidirectional { f_min, f_max });
    }
    let (t, s) = (TANGENT_SLOPE, TANGENT_OFFSET);
    let lo = (f_min, signed_loss(r, f_min));
    let hi = (f_max, signed_loss(r, f_max));
    let ratio = 1.0 + std::f64::consts::SQRT_2;
    let upper_secant = HalfPlane {
        slope: t * r * f_max,
        intercept: s * r * f_max * f_max,
        sense: Sense::Below,
    };
    let lower_secant = HalfPlane {
        slope: -t * r * f_min,
        intercept: -s * r * f_min * f_min,
        sense: Sense::Above,
    };
    let tangent_hi = if -f_min <= ratio * f_max {
        HalfPlane {
            slope: 2.0 * r * f_max,
            intercept: -r * f_max * f_max,
            sense: Sense::Above,
        }
    } else {
        HalfPlane::through(lo, hi, Sense::Above)
    };
    let tangent_lo = if f_max <= ratio * -f_min {
        HalfPlane {
            slope: -2.0 * r * f_min,
            intercept: r * f_min * f_min,
            sense: Sense::Below,
        }
    } else {
        HalfPlane::through(lo, hi, Sense::Below)
    };
    Ok(PolygonRelaxation {
        resistance: r,
        f_min,
        f_max,
        lines: [upper_secant, lower_secant, tangent_hi, tangent_lo],
    })
}

/// Upper bound R·f̄·f on R·f² over [0, f̄].
pub fn parabola_secant(r: f64, f_max: f64) -> Result<HalfPlane, GeometryError> {
    if !(f_max > 0.0) || !f_max.is_finite() {
        return Err(GeometryError::InvalidSpec(format!(
            "upper flow bound must be positive, got {f_max}"
        )));
    }
    Ok(HalfPlane {
        slope: r * f_max,
        intercept: 0.0,
        sense: Sense::Below,
    })
}

/// Chord of R·sgn(f)·f² between two flows of the same sign. Above the curve
/// for nonnegative flows, below it for nonpositive flows.
pub fn one_way_chord(r: f64, f_min: f64, f_max: f64) -> HalfPlane {
    let lo = (f_min, signed_loss(r, f_min));
    let hi = (f_max, signed_loss(r, f_max));
    let sense = if f_min >= 0.0 { Sense::Below } else { Sense::Above };
    if f_max > f_min {
        HalfPlane::through(lo, hi, sense)
    } else {
        HalfPlane {
            slope: 0.0,
            intercept: lo.1,
            sense,
        }
    }
}

/// Relaxation of η·P = a₁f² + a₀f over f ∈ [0, f̄]. For a₁ ≥ 0 the curve
/// is the lower bound and the chord the upper; for a₁ < 0 they swap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PumpPowerHull {
    pub quadratic: f64,
    pub linear: f64,
    pub f_max: f64,
    pub efficiency: f64,
    /// Slope of the chord through the origin and (f̄, a₁f̄² + a₀f̄).
    pub chord_slope: f64,
}

impl PumpPowerHull {
    pub fn curve(&self, f: f64) -> f64 {
        self.quadratic * f * f + self.linear * f
    }

    /// Bounds on η·P at flow `f`.
    pub fn bounds(&self, f: f64) -> (f64, f64) {
        let (c, s) = (self.curve(f), self.chord_slope * f);
        if self.quadratic >= 0.0 {
            (c, s)
        } else {
            (s, c)
        }
    }

    /// Bounds on P itself.
    pub fn power_bounds(&self, f: f64) -> (f64, f64) {
        let (lo, hi) = self.bounds(f);
        (lo / self.efficiency, hi / self.efficiency)
    }
}

pub fn pump_power_hull(
    quadratic: f64,
    linear: f64,
    f_max: f64,
    efficiency: f64,
) -> Result<PumpPowerHull, GeometryError> {
    if !(f_max > 0.0) || !f_max.is_finite() {
        return Err(GeometryError::InvalidSpec(format!(
            "upper flow bound must be positive, got {f_max}"
        )));
    }
    if !(efficiency > 0.0 && efficiency <= 1.0) {
        return Err(GeometryError::InvalidSpec(format!(
            "efficiency must lie in (0, 1], got {efficiency}"
        )));
    }
    Ok(PumpPowerHull {
        quadratic,
        linear,
        f_max,
        efficiency,
        chord_slope: quadratic * f_max + linear,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants() {
        let sq2 = std::f64::consts::SQRT_2;
        assert!((TANGENT_SLOPE - (2.0 * sq2 - 2.0)).abs() < 1e-15);
        assert!((TANGENT_OFFSET - (3.0 - 2.0 * sq2)).abs() < 1e-15);
    }

    #[test]
    fn unit_polygon() {
        let p = pipe_polygon(1.0, -1.0, 1.0).unwrap();
        let [l1, l2, l3, l4] = p.lines;
        assert!((l1.slope - 0.8284).abs() < 1e-4 && (l1.intercept - 0.1716).abs() < 1e-4);
        assert_eq!((l3.slope, l3.intercept, l3.sense), (2.0, -1.0, Sense::Above));
        assert!((l2.slope - 0.8284).abs() < 1e-4 && (l2.intercept + 0.1716).abs() < 1e-4);
        assert_eq!((l4.slope, l4.intercept, l4.sense), (2.0, 1.0, Sense::Below));
    }

    #[test]
    fn upper_line_hits_endpoint_and_touches_negative_branch() {
        let (r, fmax) = (3.0, 0.7);
        let p = pipe_polygon(r, -0.5, fmax).unwrap();
        let l1 = p.lines[0];
        assert!((l1.value(fmax) - r * fmax * fmax).abs() < 1e-12);
        let ft = -(std::f64::consts::SQRT_2 - 1.0) * fmax;
        assert!((l1.value(ft) - signed_loss(r, ft)).abs() < 1e-12);
        // r f² + t r f̄ f + s r f̄² has a double root
        let disc = (TANGENT_SLOPE * r * fmax).powi(2) - 4.0 * r * TANGENT_OFFSET * r * fmax * fmax;
        assert!(disc.abs() < 1e-12);
    }

    #[test]
    fn one_directional_rejected() {
        assert!(matches!(
            pipe_polygon(1.0, 0.0, 1.0),
            Err(GeometryError::NotBidirectional { .. })
        ));
        assert!(pipe_polygon(0.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn asymmetric_bounds_fall_back_to_chord() {
        let p = pipe_polygon(1.0, -0.1, 1.0).unwrap();
        let l4 = p.lines[3];
        assert!((l4.value(-0.1) + 0.01).abs() < 1e-12);
        assert!((l4.value(1.0) - 1.0).abs() < 1e-12);
        for i in 0..=100 {
            let f = -0.1 + 1.1 * i as f64 / 100.0;
            assert!(p.contains(f, signed_loss(1.0, f), 1e-12), "{f}");
        }
    }

    #[test]
    fn secant_gap() {
        let (r, fmax) = (2.0, 0.4);
        let s = parabola_secant(r, fmax).unwrap();
        assert_eq!(s.value(0.0), 0.0);
        assert!((s.value(fmax) - r * fmax * fmax).abs() < 1e-15);
        let gap = s.value(fmax / 2.0) - r * (fmax / 2.0).powi(2);
        assert!((gap - r * fmax * fmax / 4.0).abs() < 1e-15);
        assert!(parabola_secant(r, 0.0).is_err());
    }

    #[test]
    fn pump_hull_endpoints() {
        let h = pump_power_hull(0.2, 0.3, 0.5, 0.8).unwrap();
        assert_eq!(h.bounds(0.0), (0.0, 0.0));
        let (lo, hi) = h.bounds(0.5);
        assert!((lo - hi).abs() < 1e-15);
        assert!((lo - (0.2 * 0.25 + 0.3 * 0.5)).abs() < 1e-15);
        let lin = pump_power_hull(0.0, 0.3, 0.5, 0.8).unwrap();
        let (lo, hi) = lin.bounds(0.2);
        assert!((lo - 0.06).abs() < 1e-15 && (hi - 0.06).abs() < 1e-15);
    }

    #[test]
    fn concave_pump_swaps_roles() {
        let h = pump_power_hull(-0.2, 0.5, 1.0, 1.0).unwrap();
        let (lo, hi) = h.bounds(0.5);
        assert!(lo <= hi);
        assert!((hi - h.curve(0.5)).abs() < 1e-15);
    }
}

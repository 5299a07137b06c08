//! Convex hull of the bilinear-quadratic set
//! Ω0 = { a·x1² + b·x2² = x3·x4, x1² + x2² ≤ c, box on (x3, x4) }.

use serde::Serialize;

use super::GeometryError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HullSpec {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub x3_min: f64,
    pub x3_max: f64,
    pub x4_min: f64,
    /// May be `f64::INFINITY`.
    pub x4_max: f64,
}

impl HullSpec {
    /// Line-flow set: V·ℐ = P² + Q² with P² + Q² ≤ S̄².
    pub fn branch_flow(s_max: f64, v_min: f64, v_max: f64, i_max: f64) -> Self {
        HullSpec {
            a: 1.0,
            b: 1.0,
            c: s_max * s_max,
            x3_min: v_min,
            x3_max: v_max,
            x4_min: 0.0,
            x4_max: i_max,
        }
    }

    /// Storage loss set: (r_b + r_c)·P² + r_c·Q² = L·V with P² + Q² ≤ S̄².
    pub fn storage_loss(r_batt: f64, r_cvt: f64, s_max: f64, v_min: f64, v_max: f64) -> Self {
        HullSpec {
            a: r_batt + r_cvt,
            b: r_cvt,
            c: s_max * s_max,
            x3_min: v_min,
            x3_max: v_max,
            x4_min: 0.0,
            x4_max: f64::INFINITY,
        }
    }

    /// a·c, the largest value x3·x4 can take on Ω0.
    pub fn ac(&self) -> f64 {
        self.a * self.c
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let finite = [self.a, self.b, self.c, self.x3_min, self.x3_max, self.x4_min];
        if finite.iter().any(|v| !v.is_finite()) || self.x4_max.is_nan() {
            return Err(GeometryError::InvalidSpec("non-finite parameter".into()));
        }
        if !(self.a >= self.b && self.b >= 0.0) {
            return Err(GeometryError::InvalidSpec(format!(
                "need a >= b >= 0, got a={}, b={}",
                self.a, self.b
            )));
        }
        if self.c < 0.0 || self.x3_min < 0.0 || self.x4_min < 0.0 {
            return Err(GeometryError::InvalidSpec(
                "c and the lower bounds of x3, x4 must be nonnegative".into(),
            ));
        }
        if self.x3_min > self.x3_max || self.x4_min > self.x4_max {
            return Err(GeometryError::InvalidSpec("box bounds out of order".into()));
        }
        let ac = self.ac();
        if !(self.x3_min * self.x4_min <= ac && ac <= self.x3_max * self.x4_max) {
            return Err(GeometryError::Precondition {
                ac,
                lower: self.x3_min * self.x4_min,
                upper: self.x3_max * self.x4_max,
            });
        }
        Ok(())
    }

    /// x̲3·x̄4, taken as +∞ when x̄4 is unbounded.
    fn x3lo_x4hi(&self) -> f64 {
        if self.x4_max.is_infinite() {
            f64::INFINITY
        } else {
            self.x3_min * self.x4_max
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HullCase {
    One,
    Two,
    Three,
    Four,
}

/// k1·x3 + k2·x4 ≤ d, i.e. Dᵀx ≤ d with D = [0, 0, k1, k2].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearCut {
    pub case: HullCase,
    pub k1: f64,
    pub k2: f64,
    pub d: f64,
}

impl LinearCut {
    pub fn coefficients(&self) -> [f64; 4] {
        [0.0, 0.0, self.k1, self.k2]
    }

    /// Dᵀx − d; nonpositive on the hull.
    pub fn slack(&self, x: &[f64; 4]) -> f64 {
        self.k1 * x[2] + self.k2 * x[3] - self.d
    }
}

/// Selects the coefficient case. Returns `Ok(None)` only when the selected
/// cut needs x̄4 and x̄4 is unbounded.
pub fn hull_cut(spec: &HullSpec) -> Result<Option<LinearCut>, GeometryError> {
    spec.validate()?;
    let ac = spec.ac();
    let hi_lo = spec.x3_max * spec.x4_min;
    let lo_hi = spec.x3lo_x4hi();
    let (x3l, x3u, x4l, x4u) = (spec.x3_min, spec.x3_max, spec.x4_min, spec.x4_max);
    let cut = if hi_lo <= ac && ac <= lo_hi {
        LinearCut {
            case: HullCase::One,
            k1: ac,
            k2: x3l * x3u,
            d: ac * (x3l + x3u),
        }
    } else if lo_hi <= ac && ac <= hi_lo {
        LinearCut {
            case: HullCase::Two,
            k1: x4l * x4u,
            k2: ac,
            d: ac * (x4l + x4u),
        }
    } else if hi_lo <= ac && lo_hi <= ac {
        LinearCut {
            case: HullCase::Three,
            k1: x4l,
            k2: x3l,
            d: ac + x3l * x4l,
        }
    } else {
        if x4u.is_infinite() {
            return Ok(None);
        }
        LinearCut {
            case: HullCase::Four,
            k1: x4u,
            k2: x3u,
            d: ac + x3u * x4u,
        }
    };
    Ok(Some(cut))
}

/// One row Σ quad[i]·x[i]² + Σ lin[i]·x[i] ≤ rhs over (x1, x2, x3, x4).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HullRow {
    pub label: &'static str,
    pub quad: [f64; 4],
    pub lin: [f64; 4],
    pub rhs: f64,
}

impl HullRow {
    /// Left-hand side minus right-hand side.
    pub fn slack(&self, x: &[f64; 4]) -> f64 {
        let mut s = -self.rhs;
        for i in 0..4 {
            s += self.quad[i] * x[i] * x[i] + self.lin[i] * x[i];
        }
        s
    }

    /// Magnitude of the terms, for scale-aware tolerances.
    pub fn scale(&self, x: &[f64; 4]) -> f64 {
        let mut s = self.rhs.abs();
        for i in 0..4 {
            s += (self.quad[i] * x[i] * x[i]).abs() + (self.lin[i] * x[i]).abs();
        }
        s.max(1.0)
    }

    pub fn is_linear(&self) -> bool {
        self.quad.iter().all(|&q| q == 0.0)
    }
}

/// Ω1 as a rotated cone a·x1² + b·x2² ≤ x3·x4, a list of rows and the box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HullBlock {
    pub spec: HullSpec,
    pub cone: [f64; 2],
    pub rows: Vec<HullRow>,
    pub cut: Option<LinearCut>,
}

impl HullBlock {
    /// Every row of Ω1, redundant or not.
    pub fn full(spec: &HullSpec) -> Result<HullBlock, GeometryError> {
        let cut = hull_cut(spec)?;
        let ac = spec.ac();
        let amb = spec.a - spec.b;
        let mut rows = vec![
            HullRow {
                label: "x3_cut",
                quad: [0.0, amb, 0.0, 0.0],
                lin: [0.0, 0.0, spec.x4_min, 0.0],
                rhs: ac,
            },
            HullRow {
                label: "x4_cut",
                quad: [0.0, amb, 0.0, 0.0],
                lin: [0.0, 0.0, 0.0, spec.x3_min],
                rhs: ac,
            },
        ];
        if let Some(k) = cut {
            rows.push(HullRow {
                label: "hull_cut",
                quad: [0.0; 4],
                lin: k.coefficients(),
                rhs: k.d,
            });
        }
        rows.push(HullRow {
            label: "disc",
            quad: [1.0, 1.0, 0.0, 0.0],
            lin: [0.0; 4],
            rhs: spec.c,
        });
        Ok(HullBlock {
            spec: *spec,
            cone: [spec.a, spec.b],
            rows,
            cut,
        })
    }

    /// Box bounds on x3 and x4.
    pub fn box_violation(&self, x: &[f64; 4]) -> f64 {
        let s = &self.spec;
        let v3 = (s.x3_min - x[2]).max(x[2] - s.x3_max).max(0.0);
        let v4 = (s.x4_min - x[3]).max(x[3] - s.x4_max).max(0.0);
        v3.max(v4)
    }

    /// Cone slack a·x1² + b·x2² − x3·x4.
    pub fn cone_slack(&self, x: &[f64; 4]) -> f64 {
        self.cone[0] * x[0] * x[0] + self.cone[1] * x[1] * x[1] - x[2] * x[3]
    }

    pub fn row(&self, label: &str) -> Option<&HullRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

/// Ω1 with rows implied by the others removed.
pub fn hull_constraints(spec: &HullSpec) -> Result<HullBlock, GeometryError> {
    let mut block = HullBlock::full(spec)?;
    let ac = spec.ac();
    let amb = spec.a - spec.b;
    let cut = block.cut;
    // Largest x3 and x4 reachable within the box and the linear cut.
    let x3_reach = match cut {
        Some(k) if k.k1 > 0.0 => spec.x3_max.min((k.d - k.k2 * spec.x4_min) / k.k1),
        _ => spec.x3_max,
    };
    let x4_reach = match cut {
        Some(k) if k.k2 > 0.0 => spec.x4_max.min((k.d - k.k1 * spec.x3_min) / k.k2),
        _ => spec.x4_max,
    };
    let tol = 1e-12 * ac.abs().max(1.0);
    block.rows.retain(|r| match r.label {
        // (a−b)x2² ≤ (a−b)c under the disc, so the row holds once the
        // linear part is bounded by ac − (a−b)c = b·c.
        "x3_cut" => amb * spec.c + spec.x4_min * x3_reach > ac + tol,
        "x4_cut" => amb * spec.c + spec.x3_min * x4_reach > ac + tol,
        _ => true,
    });
    Ok(block)
}

//! Convex hulls and polyhedral relaxations of the model's nonconvex sets.

pub mod hull;
pub mod pipe;
pub mod verify;

pub use hull::{hull_constraints, hull_cut, HullBlock, HullCase, HullRow, HullSpec, LinearCut};
pub use pipe::{
    one_way_chord, parabola_secant, pipe_polygon, pump_power_hull, signed_loss, HalfPlane, PolygonRelaxation,
    PumpPowerHull, Sense,
};
pub use verify::{
    random_spec, verify_block, verify_hull, ContainmentReport, TightnessReport, VerifyOptions, Violation, X4_CAP,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("invalid hull spec: {0}")]
    InvalidSpec(String),
    #[error("a·c = {ac} outside [x3_min·x4_min, x3_max·x4_max] = [{lower}, {upper}]")]
    Precondition { ac: f64, lower: f64, upper: f64 },
    #[error("pipe polygon needs f_min < 0 < f_max, got [{f_min}, {f_max}]")]
    NotBidirectional { f_min: f64, f_max: f64 },
}

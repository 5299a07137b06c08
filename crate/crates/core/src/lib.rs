//! Co-optimization of a radial distribution feeder and a water distribution
//! network: exact model, convex relaxation, branch-and-bound solver and
//! exactness verification.
pub mod builder;
pub mod geometry;
pub mod model;
pub mod report;
pub mod solver;
pub mod study;
pub mod system;
pub mod verifier;

pub use model::{load_case, validate_case, CaseError, NexusCase};

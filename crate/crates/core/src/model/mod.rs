//! Network data, case files and unit conversion.

mod case;
pub mod schema;
pub mod topology;
pub mod units;
mod validate;

use std::path::Path;

pub use case::*;
pub use topology::{RadialTopology, TopologyError};
pub use units::{pipe_resistance, Bases};
pub use validate::{validate_case, ValidationReport};

const BUNDLED: &str = include_str!("../../../../data/case13_8.json");

#[derive(Debug, thiserror::Error)]
pub enum CaseError {
    #[error("cannot read {path}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed case file")]
    Parse(#[from] serde_json::Error),
    #[error("unknown {kind} `{id}`")]
    DanglingReference { kind: &'static str, id: String },
    #[error("{0}")]
    InvalidValue(String),
    #[error("case failed validation:\n{0}")]
    Validation(ValidationReport),
}

/// Parses, converts and validates a case document.
pub fn case_from_str(json: &str) -> Result<NexusCase, CaseError> {
    let file: schema::CaseFile = serde_json::from_str(json)?;
    let case = file.into_case()?;
    let report = validate_case(&case);
    if !report.is_valid() {
        return Err(CaseError::Validation(report));
    }
    Ok(case)
}

pub fn load_case(path: impl AsRef<Path>) -> Result<NexusCase, CaseError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CaseError::Io {
        path: path.display().to_string(),
        source,
    })?;
    case_from_str(&text)
}

impl NexusCase {
    /// The 13-bus / 8-node case shipped in `data/case13_8.json`.
    pub fn bundled() -> NexusCase {
        case_from_str(BUNDLED).expect("bundled case is valid")
    }

    pub fn bundled_json() -> &'static str {
        BUNDLED
    }
}

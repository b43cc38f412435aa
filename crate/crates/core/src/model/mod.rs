//! The system model: stream parameters, populations, slot-based diffusion
//! schemes, and the checks and measurements defined on them.

mod measure;
mod params;
mod scenario;
mod scheme;
mod validate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use measure::{measure_efficiency, EfficiencyReport, NodeUsage, SeederEfficiency};
pub use params::{Population, SeederSpec, StreamParams};
pub use scenario::Scenario;
pub use scheme::{DiffusionScheme, NodeId};
pub use validate::{validate_scheme, ValidationReport, Violation, ViolationKind};

/// Connectivity model a scheme is checked against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    /// No overhead, unlimited fanout.
    Perfect,
    /// No overhead, at most `c_s` non-empty out-edges per seeder.
    Fanout,
    /// Linear per-connection overhead `(1+a)e + b`.
    Overhead,
}

impl std::str::FromStr for Model {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "perfect" => Ok(Model::Perfect),
            "fanout" => Ok(Model::Fanout),
            "overhead" => Ok(Model::Overhead),
            _ => Err(ModelError::Parse(format!("unknown model {s:?}"))),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid stream parameters: {0}")]
    InvalidParams(String),
    #[error("invalid population: {0}")]
    InvalidPopulation(String),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("malformed scheme: {0}")]
    MalformedScheme(String),
    #[error("zero upload: {0}")]
    ZeroUpload(String),
    #[error("parse error: {0}")]
    Parse(String),
}

/// Sender-side bandwidth of one edge carrying `slots` slots of `slot_rate`
/// goodput each: `(1+a)·e + b`, or 0 for an empty edge.
pub fn edge_cost(params: &StreamParams, slots: u64, slot_rate: f64) -> f64 {
    if slots == 0 {
        return 0.0;
    }
    let e = slots as f64 * slot_rate;
    e + params.a * e + params.b
}

/// Receiver-side bandwidth of one incoming edge: `a_r·e + b_r`, or 0 when empty.
pub fn receiver_cost(params: &StreamParams, slots: u64, slot_rate: f64) -> f64 {
    if slots == 0 {
        return 0.0;
    }
    params.a_r * slots as f64 * slot_rate + params.b_r
}

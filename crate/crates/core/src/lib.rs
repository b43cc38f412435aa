//! Seeder efficiency in peer-to-peer live streaming.
//!
//! A seeder is a peer that contributes upload bandwidth to a live stream it
//! does not watch. It has to be fed part of the stream before it can forward
//! anything, so its useful contribution is its output minus that input. This
//! crate computes the best achievable ratio of that contribution to upload
//! under three connection models (perfect, limited fanout, linear overhead),
//! builds concrete diffusion schemes that reach or approach those optima,
//! certifies small cases by exhaustive search, and answers dimensioning
//! questions.
//!
//! The guide in `book/` at the workspace root walks through the concepts; its
//! code listings are compiled and run as doc-tests of this crate.

pub mod analytic;
pub mod builders;
pub mod dimensioning;
pub mod model;
pub mod oracle;
pub mod ratio;
pub mod slots;
pub mod tol;

pub use model::{
    edge_cost, measure_efficiency, validate_scheme, DiffusionScheme, EfficiencyReport, Model, ModelError, NodeId,
    Population, Scenario, SeederSpec, StreamParams, ValidationReport, ViolationKind,
};
pub use ratio::ExactRatio;
pub use slots::SlotSet;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/efficiency.md")]
    mod efficiency {}
    #[doc = include_str!("../../../book/src/schemes.md")]
    mod schemes {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
    #[doc = include_str!("../../../book/src/dimensioning.md")]
    mod dimensioning {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}

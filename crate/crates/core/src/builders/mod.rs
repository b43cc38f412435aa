//! Constructive diffusion schemes.
//!
//! Every builder returns a scheme that already passes [`validate_scheme`]
//! under its model, with the servers completing whatever the seeders do not
//! deliver to each leecher.

mod dichotomic;
mod homogeneous;
mod monorate;
mod perfect;

use std::ops::Range;

use serde::Serialize;
use thiserror::Error;

use crate::model::{
    edge_cost, validate_scheme, DiffusionScheme, Model, ModelError, NodeId, Population, StreamParams, ViolationKind,
};
use crate::ratio::ExactRatio;
use crate::slots::SlotSet;

pub use dichotomic::{
    build_dichotomic, choose_level, default_k_max, DichotomicOptions, DichotomicPlan, LevelChoice, RootSource,
    SeederLevel, SubstreamTree,
};
pub use homogeneous::{build_homogeneous_trees, homogeneous_slot_count, HomogeneousPlan};
pub use monorate::{build_monorate, MonoRatePlan};
pub use perfect::{build_perfect_broadcast, perfect_slot_count};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BuildError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("slot granularity: {0}")]
    Granularity(String),
    #[error("seeders do not share a common rate u/c")]
    NotHomogeneous,
    #[error("set of {size} seeders exceeds the guaranteed size {bound}")]
    SetTooLarge { size: usize, bound: u64 },
    #[error("mean upload {ubar} exceeds 2R²/b = {limit}")]
    PreconditionUbar { ubar: f64, limit: f64 },
    #[error("total upload {total} exceeds N_L·R = {limit}")]
    PreconditionUx { total: f64, limit: f64 },
    #[error("rooting failed: {0}")]
    RootingFailed(String),
    #[error("servers would need {used}, capacity is {budget}")]
    ServerCapacity { used: f64, budget: f64 },
    #[error("internal error, built scheme is invalid: {0}")]
    Internal(String),
}

pub(crate) fn exact(x: f64) -> ExactRatio {
    ExactRatio::from_f64(x).expect("finite value")
}

/// One substream tree of a single-rate construction.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateTree {
    pub slots: Range<u32>,
    /// Seeders in breadth-first order, each with its number of children.
    pub members: Vec<(NodeId, u32)>,
    pub leaves: Vec<NodeId>,
}

/// Parent/child pairs of a tree whose members are listed breadth first:
/// member `i` takes the next `c_i` entries of `members[1..] ++ leaves`.
pub(crate) fn tree_edges(members: &[(NodeId, u32)], leaves: &[NodeId]) -> Vec<(NodeId, NodeId)> {
    let mut targets = members.iter().skip(1).map(|&(n, _)| n).chain(leaves.iter().copied());
    let mut edges = Vec::new();
    for &(parent, fanout) in members {
        for child in targets.by_ref().take(fanout as usize) {
            edges.push((parent, child));
        }
    }
    edges
}

/// Leaves needed by a tree: every output not feeding another member.
pub(crate) fn leaf_demand(members: &[(NodeId, u32)]) -> u64 {
    let outputs: u64 = members.iter().map(|&(_, c)| u64::from(c)).sum();
    outputs.saturating_sub(members.len().saturating_sub(1) as u64)
}

/// Next-fit packing of seeders into `trees` substream trees so that no tree
/// needs more than `n_leechers` leaves. Fills every tree with at least
/// `⌊(N_L−1)/(c_max−1)⌋` seeders before moving on.
pub(crate) fn pack_trees(
    seeders: &[(NodeId, u32)],
    trees: u32,
    n_leechers: u32,
    slots_per_tree: u32,
) -> Option<Vec<RateTree>> {
    let mut out: Vec<RateTree> = Vec::new();
    for &member in seeders {
        let fits = out.last().is_some_and(|t| {
            let mut with = t.members.clone();
            with.push(member);
            leaf_demand(&with) <= u64::from(n_leechers)
        });
        if !fits {
            let index = out.len() as u32;
            if index >= trees || u64::from(member.1) > u64::from(n_leechers) {
                return None;
            }
            out.push(RateTree {
                slots: index * slots_per_tree..(index + 1) * slots_per_tree,
                members: Vec::new(),
                leaves: Vec::new(),
            });
        }
        out.last_mut().expect("tree just ensured").members.push(member);
    }
    for t in &mut out {
        t.leaves = (0..leaf_demand(&t.members) as u32).map(NodeId::Leecher).collect();
    }
    Some(out)
}

/// Server feeds each tree root; members forward the tree substream.
pub(crate) fn emit_rate_trees(scheme: &mut DiffusionScheme, trees: &[RateTree]) {
    for t in trees {
        let slots = SlotSet::from_range(t.slots.clone());
        if let Some(&(root, _)) = t.members.first() {
            scheme.send(NodeId::Server, root, &slots);
        }
        for (from, to) in tree_edges(&t.members, &t.leaves) {
            scheme.send(from, to, &slots);
        }
    }
}

/// Has the servers send every leecher the slots it still misses, then checks
/// the result under `model`.
pub(crate) fn complete_and_check(
    params: &StreamParams,
    pop: &Population,
    mut scheme: DiffusionScheme,
    model: Model,
) -> Result<DiffusionScheme, BuildError> {
    let k = scheme.slot_count();
    for l in 0..pop.n_leechers {
        let node = NodeId::Leecher(l);
        let missing = scheme.received(node).complement(k);
        scheme.send(NodeId::Server, node, &missing);
    }
    let report = validate_scheme(params, pop, &scheme, model)?;
    if let Some(v) = report.violations.iter().find(|v| v.kind != ViolationKind::Budget || v.node != NodeId::Server) {
        return Err(BuildError::Internal(format!("{:?} at {}: {}", v.kind, v.node, v.detail)));
    }
    if !report.is_valid() {
        let rate = scheme.slot_rate(params.r);
        let sent = scheme.out_edges(NodeId::Server).map(|(_, slots)| slots.len());
        let (used, budget) = match model {
            Model::Overhead => {
                (sent.map(|n| edge_cost(params, n, rate)).sum(), pop.server_capacity * params.full_stream_cost())
            }
            _ => (sent.map(|n| n as f64 * rate).sum(), pop.server_capacity * params.r),
        };
        return Err(BuildError::ServerCapacity { used, budget });
    }
    Ok(scheme)
}

pub(crate) fn check_slot_count(slot_count: u32) -> Result<(), BuildError> {
    if slot_count == 0 {
        return Err(BuildError::InvalidInput("slot count must be positive".into()));
    }
    Ok(())
}

use serde::Serialize;

use super::{check_slot_count, complete_and_check, emit_rate_trees, exact, pack_trees, BuildError, RateTree};
use crate::analytic::tree_set_bound;
use crate::model::{DiffusionScheme, Model, NodeId, Population, StreamParams};
use crate::ratio::ExactRatio;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HomogeneousPlan {
    /// Common per-connection rate `e`.
    pub rate: f64,
    pub slots_per_substream: u32,
    pub substreams: u32,
    /// `None` when every seeder has a single connection.
    pub max_set_size: Option<u64>,
    pub trees: Vec<RateTree>,
}

/// Smallest slot count in which the common rate of `subset` is a whole
/// number of slots, or `None` when the set is not homogeneous or that count
/// does not fit a `u32`.
pub fn homogeneous_slot_count(params: &StreamParams, pop: &Population, subset: &[u32]) -> Option<u32> {
    let &first = subset.first()?;
    let c = pop.seeders[first as usize].fanout_cap?;
    let per_stream = exact(pop.upload(first)) / ExactRatio::from(u64::from(c)) / exact(params.r);
    u32::try_from(per_stream.denom().clone()).ok()
}

/// Splits the stream into `⌊r/e⌋` substreams of rate `e = u_s/c_s` and builds
/// one tree per substream; every subset member is an internal node with
/// exactly `c_s` children (its fanout cap).
///
/// The rate `e` must be a whole number of slots.
pub fn build_homogeneous_trees(
    params: &StreamParams,
    pop: &Population,
    subset: &[u32],
    slot_count: u32,
) -> Result<(HomogeneousPlan, DiffusionScheme), BuildError> {
    params.check()?;
    pop.check()?;
    pop.check_subset(subset)?;
    check_slot_count(slot_count)?;

    let mut members = Vec::with_capacity(subset.len());
    for &s in subset {
        let spec = &pop.seeders[s as usize];
        let c = spec.fanout_cap.ok_or_else(|| BuildError::InvalidInput(format!("S{s} has no fanout cap")))?;
        if spec.upload <= 0.0 {
            return Err(BuildError::InvalidInput(format!("S{s} has no upload")));
        }
        members.push((NodeId::Seeder(s), c));
    }
    let Some(&(_, c0)) = members.first() else {
        let scheme = complete_and_check(params, pop, DiffusionScheme::new(slot_count), Model::Fanout)?;
        let plan =
            HomogeneousPlan { rate: 0.0, slots_per_substream: 0, substreams: 0, max_set_size: None, trees: vec![] };
        return Ok((plan, scheme));
    };

    let rate = exact(pop.upload(subset[0])) / ExactRatio::from(u64::from(c0));
    for (&s, &(_, c)) in subset.iter().zip(&members) {
        if exact(pop.upload(s)) / ExactRatio::from(u64::from(c)) != rate {
            return Err(BuildError::NotHomogeneous);
        }
    }
    let k = ExactRatio::from(u64::from(slot_count));
    let per_substream = &(&rate * &k) / &exact(params.r);
    if !per_substream.is_integer() || per_substream.is_zero() {
        return Err(BuildError::Granularity(format!(
            "rate {} is {per_substream} slots of {slot_count}",
            rate.to_f64()
        )));
    }
    let m = per_substream.to_u64().and_then(|m| u32::try_from(m).ok()).unwrap_or(u32::MAX);
    let substreams = slot_count / m;
    let c_max = members.iter().map(|&(_, c)| u64::from(c)).max().unwrap_or(1);
    let max_set_size = tree_set_bound(u64::from(pop.n_leechers), c_max, u64::from(substreams));
    if max_set_size.is_some_and(|bound| members.len() as u64 > bound) {
        return Err(BuildError::SetTooLarge { size: members.len(), bound: max_set_size.unwrap_or(0) });
    }
    let trees = pack_trees(&members, substreams, pop.n_leechers, m)
        .ok_or(BuildError::SetTooLarge { size: members.len(), bound: max_set_size.unwrap_or(0) })?;

    let mut scheme = DiffusionScheme::new(slot_count);
    emit_rate_trees(&mut scheme, &trees);
    let scheme = complete_and_check(params, pop, scheme, Model::Fanout)?;
    let plan = HomogeneousPlan { rate: rate.to_f64(), slots_per_substream: m, substreams, max_set_size, trees };
    Ok((plan, scheme))
}

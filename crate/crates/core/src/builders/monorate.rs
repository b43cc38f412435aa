use serde::Serialize;

use super::{check_slot_count, complete_and_check, emit_rate_trees, pack_trees, BuildError, RateTree};
use crate::analytic::tree_set_bound;
use crate::model::{DiffusionScheme, Model, NodeId, Population, StreamParams};
use crate::tol;

/// A common-rate construction. Nominal values use `E = √(b·ū/2)` as is;
/// `*_rounded` values use the rate rounded down to whole slots, which is what
/// the scheme actually carries.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonoRatePlan {
    pub mean_upload: f64,
    /// Per-connection cost `E` including overhead.
    pub connection_cost: f64,
    /// Goodput `e = (E − b)/(1+a)`.
    pub rate: f64,
    pub connection_cost_rounded: f64,
    pub rate_rounded: f64,
    pub slots_per_substream: u32,
    pub substreams: u32,
    /// `(seeder, ⌊u_s/E'⌋)`; seeders with fewer than two connections stay idle.
    pub fanouts: Vec<(NodeId, u32)>,
    pub max_set_size: Option<u64>,
    /// `(1 − √(2b/ū))²/(1+a)`.
    pub lower_bound: f64,
    /// `(1 − √(b/ū))²/(1+a)`.
    pub upper_bound: f64,
    /// `e'/E' − 2e'/ū`, the lower bound with the rounded rate.
    pub lower_bound_rounded: f64,
    /// Set efficiency the unrounded rate would give.
    pub nominal_efficiency: f64,
    pub trees: Vec<RateTree>,
}

/// Every subset member takes one input and `⌊u_s/E'⌋` outputs, all at the
/// common rate derived from the subset's mean upload.
///
/// ```
/// use seedplan::builders::build_monorate;
/// use seedplan::{measure_efficiency, Population, SeederSpec, StreamParams};
///
/// let params = StreamParams::small_overhead();
/// let pop = Population::new(100.0, 100, vec![SeederSpec::new(100.0); 3]).unwrap();
/// let (plan, scheme) = build_monorate(&params, &pop, &[0, 1, 2], 1000).unwrap();
/// assert_eq!(plan.slots_per_substream, 68);
/// let eta = measure_efficiency(&params, &pop, &scheme, &[0, 1, 2]).unwrap().set_efficiency;
/// assert!(plan.lower_bound_rounded < eta && eta <= plan.upper_bound);
/// ```
pub fn build_monorate(
    params: &StreamParams,
    pop: &Population,
    subset: &[u32],
    slot_count: u32,
) -> Result<(MonoRatePlan, DiffusionScheme), BuildError> {
    params.check()?;
    pop.check()?;
    pop.check_subset(subset)?;
    check_slot_count(slot_count)?;
    if params.has_receiver_overhead() {
        return Err(BuildError::InvalidInput("receiver-side overhead is not supported here".into()));
    }
    if subset.is_empty() {
        return Err(BuildError::InvalidInput("empty seeder set".into()));
    }
    let StreamParams { r, a, b, .. } = *params;
    if b <= 0.0 {
        return Err(BuildError::InvalidInput("a common rate needs b > 0".into()));
    }
    let ubar = pop.total_upload(subset) / subset.len() as f64;
    let big_r = params.full_stream_cost();
    let limit = 2.0 * big_r * big_r / b;
    if !tol::leq(ubar, limit) {
        return Err(BuildError::PreconditionUbar { ubar, limit });
    }
    if ubar <= 2.0 * b {
        return Err(BuildError::Granularity(format!("mean upload {ubar} leaves no goodput at E = √(bū/2)")));
    }
    let connection_cost = (b * ubar / 2.0).sqrt();
    let rate = ((connection_cost - b) / (1.0 + a)).min(r);
    let m = tol::floor(rate * f64::from(slot_count) / r) as u32;
    if m == 0 {
        return Err(BuildError::Granularity(format!("rate {rate} is below one slot of {slot_count}")));
    }
    let rate_rounded = f64::from(m) * r / f64::from(slot_count);
    let cost_rounded = rate_rounded + a * rate_rounded + b;
    let substreams = slot_count / m;

    let fanouts: Vec<(NodeId, u32)> =
        subset.iter().map(|&s| (NodeId::Seeder(s), tol::floor(pop.upload(s) / cost_rounded) as u32)).collect();
    let mut active: Vec<(NodeId, u32)> = fanouts.iter().copied().filter(|&(_, c)| c >= 2).collect();
    for member in &mut active {
        member.1 = member.1.min(pop.n_leechers);
    }
    let c_max = active.iter().map(|&(_, c)| u64::from(c)).max().unwrap_or(1);
    let max_set_size = tree_set_bound(u64::from(pop.n_leechers), c_max, u64::from(substreams));
    let too_large = || BuildError::SetTooLarge { size: active.len(), bound: max_set_size.unwrap_or(0) };
    if max_set_size.is_some_and(|bound| active.len() as u64 > bound) {
        return Err(too_large());
    }
    let trees = pack_trees(&active, substreams, pop.n_leechers, m).ok_or_else(too_large)?;

    let total = pop.total_upload(subset);
    let nominal_outputs: f64 =
        subset.iter().map(|&s| (tol::floor(pop.upload(s) / connection_cost) - 1.0).max(0.0)).sum();
    let plan = MonoRatePlan {
        mean_upload: ubar,
        connection_cost,
        rate,
        connection_cost_rounded: cost_rounded,
        rate_rounded,
        slots_per_substream: m,
        substreams,
        fanouts,
        max_set_size,
        lower_bound: (1.0 - (2.0 * b / ubar).sqrt()).powi(2) / (1.0 + a),
        upper_bound: (1.0 - (b / ubar).sqrt()).powi(2) / (1.0 + a),
        lower_bound_rounded: rate_rounded / cost_rounded - 2.0 * rate_rounded / ubar,
        nominal_efficiency: nominal_outputs * rate / total,
        trees,
    };
    let mut scheme = DiffusionScheme::new(slot_count);
    emit_rate_trees(&mut scheme, &plan.trees);
    let scheme = complete_and_check(params, pop, scheme, Model::Overhead)?;
    Ok((plan, scheme))
}

use num::Integer;

use super::{check_slot_count, complete_and_check, exact, BuildError};
use crate::model::{DiffusionScheme, Model, NodeId, Population, StreamParams};
use crate::ratio::ExactRatio;
use crate::slots::SlotSet;

/// Fraction of the stream each subset member receives:
/// `min(u_s/(N_L·r), u_s/U_X)`.
fn shares(params: &StreamParams, pop: &Population, subset: &[u32]) -> Vec<ExactRatio> {
    let total = subset.iter().fold(ExactRatio::zero(), |acc, &s| acc + exact(pop.upload(s)));
    let per_leecher = exact(params.r) * ExactRatio::from(u64::from(pop.n_leechers));
    subset
        .iter()
        .map(|&s| {
            let u = exact(pop.upload(s));
            (&u / &per_leecher).min(&u / &total)
        })
        .collect()
}

/// Smallest slot count making every share a whole number of slots, if it
/// fits in 32 bits.
pub fn perfect_slot_count(params: &StreamParams, pop: &Population, subset: &[u32]) -> Option<u32> {
    if pop.total_upload(subset) <= 0.0 {
        return Some(1);
    }
    let lcm = shares(params, pop, subset).iter().fold(num::BigInt::from(1), |acc, share| acc.lcm(share.denom()));
    u32::try_from(lcm).ok()
}

/// Each subset member receives its own block of slots from the servers and
/// forwards it to every leecher.
///
/// ```
/// use seedplan::builders::build_perfect_broadcast;
/// use seedplan::{measure_efficiency, Population, SeederSpec, StreamParams};
///
/// let params = StreamParams::overhead_free(100.0);
/// let pop = Population::new(4.0, 4, vec![SeederSpec::new(200.0)]).unwrap();
/// let scheme = build_perfect_broadcast(&params, &pop, &[0], 8).unwrap();
/// let report = measure_efficiency(&params, &pop, &scheme, &[0]).unwrap();
/// assert_eq!(report.set_efficiency, 0.75);
/// ```
pub fn build_perfect_broadcast(
    params: &StreamParams,
    pop: &Population,
    subset: &[u32],
    slot_count: u32,
) -> Result<DiffusionScheme, BuildError> {
    params.check()?;
    pop.check()?;
    pop.check_subset(subset)?;
    check_slot_count(slot_count)?;

    let mut scheme = DiffusionScheme::new(slot_count);
    if pop.total_upload(subset) > 0.0 {
        let k = ExactRatio::from(u64::from(slot_count));
        let mut next = 0u32;
        for (&s, share) in subset.iter().zip(shares(params, pop, subset)) {
            let slots = &share * &k;
            let n = slots
                .to_u64()
                .filter(|_| slots.is_integer())
                .ok_or_else(|| BuildError::Granularity(format!("S{s} needs {slots} slots out of {slot_count}")))?
                as u32;
            if n == 0 {
                continue;
            }
            let block = SlotSet::from_range(next..next + n);
            next += n;
            let node = NodeId::Seeder(s);
            scheme.send(NodeId::Server, node, &block);
            for l in 0..pop.n_leechers {
                scheme.send(node, NodeId::Leecher(l), &block);
            }
        }
    }
    complete_and_check(params, pop, scheme, Model::Perfect)
}

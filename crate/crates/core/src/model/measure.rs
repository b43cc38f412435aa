use serde::Serialize;

use super::validate::{check_structure, nodes};
use super::{edge_cost, receiver_cost, DiffusionScheme, ModelError, NodeId, Population, StreamParams};
use crate::ratio::ExactRatio;

/// Bandwidth a node spends in a scheme.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeUsage {
    pub node: NodeId,
    pub goodput_out: f64,
    /// Sender-side cost, `Σ (1+a)e + b` over non-empty out-edges.
    pub sender_cost: f64,
    /// Receiver-side cost, `Σ a_r·e + b_r` over non-empty in-edges.
    pub receiver_cost: f64,
    pub fanout: u32,
}

pub(crate) fn node_usage(params: &StreamParams, scheme: &DiffusionScheme, node: NodeId) -> NodeUsage {
    let rate = scheme.slot_rate(params.r);
    let mut u = NodeUsage { node, goodput_out: 0.0, sender_cost: 0.0, receiver_cost: 0.0, fanout: 0 };
    for (_, slots) in scheme.out_edges(node) {
        let n = slots.len();
        u.goodput_out += n as f64 * rate;
        u.sender_cost += edge_cost(params, n, rate);
        u.fanout += 1;
    }
    for (_, slots) in scheme.in_edges(node) {
        u.receiver_cost += receiver_cost(params, slots.len(), rate);
    }
    u
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeederEfficiency {
    pub seeder: NodeId,
    pub input_slots: u64,
    pub output_slots: u64,
    pub input_rate: f64,
    pub output_rate: f64,
    pub fanout: u32,
    /// `None` when the seeder has no upload.
    pub eta: Option<f64>,
    pub eta_exact: Option<ExactRatio>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EfficiencyReport {
    pub slot_count: u32,
    pub per_seeder: Vec<SeederEfficiency>,
    pub subset: Vec<NodeId>,
    pub total_upload: f64,
    /// Boundary form: output leaving the subset minus input entering it, over `U_X`.
    pub set_efficiency: f64,
    pub set_efficiency_exact: ExactRatio,
    pub bandwidth_used: Vec<NodeUsage>,
}

impl EfficiencyReport {
    pub fn seeder(&self, s: u32) -> &SeederEfficiency {
        &self.per_seeder[s as usize]
    }
}

fn exact(x: f64) -> ExactRatio {
    ExactRatio::from_f64(x).expect("finite value")
}

/// Per-seeder `η = (Σ out − i_s)/u_s` and the subset's boundary efficiency,
/// counted in whole slots and converted to rates at the end. Does not
/// re-validate the scheme.
pub fn measure_efficiency(
    params: &StreamParams,
    pop: &Population,
    scheme: &DiffusionScheme,
    subset: &[u32],
) -> Result<EfficiencyReport, ModelError> {
    params.check()?;
    pop.check()?;
    pop.check_subset(subset)?;
    check_structure(pop, scheme)?;

    let k = scheme.slot_count();
    let rate = scheme.slot_rate(params.r);
    // r/K exactly, from the exact value of r
    let exact_rate = exact(params.r) / ExactRatio::from(u64::from(k));

    let per_seeder = (0..pop.n_seeders())
        .map(|s| {
            let node = NodeId::Seeder(s);
            let input_slots: u64 = scheme.in_edges(node).map(|(_, x)| x.len()).sum();
            let output_slots: u64 = scheme.out_edges(node).map(|(_, x)| x.len()).sum();
            let fanout = scheme.out_edges(node).count() as u32;
            let u = pop.upload(s);
            let net = ExactRatio::from(output_slots) - ExactRatio::from(input_slots);
            let eta_exact = (u > 0.0).then(|| &(&net * &exact_rate) / &exact(u));
            SeederEfficiency {
                seeder: node,
                input_slots,
                output_slots,
                input_rate: input_slots as f64 * rate,
                output_rate: output_slots as f64 * rate,
                fanout,
                eta: eta_exact.as_ref().map(ExactRatio::to_f64),
                eta_exact,
            }
        })
        .collect();

    let in_subset = |n: NodeId| matches!(n, NodeId::Seeder(s) if subset.contains(&s));
    let (mut leaving, mut entering) = (0u64, 0u64);
    for (from, to, slots) in scheme.edges() {
        match (in_subset(from), in_subset(to)) {
            (true, false) => leaving += slots.len(),
            (false, true) => entering += slots.len(),
            _ => {}
        }
    }
    let total_upload = pop.total_upload(subset);
    if total_upload <= 0.0 {
        return Err(ModelError::ZeroUpload("the subset has no upload, its efficiency is undefined".into()));
    }
    let exact_total: ExactRatio = subset.iter().fold(ExactRatio::zero(), |acc, &s| acc + exact(pop.upload(s)));
    let net = ExactRatio::from(leaving) - ExactRatio::from(entering);
    let set_efficiency_exact = &(&net * &exact_rate) / &exact_total;

    Ok(EfficiencyReport {
        slot_count: k,
        per_seeder,
        subset: subset.iter().map(|&s| NodeId::Seeder(s)).collect(),
        total_upload,
        set_efficiency: set_efficiency_exact.to_f64(),
        set_efficiency_exact,
        bandwidth_used: nodes(pop).map(|n| node_usage(params, scheme, n)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_scheme, Model, SeederSpec};
    use crate::slots::SlotSet;
    use proptest::prelude::*;

    #[test]
    fn half_input_two_half_outputs() {
        let params = StreamParams::overhead_free(100.0);
        let pop = Population::new(2.0, 2, vec![SeederSpec::new(100.0)]).unwrap();
        let mut s = DiffusionScheme::new(2);
        let half = SlotSet::from_range(0..1);
        s.send(NodeId::Server, NodeId::Seeder(0), &half);
        s.send(NodeId::Seeder(0), NodeId::Leecher(0), &half);
        s.send(NodeId::Seeder(0), NodeId::Leecher(1), &half);
        s.send(NodeId::Server, NodeId::Leecher(0), &SlotSet::from_range(1..2));
        s.send(NodeId::Server, NodeId::Leecher(1), &SlotSet::from_range(1..2));
        assert!(validate_scheme(&params, &pop, &s, Model::Perfect).unwrap().is_valid());
        let rep = measure_efficiency(&params, &pop, &s, &[0]).unwrap();
        // (r − r/2)/u
        assert_eq!(rep.seeder(0).eta_exact, Some(ExactRatio::new(1, 2)));
        assert_eq!(rep.set_efficiency_exact, ExactRatio::new(1, 2));
        assert_eq!(rep.seeder(0).fanout, 2);
    }

    #[test]
    fn idle_seeder_has_zero_efficiency() {
        let params = StreamParams::overhead_free(100.0);
        let pop = Population::new(1.0, 1, vec![SeederSpec::new(50.0), SeederSpec::new(0.0)]).unwrap();
        let mut s = DiffusionScheme::new(1);
        s.send(NodeId::Server, NodeId::Leecher(0), &SlotSet::full(1));
        let rep = measure_efficiency(&params, &pop, &s, &[0, 1]).unwrap();
        assert_eq!(rep.seeder(0).eta, Some(0.0));
        // zero-upload member: individual efficiency undefined, set form still fine
        assert_eq!(rep.seeder(1).eta, None);
        assert_eq!(rep.set_efficiency, 0.0);
        assert!(matches!(measure_efficiency(&params, &pop, &s, &[1]), Err(ModelError::ZeroUpload(_))));
        assert!(matches!(measure_efficiency(&params, &pop, &s, &[]), Err(ModelError::ZeroUpload(_))));
    }

    /// Random scheme over 3 seeders / 3 leechers with arbitrary edges: the
    /// measurement identities do not need validity.
    fn arb_scheme() -> impl Strategy<Value = (Vec<f64>, DiffusionScheme)> {
        let nodes = prop::sample::select(vec![
            NodeId::Server,
            NodeId::Leecher(0),
            NodeId::Leecher(1),
            NodeId::Leecher(2),
            NodeId::Seeder(0),
            NodeId::Seeder(1),
            NodeId::Seeder(2),
        ]);
        let edge = (nodes.clone(), nodes, prop::collection::vec(0u32..8, 1..5));
        (prop::collection::vec(1u32..400, 3), prop::collection::vec(edge, 0..20)).prop_map(|(ups, edges)| {
            let mut s = DiffusionScheme::new(8);
            for (f, t, sl) in edges {
                if f != t && t != NodeId::Server {
                    s.send(f, t, &sl.into_iter().collect());
                }
            }
            (ups.into_iter().map(|u| f64::from(u) / 4.0).collect(), s)
        })
    }

    proptest! {
        #[test]
        fn boundary_form_equals_weighted_mean((ups, scheme) in arb_scheme(), mask in 1u8..8) {
            let params = StreamParams::overhead_free(100.0);
            let pop = Population::new(3.0, 3, ups.iter().map(|&u| SeederSpec::new(u)).collect()).unwrap();
            let subset: Vec<u32> = (0..3).filter(|i| mask & (1 << i) != 0).collect();
            let rep = measure_efficiency(&params, &pop, &scheme, &subset).unwrap();
            let weighted = subset.iter().fold(ExactRatio::zero(), |acc, &s| {
                acc + rep.seeder(s).eta_exact.clone().unwrap() * ExactRatio::from_f64(ups[s as usize]).unwrap()
            });
            let total = subset.iter().fold(ExactRatio::zero(), |acc, &s| acc + ExactRatio::from_f64(ups[s as usize]).unwrap());
            prop_assert_eq!(&rep.set_efficiency_exact, &(&weighted / &total));

            // rebuilding the scheme edge by edge changes nothing
            let mut copy = DiffusionScheme::new(scheme.slot_count());
            for (f, t, sl) in scheme.edges() {
                copy.send(f, t, &sl.clone());
            }
            prop_assert_eq!(measure_efficiency(&params, &pop, &copy, &subset).unwrap(), rep);
        }

        #[test]
        fn perfect_equals_overhead_free_overhead((ups, scheme) in arb_scheme()) {
            let pop = Population::new(3.0, 3, ups.iter().map(|&u| SeederSpec::new(u)).collect()).unwrap();
            let params = StreamParams::overhead_free(100.0);
            let perfect = validate_scheme(&params, &pop, &scheme, Model::Perfect).unwrap();
            let overhead = validate_scheme(&params, &pop, &scheme, Model::Overhead).unwrap();
            prop_assert_eq!(perfect.is_valid(), overhead.is_valid());
            prop_assert_eq!(perfect.violations, overhead.violations);
        }
    }
}

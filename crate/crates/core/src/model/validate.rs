use std::collections::BTreeMap;

use serde::Serialize;

use super::measure::node_usage;
use super::{DiffusionScheme, Model, ModelError, NodeId, Population, StreamParams};
use crate::slots::SlotSet;
use crate::tol;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationKind {
    Possession,
    Overlap,
    IncompleteLeecher,
    Budget,
    Fanout,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub node: NodeId,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub model: Model,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first(&self) -> Option<&Violation> {
        self.violations.first()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

/// Every node of the population, in id order.
pub(crate) fn nodes(pop: &Population) -> impl Iterator<Item = NodeId> {
    std::iter::once(NodeId::Server)
        .chain((0..pop.n_leechers).map(NodeId::Leecher))
        .chain((0..pop.n_seeders()).map(NodeId::Seeder))
}

pub(crate) fn check_structure(pop: &Population, scheme: &DiffusionScheme) -> Result<(), ModelError> {
    let known = |n: NodeId| match n {
        NodeId::Server => true,
        NodeId::Leecher(i) => i < pop.n_leechers,
        NodeId::Seeder(i) => i < pop.n_seeders(),
    };
    for (from, to, slots) in scheme.edges() {
        for n in [from, to] {
            if !known(n) {
                return Err(ModelError::UnknownNode(n.to_string()));
            }
        }
        if from == to {
            return Err(ModelError::MalformedScheme(format!("self-loop on {from}")));
        }
        if to == NodeId::Server {
            return Err(ModelError::MalformedScheme(format!("edge {from} -> server")));
        }
        if slots.max().is_some_and(|m| m >= scheme.slot_count()) {
            return Err(ModelError::MalformedScheme(format!(
                "edge {from} -> {to} uses a slot >= {}",
                scheme.slot_count()
            )));
        }
    }
    Ok(())
}

/// Slots each node actually holds: those reachable from the server along
/// edges carrying them. Slots passed around a cycle of seeders that no one
/// fed are not held.
pub(crate) fn possession(pop: &Population, scheme: &DiffusionScheme) -> BTreeMap<NodeId, SlotSet> {
    let mut held: BTreeMap<NodeId, SlotSet> = nodes(pop).map(|n| (n, SlotSet::new())).collect();
    held.insert(NodeId::Server, SlotSet::full(scheme.slot_count()));
    let mut changed = true;
    while changed {
        changed = false;
        for (from, to, slots) in scheme.edges() {
            let gained = slots.intersection(&held[&from]).difference(&held[&to]);
            if !gained.is_empty() {
                held.get_mut(&to).expect("known node").union_with(&gained);
                changed = true;
            }
        }
    }
    held
}

/// Checks possession, disjoint inputs, leecher completeness, upload budgets
/// and (fanout model) connection caps. Violations are reported, not raised;
/// an `Err` means the scheme does not even describe this population.
pub fn validate_scheme(
    params: &StreamParams,
    pop: &Population,
    scheme: &DiffusionScheme,
    model: Model,
) -> Result<ValidationReport, ModelError> {
    params.check()?;
    pop.check()?;
    check_structure(pop, scheme)?;

    let k = scheme.slot_count();
    let mut violations = Vec::new();
    let mut push = |kind, node, detail: String| violations.push(Violation { kind, node, detail });

    let held = possession(pop, scheme);
    for node in nodes(pop).filter(|n| *n != NodeId::Server) {
        let have = &held[&node];
        for (to, slots) in scheme.out_edges(node) {
            let missing = slots.difference(have);
            if let Some(slot) = missing.first() {
                push(
                    ViolationKind::Possession,
                    node,
                    format!("forwards slot {slot} to {to} without receiving it ({} slots missing)", missing.len()),
                );
            }
        }
    }

    for node in nodes(pop) {
        let inputs: Vec<_> = scheme.in_edges(node).collect();
        'pairs: for (i, (a, sa)) in inputs.iter().enumerate() {
            for (b, sb) in &inputs[i + 1..] {
                if let Some(slot) = sa.intersection(sb).first() {
                    push(ViolationKind::Overlap, node, format!("slot {slot} received from both {a} and {b}"));
                    break 'pairs;
                }
            }
        }
    }

    for l in 0..pop.n_leechers {
        let node = NodeId::Leecher(l);
        let got = scheme.received(node);
        if got.len() != u64::from(k) {
            let gap = got.complement(k);
            push(
                ViolationKind::IncompleteLeecher,
                node,
                format!("receives {} of {k} slots, first missing slot {}", got.len(), gap.first().unwrap_or(0)),
            );
        }
    }

    for node in nodes(pop) {
        let usage = node_usage(params, scheme, node);
        let (used, budget) = match model {
            Model::Perfect | Model::Fanout => (usage.goodput_out, goodput_budget(params, pop, node)),
            Model::Overhead => {
                let used = match node {
                    NodeId::Seeder(_) => usage.sender_cost + usage.receiver_cost,
                    _ => usage.sender_cost,
                };
                (used, overhead_budget(params, pop, node))
            }
        };
        if !tol::leq(used, budget) {
            push(ViolationKind::Budget, node, format!("uses {used} of {budget}"));
        }
        if model == Model::Fanout {
            if let NodeId::Seeder(s) = node {
                if let Some(cap) = pop.seeders[s as usize].fanout_cap {
                    if usage.fanout > cap {
                        push(ViolationKind::Fanout, node, format!("{} connections, cap {cap}", usage.fanout));
                    }
                }
            }
        }
    }

    Ok(ValidationReport { model, violations })
}

fn goodput_budget(params: &StreamParams, pop: &Population, node: NodeId) -> f64 {
    match node {
        NodeId::Server => pop.server_capacity * params.r,
        NodeId::Leecher(_) => 0.0,
        NodeId::Seeder(s) => pop.upload(s),
    }
}

fn overhead_budget(params: &StreamParams, pop: &Population, node: NodeId) -> f64 {
    match node {
        NodeId::Server => pop.server_capacity * params.full_stream_cost(),
        NodeId::Leecher(_) => 0.0,
        NodeId::Seeder(s) => pop.upload(s),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SeederSpec;

    fn small() -> (StreamParams, Population) {
        let params = StreamParams::small_overhead();
        let pop = Population::new(2.0, 2, vec![SeederSpec::with_fanout(200.0, 2)]).unwrap();
        (params, pop)
    }

    #[test]
    fn direct_unicast_passes() {
        let params = StreamParams::small_overhead();
        let pop = Population::new(1.0, 1, vec![]).unwrap();
        let mut s = DiffusionScheme::new(4);
        s.send(NodeId::Server, NodeId::Leecher(0), &SlotSet::full(4));
        for model in [Model::Perfect, Model::Fanout, Model::Overhead] {
            assert!(validate_scheme(&params, &pop, &s, model).unwrap().is_valid());
        }
    }

    #[test]
    fn forwarding_unreceived_slot_is_possession() {
        let (params, pop) = small();
        let mut s = DiffusionScheme::new(4);
        s.send(NodeId::Server, NodeId::Seeder(0), &SlotSet::from_range(0..1));
        s.send(NodeId::Seeder(0), NodeId::Leecher(0), &SlotSet::from_range(0..2));
        s.send(NodeId::Server, NodeId::Leecher(0), &SlotSet::from_range(2..4));
        s.send(NodeId::Server, NodeId::Leecher(1), &SlotSet::full(4));
        let rep = validate_scheme(&params, &pop, &s, Model::Perfect).unwrap();
        assert_eq!(rep.first().unwrap().kind, ViolationKind::Possession);
        assert_eq!(rep.first().unwrap().node, NodeId::Seeder(0));
    }

    #[test]
    fn unfed_cycle_holds_nothing() {
        let params = StreamParams::overhead_free(100.0);
        let pop = Population::new(1.0, 1, vec![SeederSpec::new(100.0), SeederSpec::new(100.0)]).unwrap();
        let mut s = DiffusionScheme::new(2);
        let first = SlotSet::from_range(0..1);
        s.send(NodeId::Seeder(0), NodeId::Seeder(1), &first);
        s.send(NodeId::Seeder(1), NodeId::Seeder(0), &first);
        s.send(NodeId::Seeder(0), NodeId::Leecher(0), &first);
        s.send(NodeId::Server, NodeId::Leecher(0), &SlotSet::from_range(1..2));
        let rep = validate_scheme(&params, &pop, &s, Model::Perfect).unwrap();
        assert!(rep.has(ViolationKind::Possession));
        assert!(rep.violations.iter().all(|v| v.kind == ViolationKind::Possession));
        // feeding the cycle from the server makes it legitimate
        s.send(NodeId::Server, NodeId::Seeder(0), &first);
        s.remove_edge(NodeId::Seeder(1), NodeId::Seeder(0));
        assert!(validate_scheme(&params, &pop, &s, Model::Perfect).unwrap().is_valid());
    }

    #[test]
    fn slot_from_two_senders_is_overlap() {
        let (params, pop) = small();
        let mut s = DiffusionScheme::new(4);
        s.send(NodeId::Server, NodeId::Seeder(0), &SlotSet::from_range(3..4));
        s.send(NodeId::Seeder(0), NodeId::Leecher(0), &SlotSet::from_range(3..4));
        s.send(NodeId::Server, NodeId::Leecher(0), &SlotSet::full(4));
        s.send(NodeId::Server, NodeId::Leecher(1), &SlotSet::full(4));
        let rep = validate_scheme(&params, &pop, &s, Model::Perfect).unwrap();
        let v = rep.first().unwrap();
        assert_eq!((v.kind, v.node), (ViolationKind::Overlap, NodeId::Leecher(0)));
        assert!(v.detail.contains("slot 3"));
    }

    #[test]
    fn missing_slot_is_incomplete() {
        let (params, pop) = small();
        let mut s = DiffusionScheme::new(4);
        s.send(NodeId::Server, NodeId::Leecher(0), &SlotSet::from_range(0..3));
        s.send(NodeId::Server, NodeId::Leecher(1), &SlotSet::full(4));
        let rep = validate_scheme(&params, &pop, &s, Model::Perfect).unwrap();
        assert!(rep.has(ViolationKind::IncompleteLeecher));
        assert_eq!(rep.violations.len(), 1);
    }

    #[test]
    fn budget_depends_on_model() {
        let params = StreamParams::small_overhead();
        // 100 of goodput to each of two leechers: fine without overhead,
        // 2 · 111.7 > 200 with it.
        let pop = Population::new(2.0, 2, vec![SeederSpec::with_fanout(200.0, 1)]).unwrap();
        let mut s = DiffusionScheme::new(1);
        s.send(NodeId::Server, NodeId::Seeder(0), &SlotSet::full(1));
        s.send(NodeId::Seeder(0), NodeId::Leecher(0), &SlotSet::full(1));
        s.send(NodeId::Seeder(0), NodeId::Leecher(1), &SlotSet::full(1));
        assert!(validate_scheme(&params, &pop, &s, Model::Perfect).unwrap().is_valid());
        let fan = validate_scheme(&params, &pop, &s, Model::Fanout).unwrap();
        assert_eq!(fan.first().unwrap().kind, ViolationKind::Fanout);
        let over = validate_scheme(&params, &pop, &s, Model::Overhead).unwrap();
        assert_eq!(over.first().unwrap().kind, ViolationKind::Budget);
    }

    #[test]
    fn leechers_cannot_upload() {
        let params = StreamParams::overhead_free(1.0);
        let pop = Population::new(1.0, 2, vec![]).unwrap();
        let mut s = DiffusionScheme::new(1);
        s.send(NodeId::Server, NodeId::Leecher(0), &SlotSet::full(1));
        s.send(NodeId::Leecher(0), NodeId::Leecher(1), &SlotSet::full(1));
        let rep = validate_scheme(&params, &pop, &s, Model::Perfect).unwrap();
        assert_eq!(rep.first().unwrap().kind, ViolationKind::Budget);
        assert_eq!(rep.first().unwrap().node, NodeId::Leecher(0));
    }

    #[test]
    fn structural_errors() {
        let (params, pop) = small();
        let mut s = DiffusionScheme::new(2);
        s.send(NodeId::Server, NodeId::Leecher(5), &SlotSet::full(2));
        assert!(matches!(validate_scheme(&params, &pop, &s, Model::Perfect), Err(ModelError::UnknownNode(_))));
        let mut s = DiffusionScheme::new(2);
        s.send(NodeId::Seeder(0), NodeId::Server, &SlotSet::full(2));
        assert!(validate_scheme(&params, &pop, &s, Model::Perfect).is_err());
        let mut s = DiffusionScheme::new(2);
        s.send(NodeId::Server, NodeId::Leecher(0), &SlotSet::from_range(0..3));
        assert!(validate_scheme(&params, &pop, &s, Model::Perfect).is_err());
    }

    #[test]
    fn receiver_overhead_is_charged_to_seeders() {
        let params = StreamParams::with_receiver(100.0, 0.0, 10.0, 0.0, 5.0).unwrap();
        // one output of the full stream costs 110; the input adds 5
        let pop = Population::new(2.0, 1, vec![SeederSpec::new(112.0)]).unwrap();
        let mut s = DiffusionScheme::new(1);
        s.send(NodeId::Server, NodeId::Seeder(0), &SlotSet::full(1));
        s.send(NodeId::Seeder(0), NodeId::Leecher(0), &SlotSet::full(1));
        let rep = validate_scheme(&params, &pop, &s, Model::Overhead).unwrap();
        assert_eq!(rep.first().unwrap().kind, ViolationKind::Budget);
        let relaxed = StreamParams::new(100.0, 0.0, 10.0).unwrap();
        assert!(validate_scheme(&relaxed, &pop, &s, Model::Overhead).unwrap().is_valid());
    }
}

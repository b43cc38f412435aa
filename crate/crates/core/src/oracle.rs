//! Exhaustive search for the best scheme on tiny populations.
//!
//! Slots are interchangeable, so a scheme is a multiset of per-slot
//! distribution patterns: for one slot, who gets it from whom. The search
//! enumerates those multisets with branch and bound, checking every budget
//! in exact rational arithmetic.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::model::{DiffusionScheme, Model, ModelError, NodeId, Population, SeederSpec, StreamParams};
use crate::ratio::ExactRatio;
use crate::slots::SlotSet;

pub const MAX_NODES: usize = 7;
pub const MAX_SLOTS: u32 = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(
        "instance too large for exhaustive search: {nodes} nodes (max {MAX_NODES}), {slots} slots (max {MAX_SLOTS})"
    )]
    TooLarge { nodes: usize, slots: u32 },
    #[error("no scheme satisfies every constraint")]
    Infeasible,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleResult {
    pub best_efficiency: ExactRatio,
    pub witness: DiffusionScheme,
    /// Search-tree nodes visited.
    pub search_nodes: u64,
    /// Distinct per-slot patterns considered.
    pub patterns: usize,
    pub slot_count: u32,
}

fn exact(x: f64) -> ExactRatio {
    ExactRatio::from_f64(x).expect("finite value")
}

/// Dense node numbering: server 0, leechers `1..=N_L`, then seeders.
struct Layout {
    n_leechers: usize,
    n_seeders: usize,
}

impl Layout {
    fn len(&self) -> usize {
        1 + self.n_leechers + self.n_seeders
    }
    fn seeder(&self, s: usize) -> usize {
        1 + self.n_leechers + s
    }
    fn id(&self, i: usize) -> NodeId {
        match i {
            0 => NodeId::Server,
            i if i <= self.n_leechers => NodeId::Leecher((i - 1) as u32),
            i => NodeId::Seeder((i - 1 - self.n_leechers) as u32),
        }
    }
}

struct Pattern {
    edges: Vec<(usize, usize)>,
    contribution: i64,
}

/// Every way one slot can travel: seeders get it from the server or from a
/// holding seeder (no cycles), each leecher from the server or a holder, and
/// every holding seeder forwards it at least once.
fn patterns(layout: &Layout, in_subset: &[bool]) -> Vec<Pattern> {
    let ns = layout.n_seeders;
    let mut out = Vec::new();
    // parent choice per seeder: 0 = none, 1 = server, 2 + t = seeder t
    let mut choice = vec![0usize; ns];
    loop {
        if let Some(order) = holding_order(&choice) {
            let holders: Vec<usize> = order.clone();
            let mut leecher_choice = vec![0usize; layout.n_leechers];
            loop {
                let mut edges = Vec::new();
                for &s in &order {
                    let parent = if choice[s] == 1 { 0 } else { layout.seeder(choice[s] - 2) };
                    edges.push((parent, layout.seeder(s)));
                }
                for (l, &c) in leecher_choice.iter().enumerate() {
                    let parent = if c == 0 { 0 } else { layout.seeder(holders[c - 1]) };
                    edges.push((parent, 1 + l));
                }
                let forwards = |s: usize| edges.iter().any(|&(p, _)| p == layout.seeder(s));
                if holders.iter().all(|&s| forwards(s)) {
                    let contribution =
                        edges.iter().map(|&(p, c)| i64::from(in_subset[p]) - i64::from(in_subset[c])).sum();
                    out.push(Pattern { edges, contribution });
                }
                if !advance(&mut leecher_choice, holders.len() + 1) {
                    break;
                }
            }
        }
        if !advance(&mut choice, ns + 2) {
            break;
        }
    }
    out
}

/// Seeders holding the slot, parents before children, or `None` when the
/// choice contains a cycle or a self-feed.
fn holding_order(choice: &[usize]) -> Option<Vec<usize>> {
    let mut order = Vec::new();
    let mut placed = vec![false; choice.len()];
    loop {
        let before = order.len();
        for s in 0..choice.len() {
            if placed[s] || choice[s] == 0 {
                continue;
            }
            if choice[s] == 1 || placed[choice[s] - 2] {
                placed[s] = true;
                order.push(s);
            }
        }
        if order.len() == before {
            break;
        }
    }
    let wanted = choice.iter().filter(|&&c| c != 0).count();
    (order.len() == wanted).then_some(order)
}

/// Odometer increment over `digits` in base `base`; false after wrapping.
fn advance(digits: &mut [usize], base: usize) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

/// Budget rule of one node as a function of its edge and slot counts.
struct Budget {
    node: usize,
    model: Model,
    /// Exact budget, in the units of the model.
    limit: ExactRatio,
    /// Goodput per slot, `(1+a)·r/K` per slot, `b` per edge.
    per_slot: ExactRatio,
    per_edge: ExactRatio,
    recv_per_slot: ExactRatio,
    recv_per_edge: ExactRatio,
    fanout_cap: Option<u32>,
    limit_f64: f64,
    per_slot_f64: f64,
    cache: HashMap<(u32, u32, u32, u32), bool>,
}

impl Budget {
    fn fits(&mut self, c: &Counts) -> bool {
        let v = self.node;
        if self.fanout_cap.is_some_and(|cap| c.out_edges[v] > cap) {
            return false;
        }
        let key = match self.model {
            Model::Overhead => (c.out_slots[v], c.out_edges[v], c.in_slots[v], c.in_edges[v]),
            _ => (c.out_slots[v], 0, 0, 0),
        };
        let (limit, ps, pe, rs, re) =
            (&self.limit, &self.per_slot, &self.per_edge, &self.recv_per_slot, &self.recv_per_edge);
        *self.cache.entry(key).or_insert_with(|| {
            let used = ps * &ExactRatio::from(u64::from(key.0))
                + pe * &ExactRatio::from(u64::from(key.1))
                + rs * &ExactRatio::from(u64::from(key.2))
                + re * &ExactRatio::from(u64::from(key.3));
            used <= *limit
        })
    }

    /// Generous bound on further slots this node can still send.
    fn spare_slots(&self, c: &Counts) -> i64 {
        let v = self.node;
        let used = self.per_slot_f64 * f64::from(c.out_slots[v])
            + match self.model {
                Model::Overhead => self.per_edge.to_f64() * f64::from(c.out_edges[v]),
                _ => 0.0,
            };
        if self.per_slot_f64 <= 0.0 {
            return i64::MAX / 4;
        }
        (((self.limit_f64 - used) / self.per_slot_f64) * (1.0 + 1e-9) + 1e-9).floor().max(0.0) as i64
    }
}

struct Counts {
    edge: Vec<u32>,
    out_slots: Vec<u32>,
    out_edges: Vec<u32>,
    in_slots: Vec<u32>,
    in_edges: Vec<u32>,
}

impl Counts {
    fn new(n: usize) -> Self {
        Counts {
            edge: vec![0; n * n],
            out_slots: vec![0; n],
            out_edges: vec![0; n],
            in_slots: vec![0; n],
            in_edges: vec![0; n],
        }
    }

    fn apply(&mut self, n: usize, p: &Pattern, add: bool) {
        for &(from, to) in &p.edges {
            let e = &mut self.edge[from * n + to];
            if add {
                if *e == 0 {
                    self.out_edges[from] += 1;
                    self.in_edges[to] += 1;
                }
                *e += 1;
                self.out_slots[from] += 1;
                self.in_slots[to] += 1;
            } else {
                *e -= 1;
                if *e == 0 {
                    self.out_edges[from] -= 1;
                    self.in_edges[to] -= 1;
                }
                self.out_slots[from] -= 1;
                self.in_slots[to] -= 1;
            }
        }
    }
}

struct Search<'a> {
    n: usize,
    patterns: &'a [Pattern],
    /// Budget rules, indexed by node; leechers have none.
    budgets: Vec<Option<Budget>>,
    subset_nodes: Vec<usize>,
    counts: Counts,
    chosen: Vec<usize>,
    best: Option<(i64, Vec<usize>)>,
    visited: u64,
}

impl Search<'_> {
    fn feasible(&mut self, p: usize) -> bool {
        let pattern = &self.patterns[p];
        for &(from, to) in &pattern.edges {
            for v in [from, to] {
                if let Some(b) = self.budgets[v].as_mut() {
                    if !b.fits(&self.counts) {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn capacity_bound(&self) -> i64 {
        self.subset_nodes
            .iter()
            .map(|&v| self.budgets[v].as_ref().map_or(0, |b| b.spare_slots(&self.counts)))
            .fold(0i64, |acc, x| acc.saturating_add(x))
    }

    fn run(&mut self, start: usize, remaining: u32, current: i64) {
        self.visited += 1;
        if remaining == 0 {
            if self.best.as_ref().is_none_or(|(b, _)| current > *b) {
                self.best = Some((current, self.chosen.clone()));
            }
            return;
        }
        let ceiling = current + self.capacity_bound();
        for p in start..self.patterns.len() {
            let optimistic = current + i64::from(remaining) * self.patterns[p].contribution;
            if let Some((best, _)) = &self.best {
                if optimistic.min(ceiling) <= *best {
                    break;
                }
            }
            self.counts.apply(self.n, &self.patterns[p], true);
            if self.feasible(p) {
                self.chosen.push(p);
                self.run(p, remaining - 1, current + self.patterns[p].contribution);
                self.chosen.pop();
            }
            self.counts.apply(self.n, &self.patterns[p], false);
        }
    }
}

/// Best subset efficiency over every scheme with `slot_count` slots, as an
/// exact rational, with a scheme reaching it.
pub fn oracle_optimal(
    params: &StreamParams,
    pop: &Population,
    subset: &[u32],
    model: Model,
    slot_count: u32,
) -> Result<OracleResult, OracleError> {
    params.check()?;
    pop.check()?;
    pop.check_subset(subset)?;
    let layout = Layout { n_leechers: pop.n_leechers as usize, n_seeders: pop.seeders.len() };
    let n = layout.len();
    if n > MAX_NODES || slot_count > MAX_SLOTS || slot_count == 0 {
        return Err(OracleError::TooLarge { nodes: n, slots: slot_count });
    }
    let total = subset.iter().fold(ExactRatio::zero(), |acc, &s| acc + exact(pop.upload(s)));
    if total.is_zero() {
        return Err(ModelError::ZeroUpload("the subset has no upload, its efficiency is undefined".into()).into());
    }

    let mut in_subset = vec![false; n];
    for &s in subset {
        in_subset[layout.seeder(s as usize)] = true;
    }
    let mut pats = patterns(&layout, &in_subset);
    pats.sort_by(|x, y| y.contribution.cmp(&x.contribution).then_with(|| x.edges.cmp(&y.edges)));

    let slot_rate = exact(params.r) / ExactRatio::from(u64::from(slot_count));
    let one_plus_a = ExactRatio::one() + exact(params.a);
    let budget = |node: usize, limit: ExactRatio, cap: Option<u32>| {
        let overhead = model == Model::Overhead;
        let per_slot = if overhead { &one_plus_a * &slot_rate } else { slot_rate.clone() };
        let seeder = node > layout.n_leechers;
        let (recv_per_slot, recv_per_edge) = if overhead && seeder {
            (exact(params.a_r) * slot_rate.clone(), exact(params.b_r))
        } else {
            (ExactRatio::zero(), ExactRatio::zero())
        };
        Budget {
            node,
            model,
            limit_f64: limit.to_f64(),
            per_slot_f64: per_slot.to_f64(),
            limit,
            per_slot,
            per_edge: if overhead { exact(params.b) } else { ExactRatio::zero() },
            recv_per_slot,
            recv_per_edge,
            fanout_cap: if model == Model::Fanout { cap } else { None },
            cache: HashMap::new(),
        }
    };
    let mut budgets: Vec<Option<Budget>> = (0..n).map(|_| None).collect();
    let server_unit = if model == Model::Overhead { exact(params.full_stream_cost()) } else { exact(params.r) };
    budgets[0] = Some(budget(0, exact(pop.server_capacity) * server_unit, None));
    for (s, spec) in pop.seeders.iter().enumerate() {
        let v = layout.seeder(s);
        budgets[v] = Some(budget(v, exact(spec.upload), spec.fanout_cap));
    }

    let mut search = Search {
        n,
        patterns: &pats,
        budgets,
        subset_nodes: subset.iter().map(|&s| layout.seeder(s as usize)).collect(),
        counts: Counts::new(n),
        chosen: Vec::new(),
        best: None,
        visited: 0,
    };
    search.run(0, slot_count, 0);
    let (best, chosen) = search.best.ok_or(OracleError::Infeasible)?;

    let mut witness = DiffusionScheme::new(slot_count);
    for (slot, &p) in chosen.iter().enumerate() {
        let one = SlotSet::from_range(slot as u32..slot as u32 + 1);
        for &(from, to) in &pats[p].edges {
            witness.send(layout.id(from), layout.id(to), &one);
        }
    }
    Ok(OracleResult {
        best_efficiency: &(&ExactRatio::from_integer(best) * &slot_rate) / &total,
        witness,
        search_nodes: search.visited,
        patterns: pats.len(),
        slot_count,
    })
}

/// One seeder of upload `u` limited to `c` connections, `n_leechers`
/// leechers and one server copy per leecher.
pub fn oracle_single_fanout(
    u: f64,
    c: u32,
    r: f64,
    n_leechers: u32,
    slot_count: u32,
) -> Result<ExactRatio, OracleError> {
    let params = StreamParams::overhead_free(r);
    let pop = Population::new(f64::from(n_leechers), n_leechers, vec![SeederSpec::with_fanout(u, c)])?;
    Ok(oracle_optimal(&params, &pop, &[0], Model::Fanout, slot_count)?.best_efficiency)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{eta_fanout_single, eta_overhead_exact, eta_perfect_set};
    use crate::model::{measure_efficiency, validate_scheme};
    use proptest::prelude::*;

    fn certify(params: &StreamParams, pop: &Population, subset: &[u32], model: Model, k: u32) -> OracleResult {
        let res = oracle_optimal(params, pop, subset, model, k).unwrap();
        let report = validate_scheme(params, pop, &res.witness, model).unwrap();
        assert!(report.is_valid(), "{:?}", report.violations);
        let measured = measure_efficiency(params, pop, &res.witness, subset).unwrap();
        assert_eq!(measured.set_efficiency_exact, res.best_efficiency);
        res
    }

    #[test]
    fn pattern_counts() {
        let layout = Layout { n_leechers: 2, n_seeders: 1 };
        let pats = patterns(&layout, &[false, false, false, true]);
        // seeder idle: 1; seeder fed, feeding one or both leechers: 3
        assert_eq!(pats.len(), 4);
        assert_eq!(pats.iter().map(|p| p.contribution).max(), Some(1));
        assert_eq!(holding_order(&[3, 2]), None);
        assert_eq!(holding_order(&[1, 2]), Some(vec![0, 1]));
    }

    #[test]
    fn single_seeder_fanout() {
        assert_eq!(oracle_single_fanout(100.0, 4, 100.0, 4, 4).unwrap(), ExactRatio::new(3, 4));
        assert_eq!(oracle_single_fanout(100.0, 1, 100.0, 3, 4).unwrap(), ExactRatio::zero());
        assert_eq!(oracle_single_fanout(300.0, 2, 100.0, 3, 6).unwrap(), ExactRatio::new(1, 3));
    }

    #[test]
    fn counterexample_jointly() {
        let params = StreamParams::overhead_free(6.0);
        let pop =
            Population::new(3.0, 3, vec![SeederSpec::with_fanout(9.0, 2), SeederSpec::with_fanout(6.0, 3)]).unwrap();
        let res = certify(&params, &pop, &[0, 1], Model::Fanout, 6);
        assert_eq!(res.best_efficiency, ExactRatio::new(8, 15));
    }

    #[test]
    fn deterministic_witness() {
        let params = StreamParams::overhead_free(6.0);
        let pop = Population::new(3.0, 3, vec![SeederSpec::with_fanout(6.0, 2)]).unwrap();
        let a = oracle_optimal(&params, &pop, &[0], Model::Fanout, 6).unwrap();
        let b = oracle_optimal(&params, &pop, &[0], Model::Fanout, 6).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn overhead_model() {
        let params = StreamParams::new(4.0, 0.0, 1.0).unwrap();
        let pop = Population::new(3.0, 3, vec![SeederSpec::new(8.0)]).unwrap();
        let res = certify(&params, &pop, &[0], Model::Overhead, 4);
        assert!(res.best_efficiency.to_f64() <= eta_overhead_exact(&params, 8.0, 3).eta + 1e-12);
        // two outputs of 3 slots each cost 2·(3+1) = 8: η = (6−3)/8
        assert_eq!(res.best_efficiency, ExactRatio::new(3, 8));
    }

    #[test]
    fn receiver_overhead_is_charged() {
        let free_recv = StreamParams::new(4.0, 0.0, 1.0).unwrap();
        let with_recv = StreamParams::with_receiver(4.0, 0.0, 1.0, 0.0, 1.0).unwrap();
        let pop = Population::new(3.0, 3, vec![SeederSpec::new(8.0)]).unwrap();
        let a = certify(&free_recv, &pop, &[0], Model::Overhead, 4).best_efficiency;
        let b = certify(&with_recv, &pop, &[0], Model::Overhead, 4).best_efficiency;
        assert!(b < a);
    }

    #[test]
    fn limits() {
        let params = StreamParams::overhead_free(1.0);
        let big = Population::new(6.0, 6, vec![SeederSpec::new(1.0)]).unwrap();
        assert!(matches!(oracle_optimal(&params, &big, &[0], Model::Perfect, 2), Err(OracleError::TooLarge { .. })));
        let ok = Population::new(2.0, 2, vec![SeederSpec::new(1.0)]).unwrap();
        assert!(matches!(oracle_optimal(&params, &ok, &[0], Model::Perfect, 13), Err(OracleError::TooLarge { .. })));
        let zero = Population::new(1.0, 3, vec![SeederSpec::new(0.0)]).unwrap();
        assert!(matches!(oracle_optimal(&params, &zero, &[0], Model::Perfect, 2), Err(OracleError::Model(_))));
        let with_seed = Population::new(1.0, 3, vec![SeederSpec::new(0.5)]).unwrap();
        assert_eq!(oracle_optimal(&params, &with_seed, &[0], Model::Perfect, 2), Err(OracleError::Infeasible));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn never_above_the_formulas(n_l in 1u32..4, u_slots in 1u32..16, k in prop::sample::select(vec![2u32, 3, 4])) {
            let r = 4.0;
            let u = f64::from(u_slots) / 2.0;
            let params = StreamParams::overhead_free(r);
            let pop = Population::new(f64::from(n_l), n_l, vec![SeederSpec::new(u)]).unwrap();
            let res = certify(&params, &pop, &[0], Model::Perfect, k);
            prop_assert!(res.best_efficiency.to_f64() <= eta_perfect_set(u64::from(n_l), u, r) + 1e-12);
            let capped = Population::new(f64::from(n_l), n_l, vec![SeederSpec::with_fanout(u, 1.max(n_l - 1))]).unwrap();
            let fan = certify(&params, &capped, &[0], Model::Fanout, k);
            prop_assert!(fan.best_efficiency.to_f64() <= eta_fanout_single(u, u64::from(1.max(n_l - 1)), r) + 1e-12);
        }

        #[test]
        fn refining_slots_never_hurts(n_l in 1u32..4, u_slots in 1u32..12) {
            let params = StreamParams::overhead_free(2.0);
            let pop = Population::new(f64::from(n_l), n_l, vec![SeederSpec::new(f64::from(u_slots) / 2.0)]).unwrap();
            let coarse = oracle_optimal(&params, &pop, &[0], Model::Perfect, 2).unwrap().best_efficiency;
            let fine = oracle_optimal(&params, &pop, &[0], Model::Perfect, 4).unwrap().best_efficiency;
            prop_assert!(fine >= coarse);
        }
    }
}

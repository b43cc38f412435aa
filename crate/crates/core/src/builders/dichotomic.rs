use std::collections::BTreeMap;
use std::ops::Range;

use serde::Serialize;

use super::{check_slot_count, complete_and_check, leaf_demand, tree_edges, BuildError};
use crate::model::{edge_cost, DiffusionScheme, Model, NodeId, Population, StreamParams};
use crate::slots::SlotSet;
use crate::tol;

/// Efficiency differences below this are ties.
const TIE: f64 = 1e-12;

/// Outcome of the greedy descent for one upload value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelChoice {
    /// Operating level, `None` when no level gives a positive efficiency.
    pub level: Option<u32>,
    pub eta: f64,
    /// Number of outputs at each level `0..=k_max` for the chosen level.
    pub outputs: Vec<u32>,
}

/// `⌊log₂(r/b)⌋`, the deepest level whose substreams still carry more goodput
/// than additive overhead. `None` when `b = 0`.
pub fn default_k_max(params: &StreamParams) -> Option<u32> {
    (params.b > 0.0).then(|| tol::floor((params.r / params.b).log2()).max(0.0) as u32)
}

fn level_rate(r: f64, level: u32) -> f64 {
    r / f64::from(1u32 << level)
}

/// Outputs per level of a seeder fed a level-`k` substream: open level-`l`
/// outputs while they fit, then halve the rate, until the residual upload is
/// at most `b` or the levels run out.
fn descend(params: &StreamParams, u: f64, k: u32, k_max: u32) -> Vec<u32> {
    let mut outputs = vec![0; k_max as usize + 1];
    let mut residual = u;
    let mut l = k;
    while residual > params.b && l <= k_max {
        let e = level_rate(params.r, l);
        let cost = e + params.a * e + params.b;
        if tol::leq(cost, residual) {
            outputs[l as usize] += 1;
            residual -= cost;
        } else {
            l += 1;
        }
    }
    outputs
}

fn goodput(r: f64, outputs: &[u32]) -> f64 {
    outputs.iter().enumerate().map(|(l, &n)| f64::from(n) * level_rate(r, l as u32)).sum()
}

/// Level maximizing `η_k = (output goodput − r/2^k)/u` over `0..=k_max`;
/// ties go to the shallower level.
///
/// ```
/// use seedplan::builders::choose_level;
/// use seedplan::StreamParams;
///
/// let choice = choose_level(&StreamParams::small_overhead(), 100.0, 5);
/// assert_eq!(choice.level, Some(3));
/// assert_eq!(choice.eta, 0.65625);
/// ```
pub fn choose_level(params: &StreamParams, u: f64, k_max: u32) -> LevelChoice {
    let none = LevelChoice { level: None, eta: 0.0, outputs: vec![0; k_max as usize + 1] };
    if u.is_nan() || u <= 0.0 {
        return none;
    }
    let mut best = none;
    for k in 0..=k_max {
        let outputs = descend(params, u, k, k_max);
        let eta = (goodput(params.r, &outputs) - level_rate(params.r, k)) / u;
        if eta > best.eta + TIE {
            best = LevelChoice { level: Some(k), eta, outputs };
        }
    }
    best
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DichotomicOptions {
    /// Deepest level; defaults to [`default_k_max`].
    pub k_max: Option<u32>,
    /// Cap on the number of trees the servers may root directly.
    pub max_server_roots: Option<usize>,
}

/// Where a substream tree's first member gets its input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "from", rename_all = "snake_case")]
pub enum RootSource {
    Server,
    /// A deeper output of a seeder operating at a shallower level.
    Seeder(NodeId),
    /// A leaf of the parent-level tree, redirected; half its rate is wasted.
    ParentLeaf(NodeId),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeederLevel {
    pub seeder: NodeId,
    pub level: Option<u32>,
    pub eta_bin: f64,
    pub outputs: Vec<u32>,
    /// Index of the level substream the seeder receives.
    pub substream: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubstreamTree {
    pub level: u32,
    pub index: u32,
    pub slots: Range<u32>,
    pub members: Vec<NodeId>,
    pub leaves: Vec<NodeId>,
    pub root: RootSource,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DichotomicPlan {
    pub k_max: u32,
    pub seeders: Vec<SeederLevel>,
    pub trees: Vec<SubstreamTree>,
    /// Upload-weighted mean of the individual efficiencies.
    pub weighted_eta_bin: f64,
    /// `r·k_max/U_X`.
    pub waste_bound: f64,
    /// Goodput received by parent-leaf roots beyond their own substream.
    pub rooting_waste: f64,
    /// Outputs that found no leecher needing them.
    pub dropped_outputs: u32,
    pub dropped_rate: f64,
    /// Longest server-to-node path in the scheme.
    pub max_depth: u32,
}

struct Member {
    seeder: u32,
    level: u32,
    index: u32,
    outputs: Vec<u32>,
}

struct Builder<'a> {
    params: &'a StreamParams,
    pop: &'a Population,
    k: u32,
    scheme: DiffusionScheme,
    /// What each leecher has received from seeders so far.
    held: Vec<SlotSet>,
    server_roots: usize,
    server_root_cost: f64,
    rooting_waste: f64,
    dropped: Vec<(u32, u32)>,
}

impl Builder<'_> {
    fn range(&self, level: u32, index: u32) -> Range<u32> {
        let width = self.k >> level;
        index * width..(index + 1) * width
    }

    fn set(&self, level: u32, index: u32) -> SlotSet {
        SlotSet::from_range(self.range(level, index))
    }

    /// Leechers holding none of the substream, neediest first.
    fn free_leechers(&self, level: u32, index: u32) -> Vec<u32> {
        let want = self.set(level, index);
        let mut free: Vec<u32> =
            (0..self.pop.n_leechers).filter(|&l| self.held[l as usize].is_disjoint(&want)).collect();
        free.sort_by_key(|&l| (self.held[l as usize].len(), l));
        free
    }

    fn deliver(&mut self, from: NodeId, leecher: u32, slots: &SlotSet) {
        self.scheme.send(from, NodeId::Leecher(leecher), slots);
        self.held[leecher as usize].union_with(slots);
    }

    /// Servers' cost to complete every leecher in the current state.
    fn completion_cost(&self) -> f64 {
        let rate = self.scheme.slot_rate(self.params.r);
        self.held.iter().map(|h| edge_cost(self.params, u64::from(self.k) - h.len(), rate)).sum()
    }

    fn server_can_root(&self, level: u32, cap: Option<usize>) -> bool {
        if cap.is_some_and(|c| self.server_roots >= c) {
            return false;
        }
        let e = level_rate(self.params.r, level);
        let cost = e + self.params.a * e + self.params.b;
        let budget = self.pop.server_capacity * self.params.full_stream_cost();
        tol::leq(self.server_root_cost + cost + self.completion_cost(), budget)
    }

    /// Redirects a seeder-to-leecher edge carrying the whole parent substream
    /// of `(level, index)` to `root`.
    fn root_from_parent_leaf(&mut self, level: u32, index: u32, root: NodeId) -> Option<NodeId> {
        let parent = self.set(level - 1, index / 2);
        let (from, leecher) = self.scheme.edges().find_map(|(from, to, slots)| match (from, to) {
            (NodeId::Seeder(_), NodeId::Leecher(l)) if parent.is_subset(slots) && from != root => Some((from, l)),
            _ => None,
        })?;
        let kept = self.scheme.remove_edge(from, NodeId::Leecher(leecher)).expect("edge found above");
        self.scheme.send(from, NodeId::Leecher(leecher), &kept.difference(&parent));
        self.held[leecher as usize] = self.held[leecher as usize].difference(&parent);
        self.scheme.send(from, root, &parent);
        self.rooting_waste += level_rate(self.params.r, level);
        Some(from)
    }
}

/// Longest path from the servers, counted in hops.
fn depth(scheme: &DiffusionScheme) -> u32 {
    fn visit(scheme: &DiffusionScheme, node: NodeId, memo: &mut BTreeMap<NodeId, u32>) -> u32 {
        if node == NodeId::Server {
            return 0;
        }
        if let Some(&d) = memo.get(&node) {
            return d;
        }
        // breaks cycles, which builders never produce
        memo.insert(node, 0);
        let parents: Vec<NodeId> = scheme.in_edges(node).map(|(p, _)| p).collect();
        let d = parents.into_iter().map(|p| visit(scheme, p, memo) + 1).max().unwrap_or(0);
        memo.insert(node, d);
        d
    }
    let mut memo = BTreeMap::new();
    let targets: Vec<NodeId> = scheme.edges().map(|(_, to, _)| to).collect();
    targets.into_iter().map(|n| visit(scheme, n, &mut memo)).max().unwrap_or(0)
}

/// Dichotomic diffusion: every subset member operates at the level chosen by
/// [`choose_level`], level trees are balanced by leaf count, and trees without
/// a natural root are fed by the servers or by a redirected parent leaf.
///
/// Requires `U_X ≤ N_L·R` and a slot count that is a multiple of `2^k_max`.
pub fn build_dichotomic(
    params: &StreamParams,
    pop: &Population,
    subset: &[u32],
    slot_count: u32,
    options: &DichotomicOptions,
) -> Result<(DichotomicPlan, DiffusionScheme), BuildError> {
    params.check()?;
    pop.check()?;
    pop.check_subset(subset)?;
    check_slot_count(slot_count)?;
    if params.has_receiver_overhead() {
        return Err(BuildError::InvalidInput("receiver-side overhead is not supported here".into()));
    }
    let k_max = options
        .k_max
        .or_else(|| default_k_max(params))
        .ok_or_else(|| BuildError::InvalidInput("k_max must be given when b = 0".into()))?;
    if k_max > 20 || !slot_count.is_multiple_of(1 << k_max) {
        return Err(BuildError::Granularity(format!("slot count {slot_count} is not a multiple of 2^{k_max}")));
    }
    let total = pop.total_upload(subset);
    let limit = f64::from(pop.n_leechers) * params.full_stream_cost();
    if !tol::leq(total, limit) {
        return Err(BuildError::PreconditionUx { total, limit });
    }

    let mut levels: Vec<SeederLevel> = subset
        .iter()
        .map(|&s| {
            let c = choose_level(params, pop.upload(s), k_max);
            SeederLevel {
                seeder: NodeId::Seeder(s),
                level: c.level,
                eta_bin: c.eta,
                outputs: c.outputs,
                substream: None,
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..levels.len()).filter(|&i| levels[i].level.is_some()).collect();
    order.sort_by(|&x, &y| {
        let (sx, sy) = (subset[x], subset[y]);
        levels[x].level.cmp(&levels[y].level).then(pop.upload(sy).total_cmp(&pop.upload(sx))).then(sx.cmp(&sy))
    });

    let mut b = Builder {
        params,
        pop,
        k: slot_count,
        scheme: DiffusionScheme::new(slot_count),
        held: vec![SlotSet::new(); pop.n_leechers as usize],
        server_roots: 0,
        server_root_cost: 0.0,
        rooting_waste: 0.0,
        dropped: Vec::new(),
    };
    let mut placed: Vec<Member> = Vec::new();
    let mut trees: Vec<SubstreamTree> = Vec::new();

    for level in 0..=k_max {
        let width = 1u32 << level;
        // members with their level-`level` output counts, per substream
        let mut groups: Vec<Vec<(NodeId, u32)>> = vec![Vec::new(); width as usize];
        let at_level: Vec<usize> = order.iter().copied().filter(|&i| levels[i].level == Some(level)).collect();
        for i in at_level {
            let n_out = levels[i].outputs[level as usize];
            let index =
                (0..width).min_by_key(|&j| (leaf_demand(&groups[j as usize]), j)).expect("at least one substream");
            groups[index as usize].push((levels[i].seeder, n_out));
            levels[i].substream = Some(index);
            placed.push(Member { seeder: subset[i], level, index, outputs: levels[i].outputs.clone() });
        }
        let mut roots: Vec<Option<RootSource>> = vec![None; width as usize];

        // deeper outputs of shallower members root trees of this level first
        let mut pending: Vec<(u32, Range<u32>, u32)> = placed
            .iter()
            .filter(|m| m.level < level && m.outputs[level as usize] > 0)
            .map(|m| {
                let span = level - m.level;
                let children = m.index << span..(m.index + 1) << span;
                (m.seeder, children, m.outputs[level as usize])
            })
            .collect();
        for (seeder, children, count) in &mut pending {
            for j in children.clone() {
                if *count == 0 {
                    break;
                }
                if roots[j as usize].is_none() && !groups[j as usize].is_empty() {
                    let first = groups[j as usize][0].0;
                    b.scheme.send(NodeId::Seeder(*seeder), first, &b.set(level, j));
                    roots[j as usize] = Some(RootSource::Seeder(NodeId::Seeder(*seeder)));
                    *count -= 1;
                }
            }
        }

        // tree leaves
        let mut leaves_of: Vec<Vec<NodeId>> = vec![Vec::new(); width as usize];
        for j in 0..width {
            let members = &groups[j as usize];
            if members.is_empty() {
                continue;
            }
            let want = leaf_demand(members) as usize;
            let free = b.free_leechers(level, j);
            let leaves: Vec<NodeId> = free.iter().take(want).map(|&l| NodeId::Leecher(l)).collect();
            if leaves.len() < want {
                b.dropped.push((level, (want - leaves.len()) as u32));
            }
            let slots = b.set(level, j);
            for (from, to) in tree_edges(members, &leaves) {
                match to {
                    NodeId::Leecher(l) => b.deliver(from, l, &slots),
                    _ => b.scheme.send(from, to, &slots),
                }
            }
            leaves_of[j as usize] = leaves;
        }

        // remaining deeper outputs go straight to leechers
        for (seeder, children, count) in pending {
            for _ in 0..count {
                let best = children
                    .clone()
                    .map(|j| (j, b.free_leechers(level, j)))
                    .filter(|(_, free)| !free.is_empty())
                    .max_by_key(|(j, free)| (free.len(), std::cmp::Reverse(*j)));
                match best {
                    Some((j, free)) => {
                        let slots = b.set(level, j);
                        b.deliver(NodeId::Seeder(seeder), free[0], &slots);
                    }
                    None => b.dropped.push((level, 1)),
                }
            }
        }

        // trees still without input
        for j in 0..width {
            if groups[j as usize].is_empty() || roots[j as usize].is_some() {
                continue;
            }
            let first = groups[j as usize][0].0;
            let source = if b.server_can_root(level, options.max_server_roots) {
                let e = level_rate(params.r, level);
                b.server_root_cost += e + params.a * e + params.b;
                b.server_roots += 1;
                b.scheme.send(NodeId::Server, first, &b.set(level, j));
                RootSource::Server
            } else if level > 0 {
                let from = b.root_from_parent_leaf(level, j, first).ok_or_else(|| {
                    BuildError::RootingFailed(format!("no server capacity or parent leaf for substream ({level}, {j})"))
                })?;
                RootSource::ParentLeaf(from)
            } else {
                return Err(BuildError::RootingFailed(format!("no server capacity for the full-rate tree {j}")));
            };
            roots[j as usize] = Some(source);
        }

        for j in 0..width {
            if let Some(root) = roots[j as usize] {
                trees.push(SubstreamTree {
                    level,
                    index: j,
                    slots: b.range(level, j),
                    members: groups[j as usize].iter().map(|&(n, _)| n).collect(),
                    leaves: std::mem::take(&mut leaves_of[j as usize]),
                    root,
                });
            }
        }
    }

    // parent-leaf redirections take leaves away from earlier trees
    for t in &mut trees {
        let slots = SlotSet::from_range(t.slots.clone());
        t.leaves.retain(|&l| matches!(l, NodeId::Leecher(i) if slots.is_subset(&b.held[i as usize])));
    }

    let dropped_outputs = b.dropped.iter().map(|&(_, n)| n).sum();
    let dropped_rate = b.dropped.iter().map(|&(l, n)| f64::from(n) * level_rate(params.r, l)).sum();
    let rooting_waste = b.rooting_waste;
    let scheme = complete_and_check(params, pop, b.scheme, Model::Overhead)?;
    let weighted: f64 = subset.iter().zip(&levels).map(|(&s, lv)| lv.eta_bin * pop.upload(s)).sum();
    let plan = DichotomicPlan {
        k_max,
        seeders: levels,
        trees,
        weighted_eta_bin: if total > 0.0 { weighted / total } else { 0.0 },
        waste_bound: if total > 0.0 { params.r * f64::from(k_max) / total } else { 0.0 },
        rooting_waste,
        dropped_outputs,
        dropped_rate,
        max_depth: depth(&scheme),
    };
    Ok((plan, scheme))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::eta_overhead_exact;
    use crate::model::{measure_efficiency, validate_scheme, SeederSpec};
    use proptest::prelude::*;

    #[test]
    fn level_choice_for_one_hundred() {
        let params = StreamParams::small_overhead();
        let c = choose_level(&params, 100.0, 5);
        assert_eq!(c.level, Some(3));
        assert_eq!(c.eta, 0.65625);
        assert_eq!(c.outputs, vec![0, 0, 0, 6, 0, 1]);
        // level 4 ties at the same efficiency
        let four = descend(&params, 100.0, 4, 5);
        assert_eq!((goodput(100.0, &four) - 6.25) / 100.0, 0.65625);
        assert_eq!(default_k_max(&params), Some(5));
        assert_eq!(default_k_max(&StreamParams::large_overhead()), Some(2));
        assert_eq!(default_k_max(&StreamParams::overhead_free(1.0)), None);
    }

    #[test]
    fn unusable_seeders() {
        let params = StreamParams::small_overhead();
        let tiny = choose_level(&params, 5.0, 5);
        assert_eq!((tiny.level, tiny.eta), (None, 0.0));
        assert_eq!(choose_level(&params, 0.0, 5).level, None);
    }

    #[test]
    fn overhead_free_reduction() {
        let free = StreamParams::overhead_free(100.0);
        let c = choose_level(&free, 200.0, 0);
        assert_eq!((c.level, c.eta), (Some(0), 0.5));
        assert_eq!(c.eta, eta_overhead_exact(&free, 200.0, 2).eta);
    }

    #[test]
    fn single_seeder_matches_its_level_choice() {
        let params = StreamParams::small_overhead();
        let pop = Population::new(20.0, 20, vec![SeederSpec::new(100.0)]).unwrap();
        let (plan, scheme) = build_dichotomic(&params, &pop, &[0], 32, &DichotomicOptions::default()).unwrap();
        let rep = measure_efficiency(&params, &pop, &scheme, &[0]).unwrap();
        assert_eq!(rep.set_efficiency, 0.65625);
        assert_eq!(plan.seeders[0].level, Some(3));
        assert_eq!(plan.rooting_waste, 0.0);
        assert_eq!(plan.dropped_outputs, 0);
        assert_eq!(plan.max_depth, 2);
    }

    #[test]
    fn parent_leaf_rooting_when_servers_are_capped() {
        let params = StreamParams::small_overhead();
        // a level-0 seeder and two level-1 seeders: the level-1 trees need roots
        let pop =
            Population::new(10.0, 10, vec![SeederSpec::new(340.0), SeederSpec::new(120.0), SeederSpec::new(120.0)])
                .unwrap();
        let levels: Vec<_> = [340.0, 120.0].iter().map(|&u| choose_level(&params, u, 1).level).collect();
        assert_eq!(levels, vec![Some(0), Some(1)]);
        let opts = DichotomicOptions { k_max: Some(1), max_server_roots: Some(1) };
        let (plan, scheme) = build_dichotomic(&params, &pop, &[0, 1, 2], 2, &opts).unwrap();
        assert!(validate_scheme(&params, &pop, &scheme, Model::Overhead).unwrap().is_valid());
        let level1: Vec<_> = plan.trees.iter().filter(|t| t.level == 1).map(|t| t.root).collect();
        assert!(level1.iter().all(|r| matches!(r, RootSource::ParentLeaf(_))), "{level1:?}");
        assert_eq!(plan.rooting_waste, 100.0);
        let rep = measure_efficiency(&params, &pop, &scheme, &[0, 1, 2]).unwrap();
        assert!(rep.set_efficiency >= plan.weighted_eta_bin - plan.waste_bound - 1e-12);

        let none = DichotomicOptions { k_max: Some(1), max_server_roots: Some(0) };
        assert!(matches!(build_dichotomic(&params, &pop, &[0, 1, 2], 2, &none), Err(BuildError::RootingFailed(_))));
    }

    #[test]
    fn preconditions() {
        let params = StreamParams::small_overhead();
        let pop = Population::new(2.0, 2, vec![SeederSpec::new(300.0)]).unwrap();
        assert!(matches!(
            build_dichotomic(&params, &pop, &[0], 32, &DichotomicOptions::default()),
            Err(BuildError::PreconditionUx { .. })
        ));
        let ok = Population::new(4.0, 4, vec![SeederSpec::new(100.0)]).unwrap();
        assert!(matches!(
            build_dichotomic(&params, &ok, &[0], 24, &DichotomicOptions::default()),
            Err(BuildError::Granularity(_))
        ));
        let free = StreamParams::overhead_free(100.0);
        assert!(matches!(
            build_dichotomic(&free, &ok, &[0], 32, &DichotomicOptions::default()),
            Err(BuildError::InvalidInput(_))
        ));
    }

    proptest! {
        #[test]
        fn never_beats_the_individual_optimum(u in 0.0f64..3000.0, large in any::<bool>()) {
            let params = if large { StreamParams::large_overhead() } else { StreamParams::small_overhead() };
            let k_max = default_k_max(&params).unwrap();
            let bin = choose_level(&params, u, k_max);
            prop_assert!(bin.eta <= eta_overhead_exact(&params, u, 1_000_000).eta + 1e-12);
        }

        #[test]
        fn random_sets_stay_in_the_bracket(
            ups in prop::collection::vec(5.0f64..600.0, 1..25),
            n_l in 10u32..80,
            large in any::<bool>(),
        ) {
            let params = if large { StreamParams::large_overhead() } else { StreamParams::small_overhead() };
            let pop = Population::new(f64::from(2 * n_l), n_l, ups.iter().map(|&u| SeederSpec::new(u)).collect()).unwrap();
            prop_assume!(pop.total_upload(&pop.all_seeders()) <= f64::from(n_l) * params.full_stream_cost());
            let subset = pop.all_seeders();
            let (plan, scheme) = build_dichotomic(&params, &pop, &subset, 64, &DichotomicOptions::default()).unwrap();
            let eta = measure_efficiency(&params, &pop, &scheme, &subset).unwrap().set_efficiency;
            prop_assert!(eta <= plan.weighted_eta_bin + 1e-9, "{eta} > {}", plan.weighted_eta_bin);
            prop_assert!(eta >= plan.weighted_eta_bin - plan.waste_bound - 1e-9,
                "{eta} < {} - {} (dropped {})", plan.weighted_eta_bin, plan.waste_bound, plan.dropped_outputs);
        }
    }
}

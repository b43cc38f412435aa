use proptest::prelude::*;

use seedplan::analytic::{
    eta_fanout_single, eta_given_u_c, eta_overhead_continuous, eta_overhead_exact, eta_perfect_set,
};
use seedplan::builders::{
    build_dichotomic, build_homogeneous_trees, build_monorate, build_perfect_broadcast, DichotomicOptions,
};
use seedplan::oracle::oracle_optimal;
use seedplan::{
    measure_efficiency, validate_scheme, DiffusionScheme, ExactRatio, Model, NodeId, Population, SeederSpec, SlotSet,
    StreamParams,
};

fn node(i: usize, n_l: u32) -> NodeId {
    match i {
        0 => NodeId::Server,
        i if i <= n_l as usize => NodeId::Leecher(i as u32 - 1),
        i => NodeId::Seeder(i as u32 - 1 - n_l),
    }
}

fn slots(mask: u32, k: u32) -> SlotSet {
    let mut set = SlotSet::new();
    for slot in (0..k).filter(|s| mask & (1 << s) != 0) {
        set.union_with(&SlotSet::from_range(slot..slot + 1));
    }
    set
}

/// Arbitrary schemes on a tiny population, most of them invalid.
fn raw_scheme() -> impl Strategy<Value = (Population, DiffusionScheme)> {
    (1u32..=3, prop::collection::vec(0u32..=300, 0..=2), 1u32..=4).prop_flat_map(|(n_l, uploads, k)| {
        let n = 1 + n_l as usize + uploads.len();
        let edges = prop::collection::vec((0..n, 1..n, 0u32..(1 << k)), 0..10);
        (Just(n_l), Just(uploads), Just(k), edges).prop_map(|(n_l, uploads, k, edges)| {
            let pop =
                Population::new(f64::from(n_l), n_l, uploads.iter().map(|&u| SeederSpec::new(f64::from(u))).collect())
                    .unwrap();
            let mut scheme = DiffusionScheme::new(k);
            for (from, to, mask) in edges {
                if from != to && scheme.edge(node(from, n_l), node(to, n_l)).is_none() {
                    scheme.send(node(from, n_l), node(to, n_l), &slots(mask, k));
                }
            }
            (pop, scheme)
        })
    })
}

fn overhead_instance() -> impl Strategy<Value = (StreamParams, Population)> {
    (any::<bool>(), 20u32..120, prop::collection::vec(30.0f64..500.0, 1..8)).prop_map(|(large, n_l, uploads)| {
        let params = if large { StreamParams::large_overhead() } else { StreamParams::small_overhead() };
        let pop = Population::new(f64::from(n_l), n_l, uploads.into_iter().map(SeederSpec::new).collect()).unwrap();
        (params, pop)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn perfect_and_zero_overhead_validation_agree((pop, scheme) in raw_scheme()) {
        let perfect = validate_scheme(&StreamParams::overhead_free(100.0), &pop, &scheme, Model::Perfect).unwrap();
        let zero = StreamParams::new(100.0, 0.0, 0.0).unwrap();
        let overhead = validate_scheme(&zero, &pop, &scheme, Model::Overhead).unwrap();
        prop_assert_eq!(perfect.violations, overhead.violations);
    }

    #[test]
    fn rewriting_edges_in_place_changes_nothing((pop, scheme) in raw_scheme()) {
        let params = StreamParams::small_overhead();
        let mut copy = DiffusionScheme::new(scheme.slot_count());
        for (from, to, set) in scheme.edges() {
            copy.send(from, to, set);
        }
        let reparsed = DiffusionScheme::from_json(&scheme.to_json()).unwrap();
        let subset = pop.all_seeders();
        if pop.total_upload(&subset) > 0.0 {
            let a = measure_efficiency(&params, &pop, &scheme, &subset).unwrap();
            prop_assert_eq!(&a, &measure_efficiency(&params, &pop, &copy, &subset).unwrap());
            prop_assert_eq!(&a, &measure_efficiency(&params, &pop, &reparsed, &subset).unwrap());
        }
        let v = validate_scheme(&params, &pop, &scheme, Model::Overhead).unwrap();
        prop_assert_eq!(&v, &validate_scheme(&params, &pop, &copy, Model::Overhead).unwrap());
    }

    #[test]
    fn valid_overhead_schemes_respect_the_ceiling_and_the_mean_identity((params, pop) in overhead_instance()) {
        let subset = pop.all_seeders();
        let mut schemes = Vec::new();
        if let Ok((_, s)) = build_dichotomic(&params, &pop, &subset, 1024, &DichotomicOptions::default()) {
            schemes.push(s);
        }
        if let Ok((_, s)) = build_monorate(&params, &pop, &subset, 1024) {
            schemes.push(s);
        }
        for scheme in schemes {
            prop_assert!(validate_scheme(&params, &pop, &scheme, Model::Overhead).unwrap().is_valid());
            let rep = measure_efficiency(&params, &pop, &scheme, &subset).unwrap();
            let mut weighted = ExactRatio::zero();
            let mut total = ExactRatio::zero();
            for s in &rep.per_seeder {
                let eta = s.eta.unwrap();
                prop_assert!(eta <= params.eta_max() + 1e-12, "{} at {eta}", s.seeder);
                let NodeId::Seeder(id) = s.seeder else { unreachable!() };
                let upload = ExactRatio::from_f64(pop.upload(id)).unwrap();
                weighted = weighted + &upload * s.eta_exact.as_ref().unwrap();
                total = total + upload;
            }
            prop_assert_eq!(weighted / total, rep.set_efficiency_exact);
        }
    }

    #[test]
    fn dichotomic_depth_is_logarithmic((params, pop) in overhead_instance()) {
        let subset = pop.all_seeders();
        if let Ok((plan, _)) = build_dichotomic(&params, &pop, &subset, 1024, &DichotomicOptions::default()) {
            let per_tree = 1 + (f64::from(pop.n_leechers)).log2().ceil() as u32;
            prop_assert!(plan.max_depth <= (plan.k_max + 1) * per_tree + plan.k_max, "{} deep", plan.max_depth);
        }
    }

    #[test]
    fn exact_optimum_is_the_best_integer_fanout(u in 3.5f64..3000.0, n_l in 1u64..200, large in any::<bool>()) {
        let params = if large { StreamParams::large_overhead() } else { StreamParams::small_overhead() };
        let best = eta_overhead_exact(&params, u, n_l);
        let brute = (1..=n_l).map(|c| eta_given_u_c(&params, u, c)).fold(0.0, f64::max);
        prop_assert!((best.eta - brute).abs() < 1e-12, "{} vs {brute}", best.eta);
        prop_assert!(best.eta <= params.eta_max() + 1e-12);
    }

    #[test]
    fn continuous_optimum_is_non_decreasing(u in 3.5f64..2000.0, du in 0.0f64..50.0, large in any::<bool>()) {
        let params = if large { StreamParams::large_overhead() } else { StreamParams::small_overhead() };
        let u = u.max(2.0 * params.b);
        prop_assert!(eta_overhead_continuous(&params, u + du) >= eta_overhead_continuous(&params, u) - 1e-12);
    }

    #[test]
    fn full_fanout_is_the_perfect_case(n_l in 1u64..1000, frac in 0.01f64..1.0) {
        let r = 100.0;
        let u = frac * r * n_l as f64;
        prop_assert!((eta_fanout_single(u, n_l, r) - eta_perfect_set(n_l, u, r)).abs() < 1e-12);
    }
}

/// Every builder that succeeds on a tiny instance stays at or below the
/// exhaustive optimum for the same slot count.
#[test]
fn builders_never_beat_the_oracle() {
    let free = StreamParams::overhead_free(4.0);
    for n_l in 2u32..=4 {
        for u in [1.0, 2.0, 3.0, 4.0, 6.0, 8.0] {
            let pop = Population::new(f64::from(n_l), n_l, vec![SeederSpec::new(u)]).unwrap();
            for k in [2u32, 4, 8] {
                let Ok(scheme) = build_perfect_broadcast(&free, &pop, &[0], k) else { continue };
                let built = measure_efficiency(&free, &pop, &scheme, &[0]).unwrap().set_efficiency_exact;
                let best = oracle_optimal(&free, &pop, &[0], Model::Perfect, k).unwrap().best_efficiency;
                assert!(built <= best, "perfect N_L={n_l} u={u} K={k}: {built} > {best}");
            }
        }
    }

    for (c, n_s) in [(2u32, 1usize), (2, 2), (3, 1)] {
        let pop = Population::new(3.0, 3, vec![SeederSpec::with_fanout(2.0 * f64::from(c), c); n_s]).unwrap();
        let subset = pop.all_seeders();
        let (_, scheme) = build_homogeneous_trees(&free, &pop, &subset, 4).unwrap();
        let built = measure_efficiency(&free, &pop, &scheme, &subset).unwrap().set_efficiency_exact;
        let best = oracle_optimal(&free, &pop, &subset, Model::Fanout, 4).unwrap().best_efficiency;
        assert!(built <= best, "trees c={c} n={n_s}: {built} > {best}");
    }

    let params = StreamParams::new(8.0, 0.0, 1.0).unwrap();
    let mut compared = 0;
    for u in [10.0, 14.0, 20.0, 27.0] {
        let pop = Population::new(4.0, 4, vec![SeederSpec::new(u)]).unwrap();
        let options = DichotomicOptions { k_max: Some(3), ..Default::default() };
        let Ok((_, scheme)) = build_dichotomic(&params, &pop, &[0], 8, &options) else { continue };
        let built = measure_efficiency(&params, &pop, &scheme, &[0]).unwrap().set_efficiency_exact;
        let best = oracle_optimal(&params, &pop, &[0], Model::Overhead, 8).unwrap().best_efficiency;
        assert!(built <= best, "dichotomic u={u}: {built} > {best}");
        compared += 1;
    }
    assert!(compared > 0);
}

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use taxoutlier::formats::{EntityRecord, Tier};
use taxoutlier::generator::{
    candidate_classes, class_rng, generate_dataset, generate_group, outlier_candidates, select_cluster, GeneratorConfig,
};
use taxoutlier::graph::{build_graph, Distance, PruneParams};
use taxoutlier::{EntityId, KnowledgeGraph};
use taxoutlier_testkit::*;

fn pruned_sports() -> KnowledgeGraph {
    let (g, _) = build_graph(sports_records()).unwrap();
    g.prune(&PruneParams::default()).unwrap().0
}

#[test]
fn sports_candidates_and_tiers() {
    let g = pruned_sports();
    let cfg = GeneratorConfig::default();
    let cands: BTreeSet<EntityId> = candidate_classes(&g, &cfg).unwrap().into_iter().collect();
    for c in [BASKETBALL_TEAM, AMERICAN_FOOTBALL_TEAM, ICE_HOCKEY_TEAM, SPORTS_TEAM] {
        assert!(cands.contains(&id(c)), "{c}");
    }
    assert_eq!(
        outlier_candidates(&g, BASKETBALL_TEAM, Tier::O1, &cfg).unwrap(),
        ids(FOOTBALL_TEAMS.iter().map(|t| t.0))
    );
    let o2: BTreeSet<EntityId> = ids(HOCKEY_TEAMS.iter().chain(&MINOR_TEAMS).map(|t| t.0));
    assert_eq!(outlier_candidates(&g, BASKETBALL_TEAM, Tier::O2, &cfg).unwrap(), o2);
    assert_eq!(
        outlier_candidates(&g, BASKETBALL_TEAM, Tier::O3, &cfg).unwrap(),
        ids(ELEMENTS.iter().map(|t| t.0))
    );
}

#[test]
fn basketball_group_composition() {
    let g = pruned_sports();
    let cfg = GeneratorConfig::default();
    let cluster = select_cluster(&g, BASKETBALL_TEAM, &cfg).unwrap().unwrap();
    let want: Vec<EntityId> = BASKETBALL_TEAMS[..8].iter().map(|t| id(t.0)).collect();
    assert_eq!(cluster, want);

    let mut rng = class_rng(cfg.rng_seed, &id(BASKETBALL_TEAM));
    let group = generate_group(&g, BASKETBALL_TEAM, &cfg, &mut rng).unwrap().unwrap();
    let by_tier = |t: Tier| -> Vec<EntityId> {
        group
            .outlier_ids
            .iter()
            .filter(|o| o.0 == t)
            .map(|o| o.1.clone())
            .collect()
    };
    assert_eq!(by_tier(Tier::O1), vec![id("Q213837"), id("Q204862")]);
    assert_eq!(by_tier(Tier::O2), vec![id("Q188143"), id("Q4371")]);
    let o3 = by_tier(Tier::O3);
    assert_eq!(o3.len(), 2);
    let elements = ids(ELEMENTS.iter().map(|t| t.0));
    assert!(o3.iter().all(|e| elements.contains(e)));
}

#[test]
fn tier_source_classes_sit_at_structural_distances() {
    let g = pruned_sports();
    let cfg = GeneratorConfig::default();
    for group in generate_dataset(&g, &cfg).unwrap() {
        if group.class_id != id(BASKETBALL_TEAM) {
            continue;
        }
        for (tier, o) in &group.outlier_ids {
            let e = g.node(o.as_str()).unwrap();
            let v = g.node(BASKETBALL_TEAM).unwrap();
            for &c in g.classes_of(e) {
                let d = g.distance_within_ix(v, c, cfg.mu);
                match tier {
                    Tier::O1 => assert_eq!(d, Distance::Exact(2)),
                    Tier::O2 => assert_eq!(d, Distance::Exact(4)),
                    Tier::O3 => assert_eq!(d, Distance::AtLeastCap),
                }
            }
        }
    }
}

#[test]
fn empty_graph_and_no_instances() {
    let (g, _) = build_graph(Vec::new()).unwrap();
    assert!(generate_dataset(&g, &GeneratorConfig::default()).unwrap().is_empty());
    let (g, _) = build_graph(random_subclass_graph(3, 10, 0.2)).unwrap();
    assert!(candidate_classes(&g, &GeneratorConfig::default()).unwrap().is_empty());
}

#[test]
fn output_is_independent_of_thread_count() {
    let records = random_records(
        77,
        &RandomGraphSpec {
            classes: 120,
            instances: 2_000,
            max_classes_per_instance: 1,
            ..RandomGraphSpec::default()
        },
    );
    let (g, _) = build_graph(records).unwrap();
    let cfg = small_cfg(42);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| generate_dataset(&g, &cfg).unwrap())
    };
    let one = run(1);
    assert!(!one.is_empty());
    assert_eq!(one, run(8));
    assert_eq!(one, run(3));
}

fn small_cfg(seed: u64) -> GeneratorConfig {
    GeneratorConfig {
        mu: 3,
        cluster_size: 4,
        min_cluster_size: 3,
        min_outlier_sitelinks: 8,
        rng_seed: seed,
        ..GeneratorConfig::default()
    }
}

/// Top `k` of `pool` by (sitelinks desc, id asc), restricted to eligible ones.
fn top_k(
    records: &BTreeMap<EntityId, &EntityRecord>,
    pool: &BTreeSet<EntityId>,
    cfg: &GeneratorConfig,
) -> Vec<EntityId> {
    let mut v: Vec<&EntityRecord> = pool
        .iter()
        .map(|e| records[e])
        .filter(|r| r.sitelinks >= cfg.min_outlier_sitelinks && r.labels.contains_key(&cfg.language))
        .collect();
    v.sort_by(|a, b| b.sitelinks.cmp(&a.sitelinks).then(a.id.cmp(&b.id)));
    v.into_iter()
        .take(cfg.per_tier_outliers)
        .map(|r| r.id.clone())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn groups_pass_definitional_verifier(seed in any::<u64>(), mu in 2u32..5) {
        let spec = RandomGraphSpec { classes: 18, instances: 120, ..RandomGraphSpec::default() };
        let records = random_records(seed, &spec);
        let oracle = Oracle::new(&records);
        let by_id: BTreeMap<EntityId, &EntityRecord> = records.iter().map(|r| (r.id.clone(), r)).collect();
        let (g, _) = build_graph(records.clone()).unwrap();
        let cfg = GeneratorConfig { mu, ..small_cfg(seed) };

        for group in generate_dataset(&g, &cfg).unwrap() {
            let v = group.class_id.as_str();
            let own = oracle.instances(v);
            let [o1, o2, o3] = oracle.tiers(v, mu);

            // cluster: most prominent labeled direct instances
            let labeled: BTreeSet<EntityId> = own
                .iter()
                .filter(|e| by_id[*e].labels.contains_key("en"))
                .cloned()
                .collect();
            let mut ranked: Vec<&EntityRecord> = labeled.iter().map(|e| by_id[e]).collect();
            ranked.sort_by(|a, b| b.sitelinks.cmp(&a.sitelinks).then(a.id.cmp(&b.id)));
            let want: Vec<EntityId> = ranked.iter().take(cfg.cluster_size).map(|r| r.id.clone()).collect();
            prop_assert!(group.cluster_ids.len() >= cfg.min_cluster_size);
            prop_assert_eq!(&group.cluster_ids, &want);

            let mut seen = BTreeSet::new();
            for (tier, o) in &group.outlier_ids {
                prop_assert!(!own.contains(o));
                prop_assert!(seen.insert(o.clone()));
                let r = by_id[o];
                prop_assert!(r.sitelinks >= cfg.min_outlier_sitelinks);
                prop_assert!(r.labels.contains_key("en"));
                let set = match tier { Tier::O1 => &o1, Tier::O2 => &o2, Tier::O3 => &o3 };
                prop_assert!(set.contains(o), "{} not in {:?} of {}", o, tier, v);
            }
            let picked = |t: Tier| -> Vec<EntityId> {
                group.outlier_ids.iter().filter(|x| x.0 == t).map(|x| x.1.clone()).collect()
            };
            prop_assert_eq!(picked(Tier::O1), top_k(&by_id, &o1, &cfg));
            prop_assert_eq!(picked(Tier::O2), top_k(&by_id, &o2, &cfg));
            prop_assert!(picked(Tier::O3).len() <= cfg.per_tier_outliers);
        }
    }

    #[test]
    fn exact_candidates_match_definitions(seed in any::<u64>()) {
        let spec = RandomGraphSpec { classes: 14, instances: 50, ..RandomGraphSpec::default() };
        let records = random_records(seed, &spec);
        let oracle = Oracle::new(&records);
        let (g, _) = build_graph(records).unwrap();
        let cfg = small_cfg(seed);
        for v in candidate_classes(&g, &cfg).unwrap() {
            let want = oracle.tiers(v.as_str(), cfg.mu);
            for (tier, w) in Tier::ALL.into_iter().zip(want) {
                prop_assert_eq!(outlier_candidates(&g, v.as_str(), tier, &cfg).unwrap(), w);
            }
        }
    }
}

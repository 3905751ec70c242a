mod common;

use std::collections::BTreeSet;

use common::*;
use flowstep_core::cfg::{SuperGraph, VertexId};
use flowstep_core::clients::{
    ConstProp, Definition, Diverge, MustCache, ReachingDefs, ReachingFact,
};
use flowstep_core::engine::{
    run, run_classic, run_optimized, seed_and_run, Algorithm, EngineConfig, EngineError, Seed,
};
use flowstep_core::lattice::{Analysis, AnalysisError};
use flowstep_core::oracle::{check_fixed_point, run_sequential};
use proptest::prelude::*;

fn defs(pairs: &[(&str, &str)]) -> ReachingFact {
    pairs.iter().map(|(d, v)| Definition::new(*d, *v)).collect()
}

#[test]
fn diamond_reaching_definitions() {
    let g = fixture_graph("diamond.cfg");
    let r = run(
        &g,
        &ReachingDefs,
        &EngineConfig::new(Algorithm::Optimized, 4),
    )
    .unwrap();
    assert_eq!(
        r.in_facts[&VertexId(4)],
        defs(&[("d1", "x"), ("d2", "y"), ("d3", "z")])
    );
    assert_eq!(r.in_facts[&VertexId(1)], ReachingFact::default());
    let classic = run_classic(&g, &ReachingDefs, 2).unwrap();
    assert!(classic.same_facts(&r));
    assert_eq!(check_fixed_point(&g, &ReachingDefs, &r), Ok(()));
}

#[test]
fn optimized_sends_fewer_messages_than_classic_pulls() {
    let g = fixture_graph("chain10.cfg");
    let classic = run_classic(&g, &ReachingDefs, 1).unwrap();
    let opt = run_optimized(&g, &ReachingDefs, 1).unwrap();
    assert!(classic.same_facts(&opt));
    assert!(opt.messages_sent() <= classic.messages_sent());
    assert_eq!(opt.stats.active_per_superstep.len(), opt.supersteps());
}

#[test]
fn unreachable_vertices_keep_the_initial_fact() {
    let g = SuperGraph::parse(
        "V 1 entry def x d1\nV 2 use x\nV 3 def x d3\nV 4 use x\nE 1 2\nE 3 4\nE 4 3\n",
    )
    .unwrap();
    for alg in [Algorithm::Classic, Algorithm::Optimized] {
        let r = run(&g, &ReachingDefs, &EngineConfig::new(alg, 3)).unwrap();
        assert_eq!(r.computed, [VertexId(1), VertexId(2)].into_iter().collect());
        assert_eq!(r.out_facts[&VertexId(3)], ReachingFact::default());
        assert_eq!(r.in_facts[&VertexId(4)], ReachingFact::default());
    }
    let seq = run_sequential(&g, &ReachingDefs).unwrap();
    assert_eq!(seq.computed.len(), 2);
}

#[test]
fn graph_without_entry_is_rejected() {
    let g = SuperGraph::parse("V 1 nop\nV 2 nop\nE 1 2\nE 2 1\n").unwrap();
    assert_eq!(
        run(&g, &ReachingDefs, &EngineConfig::default()).unwrap_err(),
        EngineError::NoEntries
    );
    let empty = run(
        &SuperGraph::empty(),
        &ReachingDefs,
        &EngineConfig::default(),
    )
    .unwrap();
    assert_eq!(empty.supersteps(), 0);
    assert!(empty.in_facts.is_empty());
}

#[test]
fn analysis_errors_name_the_lowest_vertex() {
    let g = SuperGraph::parse(
        "V 1 assign x = 1\nV 7 assign y = x / 2\nV 3 assign y = x % 2\nE 1 7\nE 1 3\n",
    )
    .unwrap();
    for workers in [1, 2, 4, 8] {
        for alg in [Algorithm::Classic, Algorithm::Optimized] {
            match run(&g, &ConstProp, &EngineConfig::new(alg, workers)).unwrap_err() {
                EngineError::Analysis { vertex, source } => {
                    assert_eq!(vertex, VertexId(3));
                    assert_eq!(source, AnalysisError::UnknownOperator("%".into()));
                }
                other => panic!("unexpected {other:?}"),
            }
        }
    }
}

#[test]
fn superstep_cap_reports_non_convergence() {
    let g = fixture_graph("chain10.cfg");
    for alg in [Algorithm::Classic, Algorithm::Optimized] {
        let cfg = EngineConfig {
            superstep_cap: Some(25),
            ..EngineConfig::new(alg, 2)
        };
        assert_eq!(
            run(&g, &Diverge, &cfg).unwrap_err(),
            EngineError::NonConvergence {
                cap: 25,
                supersteps: 25
            }
        );
    }
    assert!(matches!(
        run_sequential(&g, &Diverge),
        Err(EngineError::NonConvergence { .. })
    ));
}

#[test]
fn trace_records_out_updates_per_superstep() {
    let g = fixture_graph("diamond.cfg");
    let cfg = EngineConfig {
        trace: true,
        ..EngineConfig::default()
    };
    let r = run(&g, &ReachingDefs, &cfg).unwrap();
    assert_eq!(r.trace.len(), r.supersteps());
    let updates: usize = r.trace.iter().map(Vec::len).sum();
    assert_eq!(updates as u64, r.stats.out_updates);
    assert_eq!(r.trace[0], vec![(VertexId(1), defs(&[("d1", "x")]))]);
}

#[test]
fn seeds_must_cover_the_graph() {
    let g = fixture_graph("diamond.cfg");
    let mut seed = Seed::from_scratch(&g, &ReachingDefs);
    seed.in_facts.remove(&VertexId(2));
    assert!(matches!(
        seed_and_run(&g, &ReachingDefs, &EngineConfig::default(), seed),
        Err(EngineError::SeedMismatch(_))
    ));
    let from_scratch = seed_and_run(
        &g,
        &ReachingDefs,
        &EngineConfig::default(),
        Seed::from_scratch(&g, &ReachingDefs),
    );
    assert!(from_scratch
        .unwrap()
        .same_facts(&run(&g, &ReachingDefs, &EngineConfig::default()).unwrap()));
}

#[test]
fn cache_loop_fixture() {
    let g = fixture_graph("cache_diamond.cfg");
    let c = MustCache::default();
    let r = run(&g, &c, &EngineConfig::new(Algorithm::Classic, 3)).unwrap();
    // Block 0 is accessed on both branches, so it is guaranteed at the join.
    assert!(r.in_facts[&VertexId(4)].must_hit(0));
    assert!(!r.in_facts[&VertexId(4)].must_hit(1));
    assert_eq!(check_fixed_point(&g, &c, &r), Ok(()));
}

fn same_everywhere<A: Analysis>(g: &SuperGraph, a: &A) {
    let base = run(g, a, &EngineConfig::new(Algorithm::Optimized, 1)).unwrap();
    let base_classic = run(g, a, &EngineConfig::new(Algorithm::Classic, 1)).unwrap();
    for workers in [2, 3, 7] {
        let opt = run(g, a, &EngineConfig::new(Algorithm::Optimized, workers)).unwrap();
        assert!(opt.same_facts(&base));
        assert_eq!(opt.stats, base.stats);
        let classic = run(g, a, &EngineConfig::new(Algorithm::Classic, workers)).unwrap();
        assert!(classic.same_facts(&base));
        assert_eq!(classic.stats, base_classic.stats);
    }
    assert_eq!(check_fixed_point(g, a, &base), Ok(()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn worker_count_does_not_change_results(seed in any::<u64>()) {
        let g = random_graph(&mut rng(seed), 30, 80);
        same_everywhere(&g, &ReachingDefs);
        same_everywhere(&g, &ConstProp);
        same_everywhere(&g, &MustCache::new(2, 2).unwrap());
    }

    #[test]
    fn computed_vertices_are_exactly_the_reachable_ones(seed in any::<u64>()) {
        let g = random_graph(&mut rng(seed), 30, 60);
        let mut reach: BTreeSet<VertexId> = g.entries().clone();
        let mut stack: Vec<VertexId> = reach.iter().copied().collect();
        while let Some(v) = stack.pop() {
            for s in g.succs(v) {
                if reach.insert(*s) {
                    stack.push(*s);
                }
            }
        }
        let r = run(&g, &ReachingDefs, &EngineConfig::new(Algorithm::Optimized, 2)).unwrap();
        prop_assert_eq!(r.computed, reach);
    }
}

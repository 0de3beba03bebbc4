//! Exact search against exhaustive enumeration, plus the algebraic
//! properties every optimum must satisfy.

mod common;

use proptest::prelude::*;

use vflow::bnb::{
    greedy_solve, solve, BottleneckScorer, CoverScorer, OpenTrack, SearchView, SolveStatus, SolverConfig,
};
use vflow::flow::{validate, FlowNetwork, PathCover};
use vflow::oracle::{brute_force_solve_with_limit, enumerate_covers_with_limit, OracleOutcome};

const LIMIT: usize = 20;

fn assert_matches_oracle(net: &FlowNetwork, jobs: usize) {
    let cfg = SolverConfig {
        jobs,
        ..Default::default()
    };
    let got = solve(net, &cfg).unwrap();
    match brute_force_solve_with_limit(net, LIMIT).unwrap() {
        OracleOutcome::Infeasible => assert_eq!(got.status, SolveStatus::Infeasible),
        OracleOutcome::Optimal { solution, cover } => {
            assert_eq!(got.status, SolveStatus::Optimal);
            assert_eq!(got.objective(), Some(solution.objective));
            assert_eq!(got.cover.as_ref(), Some(&cover));
            assert!(validate(net, got.solution.as_ref().unwrap()).unwrap().is_empty());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 120, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn tracking_instances_match_enumeration(seed in any::<u64>()) {
        let g = common::random_mot(seed, 10);
        assert_matches_oracle(&g.net, 1);
    }

    #[test]
    fn dag_instances_match_enumeration(seed in any::<u64>()) {
        assert_matches_oracle(&common::random_dag(seed), 1);
    }

    #[test]
    fn worker_count_does_not_change_the_answer(seed in any::<u64>()) {
        let net = common::random_mot(seed, 10).net;
        let one = solve(&net, &SolverConfig::default()).unwrap();
        let four = solve(&net, &SolverConfig { jobs: 4, ..Default::default() }).unwrap();
        prop_assert_eq!(one.status, four.status);
        prop_assert_eq!(one.cover, four.cover);
        prop_assert_eq!(one.solution, four.solution);
    }

    #[test]
    fn scaling_capacities_scales_the_optimum(seed in any::<u64>(), which in 0usize..3) {
        let lambda = [0.5, 2.0, 10.0][which];
        let net = common::random_mot(seed, 10).net;
        let base = solve(&net, &SolverConfig::default()).unwrap();
        let scaled = solve(&net.scaled(lambda).unwrap(), &SolverConfig::default()).unwrap();
        prop_assert_eq!(base.status, scaled.status);
        if let (Some(a), Some(b)) = (base.objective(), scaled.objective()) {
            prop_assert!((b - lambda * a).abs() <= 1e-9 * (lambda * a).abs().max(1e-12));
            prop_assert_eq!(base.cover, scaled.cover);
        }
    }

    #[test]
    fn greedy_never_beats_the_optimum(seed in any::<u64>()) {
        let net = common::random_mot(seed, 10).net;
        let best = solve(&net, &SolverConfig::default()).unwrap();
        if let Ok((sol, _)) = greedy_solve(&net) {
            prop_assert!(validate(&net, &sol).unwrap().is_empty());
            prop_assert!(sol.objective <= best.objective().unwrap());
        }
    }

    #[test]
    fn bound_covers_every_completion(seed in any::<u64>()) {
        let net = common::random_mot(seed, 6).net;
        let scorer = BottleneckScorer::new(&net);
        for cover in enumerate_covers_with_limit(&net, LIMIT).unwrap() {
            let value = scorer.cover_value(&cover);
            for pos in 0..=net.intermediate_count() {
                let tracks = prefix_state(&net, &scorer, &cover, pos);
                let bound = scorer.bound(&SearchView { pos, tracks: &tracks, d: net.d() });
                prop_assert!(bound >= value - 1e-9, "pos {pos}: bound {bound} < completion {value}");
            }
        }
    }
}

/// Open paths of `cover` restricted to the first `pos` nodes of the
/// topological order, ordered by when they were started.
fn prefix_state<'a>(
    net: &FlowNetwork,
    scorer: &BottleneckScorer<'a>,
    cover: &PathCover,
    pos: usize,
) -> Vec<OpenTrack<<BottleneckScorer<'a> as CoverScorer>::Track>> {
    let order = net.intermediate_order();
    let placed = |v: usize| order[..pos].contains(&v);
    let mut started: Vec<(usize, OpenTrack<_>)> = Vec::new();
    for path in cover.paths() {
        let interior = &path[1..path.len() - 1];
        let n = interior.iter().take_while(|&&v| placed(v)).count();
        if n == 0 {
            continue;
        }
        let first = net.find_edge(path[0], path[1]).unwrap();
        let mut acc = scorer.open(first);
        for w in path[1..=n].windows(2) {
            acc = scorer.extend(&acc, net.find_edge(w[0], w[1]).unwrap());
        }
        let start = order.iter().position(|&v| v == path[1]).unwrap();
        started.push((start, OpenTrack { tail: path[n], acc }));
    }
    started.sort_by_key(|(s, _)| *s);
    started.into_iter().map(|(_, t)| t).collect()
}

#[test]
fn clear_feature_choice_beats_summed_similarity() {
    // Two objects, each keeping one strong dimension while the others drift.
    // Every detection has the same capacity sum, so only the per-dimension
    // minimum along a track separates the correct pairing from the swap.
    use vflow::flow::{CapVec, NetworkBuilder};
    let mut b = NetworkBuilder::new();
    b.edge("s", "a1", CapVec::Infinite)
        .edge("s", "b1", CapVec::Infinite)
        .edge("a1", "a1'", CapVec::finite([0.9, 0.05, 0.05]))
        .edge("b1", "b1'", CapVec::finite([0.05, 0.9, 0.05]))
        .edge("a1'", "a2", CapVec::Infinite)
        .edge("a1'", "b2", CapVec::Infinite)
        .edge("b1'", "a2", CapVec::Infinite)
        .edge("b1'", "b2", CapVec::Infinite)
        .edge("a2", "a2'", CapVec::finite([0.8, 0.0, 0.6]))
        .edge("b2", "b2'", CapVec::finite([0.0, 0.8, 0.6]))
        .edge("a2'", "t", CapVec::Infinite)
        .edge("b2'", "t", CapVec::Infinite);
    let net = b.build("s", "t", 3, 2).unwrap();
    let out = solve(&net, &SolverConfig::default()).unwrap();
    let name = |v| net.name(v).to_string();
    let paths: Vec<Vec<String>> = out
        .cover
        .as_ref()
        .unwrap()
        .paths()
        .iter()
        .map(|p| p.iter().map(|&v| name(v)).collect())
        .collect();
    assert_eq!(
        paths,
        [
            ["s", "a1", "a1'", "a2", "a2'", "t"],
            ["s", "b1", "b1'", "b2", "b2'", "t"]
        ]
    );
    // (0.8, 0, 0.05) + (0, 0.8, 0.05); the swap would keep only 0.1 + 0.1.
    assert!((out.objective().unwrap() - 1.7).abs() < 1e-12);
}

#[test]
fn generator_yields_mostly_feasible_nontrivial_instances() {
    let mut feasible = 0;
    let mut multi_cover = 0;
    let mut dets = 0;
    for seed in 0..200 {
        let g = common::random_mot(seed, 10);
        dets += g.detections.len();
        let covers = enumerate_covers_with_limit(&g.net, LIMIT).unwrap().take(2).count();
        feasible += usize::from(covers > 0);
        multi_cover += usize::from(covers > 1);
    }
    eprintln!(
        "feasible {feasible}/200, with choices {multi_cover}, mean detections {}",
        dets as f64 / 200.0
    );
    assert!(feasible >= 120, "only {feasible} of 200 instances are feasible");
    assert!(
        multi_cover >= 80,
        "only {multi_cover} of 200 instances have more than one cover"
    );
}

//! Properties of path flows, cover enumeration and the LP model, checked
//! on every cover of small random networks.

mod common;

use proptest::prelude::*;

use vflow::flow::{flow_from_paths, validate, CapVec, Edge, FlowNetwork, PathCover};
use vflow::lp::{LpError, LpInstance};
use vflow::oracle::{brute_force_solve, enumerate_covers, OracleOutcome};

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 150,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn covers(net: &FlowNetwork) -> Vec<PathCover> {
    enumerate_covers(net).unwrap().collect()
}

/// Value of a cover computed directly: per path, the component sum of the
/// elementwise minimum over its finite capacities.
fn direct_value(net: &FlowNetwork, cover: &PathCover) -> f64 {
    let mut total = 0.0;
    for path in cover.paths() {
        let mut m = vec![f64::INFINITY; net.k()];
        for w in path.windows(2) {
            let e = net.edge(net.find_edge(w[0], w[1]).unwrap());
            if let Some(c) = e.capacity.as_finite() {
                for (a, b) in m.iter_mut().zip(c) {
                    *a = a.min(*b);
                }
            }
        }
        total += m.iter().sum::<f64>();
    }
    total
}

/// Number of covers counted without the enumerator: every choice of edges
/// between intermediate nodes that gives each node at most one successor and
/// one predecessor, leaves exactly `d` chains, and lets every chain start
/// from the source and end at the sink.
fn count_covers(net: &FlowNetwork) -> usize {
    let (s, t) = (net.source(), net.sink());
    let inner: Vec<usize> = (0..net.edges().len())
        .filter(|&i| {
            let e = net.edge(i);
            e.from != s && e.to != t
        })
        .collect();
    let n = net.intermediate_count();
    if n < net.d() {
        return 0;
    }
    let mut count = 0;
    for mask in 0u32..(1 << inner.len()) {
        if mask.count_ones() as usize != n - net.d() {
            continue;
        }
        let mut has_out = vec![false; net.node_count()];
        let mut has_in = vec![false; net.node_count()];
        let mut ok = true;
        for (bit, &i) in inner.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                let e = net.edge(i);
                ok &= !has_out[e.from] && !has_in[e.to];
                has_out[e.from] = true;
                has_in[e.to] = true;
            }
        }
        ok &= (0..net.node_count())
            .filter(|&v| net.is_intermediate(v))
            .all(|v| (has_in[v] || net.find_edge(s, v).is_some()) && (has_out[v] || net.find_edge(v, t).is_some()));
        count += usize::from(ok);
    }
    count
}

fn map_capacities(net: &FlowNetwork, mut f: impl FnMut(usize, &[f64]) -> Vec<f64>) -> FlowNetwork {
    let edges = net
        .edges()
        .iter()
        .enumerate()
        .map(|(i, e)| Edge {
            from: e.from,
            to: e.to,
            capacity: match &e.capacity {
                CapVec::Finite(c) => CapVec::Finite(f(i, c)),
                CapVec::Infinite => CapVec::Infinite,
            },
        })
        .collect();
    FlowNetwork::new(net.names().to_vec(), net.source(), net.sink(), edges, net.k(), net.d()).unwrap()
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn path_flows_are_feasible_and_match_direct_values(seed in any::<u64>()) {
        let net = common::random_dag(seed);
        for cover in covers(&net) {
            let sol = flow_from_paths(&net, &cover).unwrap();
            prop_assert!(validate(&net, &sol).unwrap().is_empty());
            prop_assert!((sol.objective - direct_value(&net, &cover)).abs() < 1e-12);
        }
    }

    #[test]
    fn enumeration_count_matches_independent_count(seed in any::<u64>()) {
        let net = common::random_dag(seed);
        prop_assert_eq!(covers(&net).len(), count_covers(&net));
    }

    #[test]
    fn oracle_is_at_least_every_cover(seed in any::<u64>()) {
        let net = common::random_dag(seed);
        let all = covers(&net);
        match brute_force_solve(&net).unwrap() {
            OracleOutcome::Infeasible => prop_assert!(all.is_empty()),
            OracleOutcome::Optimal { solution, .. } => {
                for cover in &all {
                    prop_assert!(solution.objective >= flow_from_paths(&net, cover).unwrap().objective);
                }
            }
        }
    }

    #[test]
    fn dimension_permutation_keeps_every_value(seed in any::<u64>(), rot in 0usize..4) {
        let net = common::random_dag(seed);
        let k = net.k();
        let permuted = map_capacities(&net, |_, c| (0..k).map(|j| c[(j + rot) % k]).collect());
        for cover in covers(&net) {
            let a = flow_from_paths(&net, &cover).unwrap().objective;
            let b = flow_from_paths(&permuted, &cover).unwrap().objective;
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn scaling_scales_every_value(seed in any::<u64>(), lambda in 0.01f64..100.0) {
        let net = common::random_dag(seed);
        let scaled = net.scaled(lambda).unwrap();
        for cover in covers(&net) {
            let a = flow_from_paths(&net, &cover).unwrap().objective;
            let b = flow_from_paths(&scaled, &cover).unwrap().objective;
            prop_assert!((b - lambda * a).abs() <= 1e-12 * (lambda * a).max(1.0));
        }
    }

    #[test]
    fn raising_a_capacity_never_lowers_a_value(seed in any::<u64>(), pick in any::<usize>(), raise in 0.0f64..1.0) {
        let net = common::random_dag(seed);
        let finite: Vec<usize> = (0..net.edges().len()).filter(|&i| !net.edge(i).capacity.is_infinite()).collect();
        let target = finite[pick % finite.len()];
        let dim = pick / finite.len() % net.k();
        let raised = map_capacities(&net, |i, c| {
            let mut c = c.to_vec();
            if i == target {
                c[dim] += raise;
            }
            c
        });
        for cover in covers(&net) {
            prop_assert!(
                flow_from_paths(&raised, &cover).unwrap().objective >= flow_from_paths(&net, &cover).unwrap().objective
            );
        }
    }

    #[test]
    fn lp_points_map_back_to_valid_solutions(seed in any::<u64>(), shrink in 0.0f64..=1.0) {
        let net = common::random_dag(seed);
        let lp = match LpInstance::new(&net) {
            Ok(lp) => lp,
            Err(LpError::NoSourceEdge) => {
                prop_assert!(covers(&net).is_empty());
                return Ok(());
            }
            Err(e) => panic!("{e}"),
        };
        for cover in covers(&net) {
            let sol = flow_from_paths(&net, &cover).unwrap();
            let values = lp.values_of(&sol);
            prop_assert!(lp.violated(&values, 1e-9).is_empty());
            prop_assert!((lp.objective_value(&values) - sol.objective).abs() < 1e-12);
            prop_assert_eq!(&lp.to_solution(&net, &values), &sol);

            // Any smaller path flow is another feasible point of the model.
            let mut smaller = sol.clone();
            for f in smaller.flows.iter_mut().flatten() {
                *f *= shrink;
            }
            let values = lp.values_of(&smaller);
            prop_assert!(lp.violated(&values, 1e-9).is_empty());
            let back = lp.to_solution(&net, &values);
            prop_assert!(validate(&net, &back).unwrap().is_empty());
        }
    }
}

#[test]
fn flow_examples() {
    let single = |caps: &[[f64; 2]]| {
        let mut b = vflow::flow::NetworkBuilder::new();
        b.edge("s", "n0", CapVec::Infinite);
        for (i, c) in caps.iter().enumerate() {
            b.edge(&format!("n{i}"), &format!("n{}", i + 1), CapVec::finite(*c));
        }
        b.edge(&format!("n{}", caps.len()), "t", CapVec::Infinite);
        let net = b.build("s", "t", 2, 1).unwrap();
        let cover = covers(&net).remove(0);
        flow_from_paths(&net, &cover).unwrap()
    };
    let one = single(&[[0.5, 0.2]]);
    assert_eq!(one.flows[0], [0.5, 0.2]);
    assert!((one.objective - 0.7).abs() < 1e-12);

    let two = single(&[[0.5, 0.2], [0.1, 0.9]]);
    assert_eq!(two.flows[0], [0.1, 0.2]);
    // Neither edge's own sum (0.7 or 1.0) survives the path.
    assert!((two.objective - 0.3).abs() < 1e-12);
}

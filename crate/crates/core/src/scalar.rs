//! Scalar baseline: separable per-edge costs minimized over the same path
//! covers, using the same search engine as the vector solver.
//!
//! Transition edges cost `1 - similarity` of the two detections' features,
//! entering and leaving a track cost `beta`, observations are free.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bnb::{run_search, CoverScorer, SearchView, SolveError, SolveStatus, SolverConfig};
use crate::features::{cosine_similarity, histogram_intersection};
use crate::flow::{flow_from_paths, FlowNetwork, PathCover, Solution};
use crate::mot::{EdgeRole, MotGraph, TrackSet};

/// Default cost of starting or ending a track.
pub const DEFAULT_BETA: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    #[default]
    Cosine,
    Intersection,
}

impl Similarity {
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Similarity::Cosine => cosine_similarity(a, b),
            Similarity::Intersection => histogram_intersection(a, b),
        }
    }
}

impl FromStr for Similarity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cosine" => Ok(Similarity::Cosine),
            "intersection" | "histogram-intersection" => Ok(Similarity::Intersection),
            other => Err(format!(
                "unknown similarity {other:?} (expected cosine or intersection)"
            )),
        }
    }
}

impl fmt::Display for Similarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Similarity::Cosine => "cosine",
            Similarity::Intersection => "intersection",
        })
    }
}

/// Cost of every edge of `graph`, aligned with `graph.net.edges()`.
pub fn scalar_costs(graph: &MotGraph, sim: Similarity, beta: f64) -> Vec<f64> {
    graph
        .roles
        .iter()
        .map(|r| match *r {
            EdgeRole::Enter { .. } | EdgeRole::Exit { .. } => beta,
            EdgeRole::Observation { .. } => 0.0,
            EdgeRole::Transition { from, to } => {
                let (a, b) = (&graph.detections[from], &graph.detections[to]);
                1.0 - sim.eval(&a.feature, &b.feature)
            }
        })
        .collect()
}

/// Total cost of a cover, summed path by path in canonical order.
pub fn cover_cost(net: &FlowNetwork, costs: &[f64], cover: &PathCover) -> f64 {
    let mut total = 0.0;
    for p in cover.paths() {
        for w in p.windows(2) {
            let e = net.find_edge(w[0], w[1]).expect("cover edges exist");
            total += costs[e];
        }
    }
    total
}

/// Maximizes the negated cost.
///
/// With separable costs, the cheapest completion of a partial cover is an
/// assignment problem: every unplaced node picks one predecessor among the
/// open path tails, the other unplaced nodes and the source (which starts
/// exactly the missing paths), and every tail or unplaced node picks one
/// successor among the unplaced nodes and the sink (which ends all `d`
/// paths). Acyclicity makes every assignment a valid completion, so the
/// assignment optimum is the exact completion cost. Large instances fall
/// back to charging each unplaced node its cheapest incoming edge.
pub struct ScalarScorer<'a> {
    net: &'a FlowNetwork,
    costs: &'a [f64],
    /// Sum of cheapest incoming costs over nodes at positions `>= p`.
    suffix_in: Vec<f64>,
    min_exit: f64,
    /// Position of each intermediate node in the topological order.
    pos_of: Vec<usize>,
    /// Penalty standing in for a missing edge in the assignment.
    missing: f64,
}

/// Above this many unplaced nodes the assignment bound is not computed.
const ASSIGNMENT_LIMIT: usize = 400;

impl<'a> ScalarScorer<'a> {
    pub fn new(net: &'a FlowNetwork, costs: &'a [f64]) -> Result<Self, SolveError> {
        if costs.len() != net.edges().len() || costs.iter().any(|c| !c.is_finite()) {
            return Err(SolveError::InvalidConfig("one finite cost per edge is required".into()));
        }
        let order = net.intermediate_order();
        let mut suffix_in = vec![0.0; order.len() + 1];
        for p in (0..order.len()).rev() {
            let cheapest = net
                .in_edges(order[p])
                .iter()
                .map(|&e| costs[e])
                .fold(f64::INFINITY, f64::min);
            suffix_in[p] = suffix_in[p + 1] + cheapest;
        }
        let min_exit = net
            .in_edges(net.sink())
            .iter()
            .map(|&e| costs[e])
            .fold(f64::INFINITY, f64::min);
        let mut pos_of = vec![usize::MAX; net.node_count()];
        for (p, &v) in order.iter().enumerate() {
            pos_of[v] = p;
        }
        let span: f64 = costs.iter().map(|c| c.abs()).sum();
        Ok(Self {
            net,
            costs,
            suffix_in,
            min_exit,
            pos_of,
            missing: 1e6 * (1.0 + span),
        })
    }

    /// Cheapest cost of the edges still to be chosen, or `None` when no
    /// completion exists.
    fn completion_cost(&self, view: &SearchView<'_, f64>) -> Option<f64> {
        let net = self.net;
        let unplaced = &net.intermediate_order()[view.pos..];
        let starts = view.d - view.tracks.len();
        let n = unplaced.len() + view.d;
        let u = unplaced.len();
        // Rows: tails, unplaced nodes, source copies. Columns: unplaced
        // nodes, sink copies.
        let mut a = vec![self.missing; n * n];
        let mut fill_row = |row: usize, from: usize| {
            for &e in net.out_edges(from) {
                let to = net.edge(e).to;
                if to == net.sink() {
                    for c in u..n {
                        a[row * n + c] = self.costs[e];
                    }
                } else if self.pos_of[to] >= view.pos {
                    a[row * n + self.pos_of[to] - view.pos] = self.costs[e];
                }
            }
        };
        for (r, t) in view.tracks.iter().enumerate() {
            fill_row(r, t.tail);
        }
        for (i, &v) in unplaced.iter().enumerate() {
            fill_row(view.tracks.len() + i, v);
        }
        let first_source_row = view.tracks.len() + u;
        debug_assert_eq!(first_source_row + starts, n);
        for &e in net.out_edges(net.source()) {
            let to = net.edge(e).to;
            if self.pos_of[to] >= view.pos && self.pos_of[to] != usize::MAX {
                for r in first_source_row..n {
                    a[r * n + self.pos_of[to] - view.pos] = self.costs[e];
                }
            }
        }
        let (total, feasible) = min_assignment(n, &a, self.missing);
        feasible.then_some(total)
    }
}

/// Minimum-cost perfect assignment of an `n x n` row-major matrix
/// (Hungarian method with potentials). Returns the cost and whether every
/// chosen entry is below `missing`.
fn min_assignment(n: usize, a: &[f64], missing: f64) -> (f64, bool) {
    if n == 0 {
        return (0.0, true);
    }
    let mut pu = vec![0.0; n + 1];
    let mut pv = vec![0.0; n + 1];
    // col_row[j]: row matched to column j (1-based, 0 = none).
    let mut col_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        col_row[0] = i;
        let mut j0 = 0;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = col_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = a[(i0 - 1) * n + j - 1] - pu[i0] - pv[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    pu[col_row[j]] += delta;
                    pv[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_row[j0] = col_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut total = 0.0;
    let mut feasible = true;
    for j in 1..=n {
        let c = a[(col_row[j] - 1) * n + j - 1];
        feasible &= c < missing;
        total += c;
    }
    (total, feasible)
}

impl CoverScorer for ScalarScorer<'_> {
    type Track = f64;

    fn open(&self, edge: usize) -> f64 {
        self.costs[edge]
    }

    fn extend(&self, track: &f64, edge: usize) -> f64 {
        track + self.costs[edge]
    }

    fn bound(&self, view: &SearchView<'_, f64>) -> f64 {
        let placed: f64 = view.tracks.iter().map(|t| t.acc).sum();
        if self.net.intermediate_count() - view.pos > ASSIGNMENT_LIMIT {
            return -(placed + self.suffix_in[view.pos] + view.d as f64 * self.min_exit);
        }
        match self.completion_cost(view) {
            Some(rest) => -(placed + rest),
            None => f64::NEG_INFINITY,
        }
    }

    fn cover_value(&self, cover: &PathCover) -> f64 {
        -cover_cost(self.net, self.costs, cover)
    }
}

#[derive(Debug, Clone)]
pub struct ScalarOutcome {
    pub status: SolveStatus,
    pub cover: Option<PathCover>,
    /// Total cost of the cover.
    pub cost: Option<f64>,
    /// Flow realizing the cover in the vector model.
    pub solution: Option<Solution>,
    pub nodes: u64,
}

/// Exact minimum-cost cover of `net` under per-edge `costs`.
pub fn solve_costs(net: &FlowNetwork, costs: &[f64], cfg: &SolverConfig) -> Result<ScalarOutcome, SolveError> {
    let scorer = ScalarScorer::new(net, costs)?;
    let (status, best, nodes) = run_search(net, &scorer, cfg)?;
    let (cover, cost, solution) = match best {
        Some((_, cover)) => {
            let sol = flow_from_paths(net, &cover).map_err(|_| SolveError::Unbounded)?;
            (Some(cover.clone()), Some(cover_cost(net, costs, &cover)), Some(sol))
        }
        None => (None, None, None),
    };
    Ok(ScalarOutcome {
        status,
        cover,
        cost,
        solution,
        nodes,
    })
}

/// Tracks of the minimum-cost cover of a tracking graph.
pub fn solve_scalar(
    graph: &MotGraph,
    sim: Similarity,
    beta: f64,
    cfg: &SolverConfig,
) -> Result<(ScalarOutcome, Option<TrackSet>), SolveError> {
    let costs = scalar_costs(graph, sim, beta);
    let out = solve_costs(&graph.net, &costs, cfg)?;
    let tracks = out.cover.as_ref().map(|c| graph.decode(c));
    Ok((out, tracks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::validate;
    use crate::mot::tests::det;
    use crate::mot::{build_graph, GraphParams};
    use crate::oracle::{best_cover_by, DEFAULT_NODE_LIMIT};

    fn crossing() -> MotGraph {
        let dets = [
            det(1, 1, 0.0, &[1.0, 0.0]),
            det(1, 2, 0.0, &[0.0, 1.0]),
            det(2, 3, 0.0, &[0.0, 0.9]),
            det(2, 4, 0.0, &[0.8, 0.1]),
        ];
        build_graph(
            &dets,
            &GraphParams {
                d: 2,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn transition_costs() {
        let g = crossing();
        let costs = scalar_costs(&g, Similarity::Cosine, DEFAULT_BETA);
        for (e, from, to) in g.transitions() {
            let (a, b) = (g.detections[from].id, g.detections[to].id);
            match (a, b) {
                (1, 3) | (2, 4) => assert!((costs[e] - 1.0).abs() < 0.2),
                (1, 4) | (2, 3) => assert!(costs[e] < 0.02),
                _ => unreachable!(),
            }
        }
        let identical = [det(1, 1, 0.0, &[0.3, 0.4]), det(2, 2, 0.0, &[0.3, 0.4])];
        let g = build_graph(&identical, &GraphParams::default()).unwrap();
        let c = scalar_costs(&g, Similarity::Cosine, 0.2);
        let (e, _, _) = g.transitions().next().unwrap();
        assert!(c[e].abs() < 1e-12);
    }

    #[test]
    fn zero_feature_costs_one() {
        let dets = [det(1, 1, 0.0, &[0.0, 0.0]), det(2, 2, 0.0, &[1.0, 0.0])];
        let g = build_graph(&dets, &GraphParams::default()).unwrap();
        let c = scalar_costs(&g, Similarity::Cosine, 0.2);
        let (e, _, _) = g.transitions().next().unwrap();
        assert_eq!(c[e], 1.0);
    }

    #[test]
    fn matches_enumeration_and_validates() {
        let g = crossing();
        let costs = scalar_costs(&g, Similarity::Cosine, DEFAULT_BETA);
        let (out, tracks) = solve_scalar(&g, Similarity::Cosine, DEFAULT_BETA, &SolverConfig::default()).unwrap();
        let (cover, best) = best_cover_by(&g.net, DEFAULT_NODE_LIMIT, |c| -cover_cost(&g.net, &costs, c))
            .unwrap()
            .unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        assert_eq!(out.cost, Some(-best));
        assert_eq!(out.cover.as_ref(), Some(&cover));
        let tracks = tracks.unwrap();
        assert_eq!(tracks.track_of(1), tracks.track_of(4));
        assert_eq!(tracks.track_of(2), tracks.track_of(3));
        assert!(validate(&g.net, out.solution.as_ref().unwrap()).unwrap().is_empty());
    }

    #[test]
    fn single_cover_regardless_of_costs() {
        let dets = [det(1, 1, 0.0, &[1.0]), det(2, 2, 0.0, &[0.0])];
        let g = build_graph(&dets, &GraphParams::default()).unwrap();
        for beta in [0.0, 0.2, 5.0] {
            let (out, tracks) = solve_scalar(&g, Similarity::Intersection, beta, &SolverConfig::default()).unwrap();
            assert_eq!(out.status, SolveStatus::Optimal);
            assert_eq!(tracks.unwrap().track_count(), 1);
        }
    }

    #[test]
    fn infeasible_when_too_few_tracks() {
        let dets = [det(1, 1, 0.0, &[1.0]), det(1, 2, 0.0, &[1.0])];
        let g = build_graph(&dets, &GraphParams::default()).unwrap();
        let (out, tracks) = solve_scalar(&g, Similarity::Cosine, 0.2, &SolverConfig::default()).unwrap();
        assert_eq!(out.status, SolveStatus::Infeasible);
        assert!(tracks.is_none());
    }

    #[test]
    fn assignment_matches_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..300 {
            let n = rng.random_range(1..=5);
            let a: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.0..1.0)).collect();
            let mut perm: Vec<usize> = (0..n).collect();
            let mut best = f64::INFINITY;
            permutations(&mut perm, 0, &mut |p| {
                best = best.min(p.iter().enumerate().map(|(i, &j)| a[i * n + j]).sum());
            });
            let (got, ok) = min_assignment(n, &a, 10.0);
            assert!(ok);
            assert!((got - best).abs() < 1e-12, "{got} vs {best}");
        }
    }

    fn permutations(v: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
        if k == v.len() {
            f(v);
            return;
        }
        for i in k..v.len() {
            v.swap(k, i);
            permutations(v, k + 1, f);
            v.swap(k, i);
        }
    }

    #[test]
    fn similarity_names() {
        assert_eq!("cosine".parse::<Similarity>(), Ok(Similarity::Cosine));
        assert_eq!("intersection".parse::<Similarity>(), Ok(Similarity::Intersection));
        assert!("l2".parse::<Similarity>().is_err());
        assert_eq!(Similarity::Intersection.to_string(), "intersection");
    }
}

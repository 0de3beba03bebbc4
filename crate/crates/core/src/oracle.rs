//! Exhaustive reference solver for tiny instances.
//!
//! Covers are streamed in canonical order: paths sorted by first intermediate
//! node, covers in lexicographic order of their interior sequences. The search
//! builds one path at a time, trying "go to sink" before any successor and
//! successors in ascending id order, which yields exactly that order.

use thiserror::Error;

use crate::flow::{flow_from_paths, FlowError, FlowNetwork, NodeId, PathCover, Solution};

/// Default guard against factorial blowup.
pub const DEFAULT_NODE_LIMIT: usize = 14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("{nodes} intermediate nodes exceed the enumeration limit of {limit}")]
    NodeLimit { nodes: usize, limit: usize },
    #[error("the network has a source-sink path without a finite edge; objective is unbounded")]
    Unbounded,
}

impl From<FlowError> for OracleError {
    fn from(_: FlowError) -> Self {
        OracleError::Unbounded
    }
}

#[derive(Debug, Clone, Copy)]
enum Step {
    Start(NodeId),
    Extend(NodeId),
    End,
}

#[derive(Debug)]
struct Frame {
    options: Vec<Step>,
    cursor: usize,
    applied: bool,
}

enum After {
    Yield,
    Dead,
    Branch(Vec<Step>),
}

/// Streaming iterator over every [`PathCover`] of a network.
pub struct CoverEnumerator<'a> {
    net: &'a FlowNetwork,
    covered: Vec<bool>,
    covered_count: usize,
    paths: Vec<Vec<NodeId>>,
    open: bool,
    stack: Vec<Frame>,
}

/// Enumerates covers with the default node limit.
pub fn enumerate_covers(net: &FlowNetwork) -> Result<CoverEnumerator<'_>, OracleError> {
    enumerate_covers_with_limit(net, DEFAULT_NODE_LIMIT)
}

pub fn enumerate_covers_with_limit(net: &FlowNetwork, limit: usize) -> Result<CoverEnumerator<'_>, OracleError> {
    let nodes = net.intermediate_count();
    if nodes > limit {
        return Err(OracleError::NodeLimit { nodes, limit });
    }
    let mut it = CoverEnumerator {
        net,
        covered: vec![false; net.node_count()],
        covered_count: 0,
        paths: Vec::new(),
        open: false,
        stack: Vec::new(),
    };
    let root = it.start_options();
    it.stack.push(Frame {
        options: root,
        cursor: 0,
        applied: false,
    });
    Ok(it)
}

impl CoverEnumerator<'_> {
    fn start_options(&self) -> Vec<Step> {
        let net = self.net;
        let after = self.paths.last().map(|p| p[0]);
        net.out_edges(net.source())
            .iter()
            .map(|&e| net.edge(e).to)
            .filter(|&v| !self.covered[v] && after.is_none_or(|f| v > f))
            .map(Step::Start)
            .collect()
    }

    fn extend_options(&self, tail: NodeId) -> Vec<Step> {
        let net = self.net;
        let mut opts = Vec::new();
        if net.find_edge(tail, net.sink()).is_some() {
            opts.push(Step::End);
        }
        opts.extend(
            net.out_edges(tail)
                .iter()
                .map(|&e| net.edge(e).to)
                .filter(|&w| net.is_intermediate(w) && !self.covered[w])
                .map(Step::Extend),
        );
        opts
    }

    fn cover(&mut self, v: NodeId) {
        self.covered[v] = true;
        self.covered_count += 1;
    }

    fn uncover(&mut self, v: NodeId) {
        self.covered[v] = false;
        self.covered_count -= 1;
    }

    fn apply(&mut self, step: Step) -> After {
        match step {
            Step::Start(f) => {
                self.paths.push(vec![f]);
                self.cover(f);
                self.open = true;
                After::Branch(self.extend_options(f))
            }
            Step::Extend(y) => {
                self.paths.last_mut().expect("open path").push(y);
                self.cover(y);
                After::Branch(self.extend_options(y))
            }
            Step::End => {
                self.open = false;
                if self.paths.len() == self.net.d() {
                    if self.covered_count == self.net.intermediate_count() {
                        After::Yield
                    } else {
                        After::Dead
                    }
                } else if self.completion_possible() {
                    After::Branch(self.start_options())
                } else {
                    After::Dead
                }
            }
        }
    }

    fn undo(&mut self, step: Step) {
        match step {
            Step::Start(f) => {
                self.paths.pop();
                self.uncover(f);
                self.open = false;
            }
            Step::Extend(y) => {
                self.paths.last_mut().expect("open path").pop();
                self.uncover(y);
            }
            Step::End => self.open = true,
        }
    }

    /// Necessary conditions for covering the remaining nodes with the
    /// remaining paths, checked between paths.
    fn completion_possible(&self) -> bool {
        let net = self.net;
        let remaining = net.d() - self.paths.len();
        let last_first = self.paths.last().map(|p| p[0]);
        let mut uncovered = 0;
        let mut forced_starts = 0;
        for &u in net.intermediate_order() {
            if self.covered[u] {
                continue;
            }
            uncovered += 1;
            let has_free_pred = net.in_edges(u).iter().any(|&e| {
                let p = net.edge(e).from;
                net.is_intermediate(p) && !self.covered[p]
            });
            if !has_free_pred {
                let can_start = net.find_edge(net.source(), u).is_some() && last_first.is_none_or(|f| u > f);
                if !can_start {
                    return false;
                }
                forced_starts += 1;
            }
            let has_exit = net.out_edges(u).iter().any(|&e| {
                let w = net.edge(e).to;
                w == net.sink() || !self.covered[w]
            });
            if !has_exit {
                return false;
            }
        }
        uncovered > 0 && forced_starts <= remaining
    }

    fn current_cover(&self) -> PathCover {
        let (s, t) = (self.net.source(), self.net.sink());
        let paths = self
            .paths
            .iter()
            .map(|p| {
                let mut full = Vec::with_capacity(p.len() + 2);
                full.push(s);
                full.extend_from_slice(p);
                full.push(t);
                full
            })
            .collect();
        PathCover::from_canonical(paths)
    }
}

impl Iterator for CoverEnumerator<'_> {
    type Item = PathCover;

    fn next(&mut self) -> Option<PathCover> {
        loop {
            let frame = self.stack.last_mut()?;
            if frame.applied {
                let step = frame.options[frame.cursor - 1];
                frame.applied = false;
                self.undo(step);
                continue;
            }
            if frame.cursor == frame.options.len() {
                self.stack.pop();
                continue;
            }
            let step = frame.options[frame.cursor];
            frame.cursor += 1;
            frame.applied = true;
            match self.apply(step) {
                After::Yield => return Some(self.current_cover()),
                After::Dead => {}
                After::Branch(options) => self.stack.push(Frame {
                    options,
                    cursor: 0,
                    applied: false,
                }),
            }
        }
    }
}

/// Result of an exhaustive search.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleOutcome {
    Optimal { solution: Solution, cover: PathCover },
    Infeasible,
}

impl OracleOutcome {
    pub fn objective(&self) -> Option<f64> {
        match self {
            OracleOutcome::Optimal { solution, .. } => Some(solution.objective),
            OracleOutcome::Infeasible => None,
        }
    }

    pub fn cover(&self) -> Option<&PathCover> {
        match self {
            OracleOutcome::Optimal { cover, .. } => Some(cover),
            OracleOutcome::Infeasible => None,
        }
    }
}

/// Global optimum by enumeration; the first optimum in canonical order wins ties.
pub fn brute_force_solve(net: &FlowNetwork) -> Result<OracleOutcome, OracleError> {
    brute_force_solve_with_limit(net, DEFAULT_NODE_LIMIT)
}

pub fn brute_force_solve_with_limit(net: &FlowNetwork, limit: usize) -> Result<OracleOutcome, OracleError> {
    if net.intermediate_count() <= limit && net.unbounded_path().is_some() {
        return Err(OracleError::Unbounded);
    }
    let mut best: Option<(Solution, PathCover)> = None;
    for cover in enumerate_covers_with_limit(net, limit)? {
        let sol = flow_from_paths(net, &cover)?;
        if best.as_ref().is_none_or(|(b, _)| sol.objective > b.objective) {
            best = Some((sol, cover));
        }
    }
    Ok(match best {
        Some((solution, cover)) => OracleOutcome::Optimal { solution, cover },
        None => OracleOutcome::Infeasible,
    })
}

/// Maximizes an arbitrary cover score by enumeration (first maximum wins).
pub fn best_cover_by(
    net: &FlowNetwork,
    limit: usize,
    mut score: impl FnMut(&PathCover) -> f64,
) -> Result<Option<(PathCover, f64)>, OracleError> {
    let mut best: Option<(PathCover, f64)> = None;
    for cover in enumerate_covers_with_limit(net, limit)? {
        let value = score(&cover);
        if best.as_ref().is_none_or(|(_, b)| value > *b) {
            best = Some((cover, value));
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{CapVec, NetworkBuilder};

    fn names(net: &FlowNetwork, cover: &PathCover) -> Vec<Vec<String>> {
        cover
            .interiors()
            .map(|p| p.iter().map(|&v| net.name(v).to_string()).collect())
            .collect()
    }

    #[test]
    fn single_node_single_cover() {
        let mut b = NetworkBuilder::new();
        b.edge("s", "a", CapVec::Infinite).edge("a", "t", CapVec::finite([1.0]));
        let net = b.build("s", "t", 1, 1).unwrap();
        let covers: Vec<_> = enumerate_covers(&net).unwrap().collect();
        assert_eq!(covers.len(), 1);
        assert_eq!(names(&net, &covers[0]), vec![vec!["a"]]);
    }

    fn parallel(d: usize) -> FlowNetwork {
        let mut b = NetworkBuilder::new();
        b.edge("s", "a", CapVec::Infinite)
            .edge("s", "b", CapVec::Infinite)
            .edge("a", "t", CapVec::finite([1.0, 0.0]))
            .edge("b", "t", CapVec::finite([0.0, 1.0]));
        b.build("s", "t", 2, d).unwrap()
    }

    #[test]
    fn disjointness_forces_the_only_cover() {
        let net = parallel(2);
        let covers: Vec<_> = enumerate_covers(&net).unwrap().collect();
        assert_eq!(covers.len(), 1);
        assert_eq!(names(&net, &covers[0]), vec![vec!["a"], vec!["b"]]);
        let out = brute_force_solve(&net).unwrap();
        assert_eq!(out.objective(), Some(2.0));
    }

    #[test]
    fn uncoverable_node_means_no_cover() {
        let net = parallel(1);
        assert_eq!(enumerate_covers(&net).unwrap().count(), 0);
        assert_eq!(brute_force_solve(&net).unwrap(), OracleOutcome::Infeasible);
    }

    #[test]
    fn d_above_source_fanout_is_infeasible() {
        let net = parallel(3);
        assert_eq!(brute_force_solve(&net).unwrap(), OracleOutcome::Infeasible);
    }

    #[test]
    fn node_limit_is_enforced() {
        let mut b = NetworkBuilder::new();
        for i in 0..15 {
            let n = format!("n{i}");
            b.edge("s", &n, CapVec::Infinite).edge(&n, "t", CapVec::finite([1.0]));
        }
        let net = b.build("s", "t", 1, 15).unwrap();
        assert!(matches!(
            enumerate_covers(&net),
            Err(OracleError::NodeLimit { nodes: 15, limit: 14 })
        ));
        assert_eq!(enumerate_covers_with_limit(&net, 15).unwrap().count(), 1);
    }

    #[test]
    fn two_frame_crossing_pairs_by_feature() {
        // e/o node pairs per detection, transitions from frame 1 to frame 2.
        let feats = [
            ("1a", [1.0, 0.0]),
            ("1b", [0.0, 1.0]),
            ("2a", [0.9, 0.0]),
            ("2b", [0.0, 0.9]),
        ];
        let mut b = NetworkBuilder::new();
        for (id, f) in &feats {
            let (e, o) = (format!("e{id}"), format!("o{id}"));
            b.edge("s", &e, CapVec::Infinite)
                .edge(&e, &o, CapVec::finite(f.to_vec()))
                .edge(&o, "t", CapVec::Infinite);
        }
        for from in ["1a", "1b"] {
            for to in ["2a", "2b"] {
                b.edge(&format!("o{from}"), &format!("e{to}"), CapVec::Infinite);
            }
        }
        let net = b.build("s", "t", 2, 2).unwrap();
        // Both tracks must span both frames: two pairings only.
        assert_eq!(enumerate_covers(&net).unwrap().count(), 2);
        let out = brute_force_solve(&net).unwrap();
        assert!((out.objective().unwrap() - 1.8).abs() < 1e-12);
        assert_eq!(
            names(&net, out.cover().unwrap()),
            vec![vec!["e1a", "o1a", "e2a", "o2a"], vec!["e1b", "o1b", "e2b", "o2b"]]
        );
    }

    #[test]
    fn unbounded_network_is_rejected() {
        let mut b = NetworkBuilder::new();
        b.edge("s", "a", CapVec::Infinite).edge("a", "t", CapVec::Infinite);
        let net = b.build("s", "t", 1, 1).unwrap();
        assert_eq!(brute_force_solve(&net), Err(OracleError::Unbounded));
    }

    #[test]
    fn enumeration_is_in_canonical_order() {
        // Complete DAG on 4 nodes, each reachable from s and reaching t.
        let mut b = NetworkBuilder::new();
        let ns = ["a", "b", "c", "d"];
        for (i, u) in ns.iter().enumerate() {
            b.edge("s", u, CapVec::Infinite).edge(u, "t", CapVec::finite([1.0]));
            for v in &ns[i + 1..] {
                b.edge(u, v, CapVec::Infinite);
            }
        }
        for d in 1..=4 {
            let net = b.build("s", "t", 1, d).unwrap();
            let covers: Vec<_> = enumerate_covers(&net).unwrap().collect();
            assert!(!covers.is_empty());
            for w in covers.windows(2) {
                assert_eq!(w[0].canonical_cmp(&w[1]), std::cmp::Ordering::Less);
            }
            for c in &covers {
                assert_eq!(PathCover::new(&net, c.paths().to_vec()).unwrap(), *c);
            }
        }
    }
}

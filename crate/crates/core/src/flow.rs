//! Graph and flow types for the non-separable vector flow problem.
//!
//! A [`FlowNetwork`] is a DAG between a distinguished source and sink whose
//! edges carry k-dimensional capacity vectors. A feasible activation pattern
//! is a [`PathCover`]: `d` node-disjoint source-sink paths that together visit
//! every intermediate node exactly once. For a fixed cover the best flow sends,
//! along each path, the elementwise minimum of the finite capacities on it.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a node inside a [`FlowNetwork`].
pub type NodeId = usize;

/// Absolute tolerance used by [`validate`].
pub const FEAS_TOL: f64 = 1e-9;

/// Capacity of one edge: a finite non-negative k-vector or unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CapVec {
    Finite(Vec<f64>),
    Infinite,
}

impl CapVec {
    pub fn finite(values: impl Into<Vec<f64>>) -> Self {
        CapVec::Finite(values.into())
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, CapVec::Infinite)
    }

    pub fn as_finite(&self) -> Option<&[f64]> {
        match self {
            CapVec::Finite(v) => Some(v),
            CapVec::Infinite => None,
        }
    }

    /// Component sum, `None` for an infinite capacity.
    pub fn sum(&self) -> Option<f64> {
        self.as_finite().map(|v| v.iter().sum())
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        match self {
            CapVec::Finite(v) => CapVec::Finite(v.iter().map(|x| x * lambda).collect()),
            CapVec::Infinite => CapVec::Infinite,
        }
    }
}

/// Directed edge with its capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub capacity: CapVec,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("dimension k must be positive")]
    ZeroDimension,
    #[error("path count d must be positive")]
    ZeroPathCount,
    #[error("node index {0} is out of range")]
    UnknownNode(NodeId),
    #[error("duplicate node name `{0}`")]
    DuplicateName(String),
    #[error("source and sink must be different nodes")]
    SourceIsSink,
    #[error("self-loop at node `{0}`")]
    SelfLoop(String),
    #[error("duplicate edge `{0}` -> `{1}`")]
    DuplicateEdge(String, String),
    #[error("edge `{0}` -> source is not allowed")]
    EdgeIntoSource(String),
    #[error("edge sink -> `{0}` is not allowed")]
    EdgeOutOfSink(String),
    #[error("a direct source -> sink edge is not allowed")]
    DirectSourceSink,
    #[error("capacity on `{from}` -> `{to}` has {got} entries, expected {expected}")]
    DimensionMismatch {
        from: String,
        to: String,
        expected: usize,
        got: usize,
    },
    #[error("capacity on `{0}` -> `{1}` has a negative or non-finite entry")]
    InvalidCapacity(String, String),
    #[error("graph contains a directed cycle")]
    Cycle,
}

/// Immutable capacitated DAG with source, sink, dimension `k` and path count `d`.
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    names: Vec<String>,
    source: NodeId,
    sink: NodeId,
    edges: Vec<Edge>,
    k: usize,
    d: usize,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
    lookup: HashMap<(NodeId, NodeId), usize>,
    order: Vec<NodeId>,
}

impl FlowNetwork {
    /// Builds and validates a network. Edge order is preserved; adjacency
    /// lists are sorted by the opposite endpoint's index.
    pub fn new(
        names: Vec<String>,
        source: NodeId,
        sink: NodeId,
        edges: Vec<Edge>,
        k: usize,
        d: usize,
    ) -> Result<Self, NetworkError> {
        let n = names.len();
        if k == 0 {
            return Err(NetworkError::ZeroDimension);
        }
        if d == 0 {
            return Err(NetworkError::ZeroPathCount);
        }
        for id in [source, sink] {
            if id >= n {
                return Err(NetworkError::UnknownNode(id));
            }
        }
        if source == sink {
            return Err(NetworkError::SourceIsSink);
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(NetworkError::DuplicateName(name.clone()));
            }
        }

        let mut lookup = HashMap::with_capacity(edges.len());
        let mut out_edges = vec![Vec::new(); n];
        let mut in_edges = vec![Vec::new(); n];
        for (idx, e) in edges.iter().enumerate() {
            if e.from >= n {
                return Err(NetworkError::UnknownNode(e.from));
            }
            if e.to >= n {
                return Err(NetworkError::UnknownNode(e.to));
            }
            let (fname, tname) = (&names[e.from], &names[e.to]);
            if e.from == e.to {
                return Err(NetworkError::SelfLoop(fname.clone()));
            }
            if e.to == source {
                return Err(NetworkError::EdgeIntoSource(fname.clone()));
            }
            if e.from == sink {
                return Err(NetworkError::EdgeOutOfSink(tname.clone()));
            }
            if e.from == source && e.to == sink {
                return Err(NetworkError::DirectSourceSink);
            }
            if let CapVec::Finite(values) = &e.capacity {
                if values.len() != k {
                    return Err(NetworkError::DimensionMismatch {
                        from: fname.clone(),
                        to: tname.clone(),
                        expected: k,
                        got: values.len(),
                    });
                }
                if values.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(NetworkError::InvalidCapacity(fname.clone(), tname.clone()));
                }
            }
            if lookup.insert((e.from, e.to), idx).is_some() {
                return Err(NetworkError::DuplicateEdge(fname.clone(), tname.clone()));
            }
            out_edges[e.from].push(idx);
            in_edges[e.to].push(idx);
        }
        for list in &mut out_edges {
            list.sort_by_key(|&i| edges[i].to);
        }
        for list in &mut in_edges {
            list.sort_by_key(|&i| edges[i].from);
        }

        // Kahn's algorithm, smallest ready index first.
        let mut indeg: Vec<usize> = in_edges.iter().map(Vec::len).collect();
        let mut ready: BinaryHeap<Reverse<NodeId>> = (0..n).filter(|&v| indeg[v] == 0).map(Reverse).collect();
        let mut order = Vec::with_capacity(n);
        let mut visited = 0;
        while let Some(Reverse(v)) = ready.pop() {
            visited += 1;
            if v != source && v != sink {
                order.push(v);
            }
            for &ei in &out_edges[v] {
                let w = edges[ei].to;
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    ready.push(Reverse(w));
                }
            }
        }
        if visited != n {
            return Err(NetworkError::Cycle);
        }

        Ok(Self {
            names,
            source,
            sink,
            edges,
            k,
            d,
            out_edges,
            in_edges,
            lookup,
            order,
        })
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, v: NodeId) -> &str {
        &self.names[v]
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.names.iter().position(|n| n == name)
    }

    pub fn source(&self) -> NodeId {
        self.source
    }

    pub fn sink(&self) -> NodeId {
        self.sink
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, idx: usize) -> &Edge {
        &self.edges[idx]
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Outgoing edge indices of `v`, sorted by head node.
    pub fn out_edges(&self, v: NodeId) -> &[usize] {
        &self.out_edges[v]
    }

    /// Incoming edge indices of `v`, sorted by tail node.
    pub fn in_edges(&self, v: NodeId) -> &[usize] {
        &self.in_edges[v]
    }

    pub fn find_edge(&self, from: NodeId, to: NodeId) -> Option<usize> {
        self.lookup.get(&(from, to)).copied()
    }

    pub fn is_intermediate(&self, v: NodeId) -> bool {
        v != self.source && v != self.sink
    }

    /// Intermediate nodes in topological order (ties: smaller index first).
    pub fn intermediate_order(&self) -> &[NodeId] {
        &self.order
    }

    pub fn intermediate_count(&self) -> usize {
        self.order.len()
    }

    /// Same graph with a different path count.
    pub fn with_d(&self, d: usize) -> Result<Self, NetworkError> {
        if d == 0 {
            return Err(NetworkError::ZeroPathCount);
        }
        let mut net = self.clone();
        net.d = d;
        Ok(net)
    }

    /// Same graph with every finite capacity multiplied by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Result<Self, NetworkError> {
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                from: e.from,
                to: e.to,
                capacity: e.capacity.scaled(lambda),
            })
            .collect();
        Self::new(self.names.clone(), self.source, self.sink, edges, self.k, self.d)
    }

    /// Same graph without the edges for which `keep` returns false.
    pub fn retain_edges(&self, mut keep: impl FnMut(usize, &Edge) -> bool) -> Self {
        let edges = self
            .edges
            .iter()
            .enumerate()
            .filter(|(i, e)| keep(*i, e))
            .map(|(_, e)| e.clone())
            .collect();
        Self::new(self.names.clone(), self.source, self.sink, edges, self.k, self.d)
            .expect("removing edges keeps a valid network")
    }

    /// A source-sink path made only of infinite-capacity edges, if any.
    /// Any cover using such a path has unbounded objective.
    pub fn unbounded_path(&self) -> Option<Vec<NodeId>> {
        let n = self.node_count();
        let mut parent: Vec<Option<NodeId>> = vec![None; n];
        let mut reached = vec![false; n];
        reached[self.source] = true;
        let mut stack = vec![self.source];
        while let Some(u) = stack.pop() {
            for &ei in &self.out_edges[u] {
                let e = &self.edges[ei];
                if e.capacity.is_infinite() && !reached[e.to] {
                    reached[e.to] = true;
                    parent[e.to] = Some(u);
                    stack.push(e.to);
                }
            }
        }
        if !reached[self.sink] {
            return None;
        }
        let mut path = vec![self.sink];
        let mut cur = self.sink;
        while let Some(p) = parent[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        Some(path)
    }
}

/// Incremental construction of a [`FlowNetwork`] by node name.
#[derive(Debug, Default, Clone)]
pub struct NetworkBuilder {
    names: Vec<String>,
    index: HashMap<String, NodeId>,
    edges: Vec<Edge>,
}

impl NetworkBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id of `name`, adding the node if needed.
    pub fn node(&mut self, name: &str) -> NodeId {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn edge(&mut self, from: &str, to: &str, capacity: CapVec) -> &mut Self {
        let (u, v) = (self.node(from), self.node(to));
        self.edges.push(Edge {
            from: u,
            to: v,
            capacity,
        });
        self
    }

    pub fn build(&self, source: &str, sink: &str, k: usize, d: usize) -> Result<FlowNetwork, NetworkError> {
        let mut b = self.clone();
        let s = b.node(source);
        let t = b.node(sink);
        FlowNetwork::new(b.names, s, t, b.edges, k, d)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoverError {
    #[error("expected {expected} paths, got {got}")]
    WrongPathCount { expected: usize, got: usize },
    #[error("path {0} does not run from source to sink through an intermediate node")]
    BadEndpoints(usize),
    #[error("path uses missing edge `{0}` -> `{1}`")]
    MissingEdge(String, String),
    #[error("node `{0}` is visited more than once")]
    NodeReused(String),
    #[error("node `{0}` is not covered by any path")]
    NodeUncovered(String),
}

/// `d` node-disjoint source-sink paths covering every intermediate node.
///
/// Paths are kept in canonical order: sorted by their first intermediate node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathCover {
    paths: Vec<Vec<NodeId>>,
}

impl PathCover {
    /// Validates `paths` (full node sequences from source to sink) against `net`.
    pub fn new(net: &FlowNetwork, mut paths: Vec<Vec<NodeId>>) -> Result<Self, CoverError> {
        if paths.len() != net.d() {
            return Err(CoverError::WrongPathCount {
                expected: net.d(),
                got: paths.len(),
            });
        }
        let mut seen = vec![false; net.node_count()];
        for (i, p) in paths.iter().enumerate() {
            if p.len() < 3 || p[0] != net.source() || p[p.len() - 1] != net.sink() {
                return Err(CoverError::BadEndpoints(i));
            }
            for w in p.windows(2) {
                if net.find_edge(w[0], w[1]).is_none() {
                    return Err(CoverError::MissingEdge(
                        net.name(w[0]).to_string(),
                        net.name(w[1]).to_string(),
                    ));
                }
            }
            for &v in &p[1..p.len() - 1] {
                if !net.is_intermediate(v) {
                    return Err(CoverError::BadEndpoints(i));
                }
                if std::mem::replace(&mut seen[v], true) {
                    return Err(CoverError::NodeReused(net.name(v).to_string()));
                }
            }
        }
        if let Some(&v) = net.intermediate_order().iter().find(|&&v| !seen[v]) {
            return Err(CoverError::NodeUncovered(net.name(v).to_string()));
        }
        paths.sort_by_key(|p| p[1]);
        Ok(Self { paths })
    }

    /// Caller guarantees validity and canonical order.
    pub(crate) fn from_canonical(paths: Vec<Vec<NodeId>>) -> Self {
        debug_assert!(paths.windows(2).all(|w| w[0][1] < w[1][1]));
        Self { paths }
    }

    pub fn paths(&self) -> &[Vec<NodeId>] {
        &self.paths
    }

    /// Intermediate part of each path.
    pub fn interiors(&self) -> impl Iterator<Item = &[NodeId]> {
        self.paths.iter().map(|p| &p[1..p.len() - 1])
    }

    /// Canonical order: lexicographic over the list of interior sequences.
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.interiors().cmp(other.interiors())
    }
}

/// Per-edge flow vectors and activations plus the objective value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub flows: Vec<Vec<f64>>,
    pub active: Vec<bool>,
    pub objective: f64,
}

impl Solution {
    pub fn zero(net: &FlowNetwork) -> Self {
        Self {
            flows: vec![vec![0.0; net.k()]; net.edges().len()],
            active: vec![false; net.edges().len()],
            objective: 0.0,
        }
    }
}

/// Constraint family of a [`Violation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    Capacity,
    FlowConservation,
    NodeCount,
    TotalCount,
    NonNegativity,
    Objective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Edge { from: NodeId, to: NodeId },
    Node(NodeId),
    Source,
    Sink,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub constraint: Constraint,
    pub location: Location,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at {:?}: {}", self.constraint, self.location, self.detail)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StructuralError {
    #[error("solution has {got} edges, network has {expected}")]
    EdgeCount { expected: usize, got: usize },
    #[error("flow on edge {edge} has {got} entries, expected {expected}")]
    FlowDimension { edge: usize, expected: usize, got: usize },
}

/// Checks `sol` against every constraint family at tolerance [`FEAS_TOL`].
pub fn validate(net: &FlowNetwork, sol: &Solution) -> Result<Vec<Violation>, StructuralError> {
    validate_with_tol(net, sol, FEAS_TOL)
}

pub fn validate_with_tol(net: &FlowNetwork, sol: &Solution, tol: f64) -> Result<Vec<Violation>, StructuralError> {
    let m = net.edges().len();
    if sol.flows.len() != m || sol.active.len() != m {
        return Err(StructuralError::EdgeCount {
            expected: m,
            got: sol.flows.len().min(sol.active.len()),
        });
    }
    if let Some((edge, f)) = sol.flows.iter().enumerate().find(|(_, f)| f.len() != net.k()) {
        return Err(StructuralError::FlowDimension {
            edge,
            expected: net.k(),
            got: f.len(),
        });
    }

    let mut out = Vec::new();
    let edge_loc = |e: &Edge| Location::Edge { from: e.from, to: e.to };

    for (i, e) in net.edges().iter().enumerate() {
        let flow = &sol.flows[i];
        let over = match (&e.capacity, sol.active[i]) {
            (_, false) => flow.iter().position(|&x| x > tol),
            (CapVec::Infinite, true) => None,
            (CapVec::Finite(c), true) => flow.iter().zip(c).position(|(&x, &c)| x > c + tol),
        };
        if let Some(dim) = over {
            let detail = if sol.active[i] {
                format!("flow {} exceeds capacity in dimension {dim}", flow[dim])
            } else {
                format!("inactive edge carries flow {} in dimension {dim}", flow[dim])
            };
            out.push(Violation {
                constraint: Constraint::Capacity,
                location: edge_loc(e),
                detail,
            });
        }
        if let Some(dim) = flow.iter().position(|&x| x < -tol) {
            out.push(Violation {
                constraint: Constraint::NonNegativity,
                location: edge_loc(e),
                detail: format!("negative flow {} in dimension {dim}", flow[dim]),
            });
        }
    }

    for v in 0..net.node_count() {
        if !net.is_intermediate(v) {
            continue;
        }
        let ins = net.in_edges(v);
        let outs = net.out_edges(v);
        let mut worst: Option<(usize, f64)> = None;
        for dim in 0..net.k() {
            let inflow: f64 = ins.iter().map(|&i| sol.flows[i][dim]).sum();
            let outflow: f64 = outs.iter().map(|&i| sol.flows[i][dim]).sum();
            let gap = (inflow - outflow).abs();
            if gap > tol && worst.is_none_or(|(_, g)| gap > g) {
                worst = Some((dim, gap));
            }
        }
        if let Some((dim, gap)) = worst {
            out.push(Violation {
                constraint: Constraint::FlowConservation,
                location: Location::Node(v),
                detail: format!("imbalance {gap} in dimension {dim}"),
            });
        }
        let active_in = ins.iter().filter(|&&i| sol.active[i]).count();
        let active_out = outs.iter().filter(|&&i| sol.active[i]).count();
        if active_in != 1 || active_out != 1 {
            out.push(Violation {
                constraint: Constraint::NodeCount,
                location: Location::Node(v),
                detail: format!("{active_in} active in-edges, {active_out} active out-edges"),
            });
        }
    }

    let from_source = net.out_edges(net.source()).iter().filter(|&&i| sol.active[i]).count();
    if from_source != net.d() {
        out.push(Violation {
            constraint: Constraint::TotalCount,
            location: Location::Source,
            detail: format!("{from_source} active edges leave the source, expected {}", net.d()),
        });
    }
    let into_sink = net.in_edges(net.sink()).iter().filter(|&&i| sol.active[i]).count();
    if into_sink != net.d() {
        out.push(Violation {
            constraint: Constraint::TotalCount,
            location: Location::Sink,
            detail: format!("{into_sink} active edges enter the sink, expected {}", net.d()),
        });
    }

    let expected = objective(net, sol);
    if (expected - sol.objective).abs() > tol * expected.abs().max(1.0) {
        out.push(Violation {
            constraint: Constraint::Objective,
            location: Location::Source,
            detail: format!("objective {} but source flow sums to {expected}", sol.objective),
        });
    }
    Ok(out)
}

/// Sum of all flow components on source-outgoing edges, in head order.
pub fn objective(net: &FlowNetwork, sol: &Solution) -> f64 {
    let mut total = 0.0;
    for &i in net.out_edges(net.source()) {
        let mut edge_sum = 0.0;
        for &x in &sol.flows[i] {
            edge_sum += x;
        }
        total += edge_sum;
    }
    total
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("path {0} crosses no finite-capacity edge; the objective is unbounded")]
    Unbounded(usize),
}

/// Elementwise minimum of the finite capacities along `path`;
/// `None` when every edge is infinite. The path must use existing edges.
pub fn path_bottleneck(net: &FlowNetwork, path: &[NodeId]) -> Option<Vec<f64>> {
    let mut acc: Option<Vec<f64>> = None;
    for w in path.windows(2) {
        let ei = net.find_edge(w[0], w[1]).expect("path edge exists");
        if let CapVec::Finite(c) = &net.edge(ei).capacity {
            match acc.as_mut() {
                None => acc = Some(c.clone()),
                Some(m) => {
                    for (a, &b) in m.iter_mut().zip(c) {
                        *a = a.min(b);
                    }
                }
            }
        }
    }
    acc
}

/// The maximizing flow for the activation pattern of `cover`.
pub fn flow_from_paths(net: &FlowNetwork, cover: &PathCover) -> Result<Solution, FlowError> {
    let mut sol = Solution::zero(net);
    for (pi, path) in cover.paths().iter().enumerate() {
        let bottleneck = path_bottleneck(net, path).ok_or(FlowError::Unbounded(pi))?;
        for w in path.windows(2) {
            let ei = net.find_edge(w[0], w[1]).expect("cover edge exists");
            sol.active[ei] = true;
            sol.flows[ei].clone_from(&bottleneck);
        }
    }
    sol.objective = objective(net, &sol);
    Ok(sol)
}

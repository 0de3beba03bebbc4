//! Export of the vector flow MIP in CPLEX LP format, for cross-checking the
//! exact solver with an external MILP solver.
//!
//! Variables are `f_<u>_<v>_<dim>` (continuous, `dim` 0-based) and
//! `b_<u>_<v>` (binary), with node names reduced to `[A-Za-z0-9_]`; colliding
//! names get their node index appended. Infinite edges are bounded by
//! `f <= M b` with `M` the largest finite capacity entry, except edges the
//! node count rows force active anyway (the only edge into or out of an
//! intermediate node).

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::flow::{objective, CapVec, FlowNetwork, NodeId, Solution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("the network has no finite capacity; the model is unbounded")]
    NoFiniteCapacity,
    #[error("the source has no outgoing edge; the model is infeasible")]
    NoSourceEdge,
    #[error("the network has a source-sink path without a finite edge; the model is unbounded")]
    Unbounded,
    #[error("line {line}: {message}")]
    SolutionSyntax { line: usize, message: String },
    #[error("solution has no value for variable {0}")]
    MissingValue(String),
}

/// Constraint families, in the order they are written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Capacity,
    FlowConservation,
    NodeCount,
    TotalCount,
}

impl Family {
    pub fn header(self) -> &'static str {
        match self {
            Family::Capacity => "capacity",
            Family::FlowConservation => "flow cons.",
            Family::NodeCount => "node count",
            Family::TotalCount => "total count",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub name: String,
    pub family: Family,
    pub terms: Vec<(f64, usize)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    /// Flow on `edge` in dimension `dim`.
    Flow { edge: usize, dim: usize },
    /// Activation of `edge`.
    Active { edge: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpInstance {
    pub names: Vec<String>,
    pub kinds: Vec<VarKind>,
    /// Indices of the objective's variables (all coefficients are 1).
    pub objective: Vec<usize>,
    pub rows: Vec<Row>,
    pub big_m: f64,
    flow_var: Vec<usize>,
    active_var: Vec<usize>,
}

/// Largest finite capacity entry in the network.
pub fn big_m(net: &FlowNetwork) -> Result<f64, LpError> {
    net.edges()
        .iter()
        .filter_map(|e| e.capacity.as_finite())
        .flatten()
        .copied()
        .reduce(f64::max)
        .ok_or(LpError::NoFiniteCapacity)
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect()
}

fn node_labels(net: &FlowNetwork) -> Vec<String> {
    let labels: Vec<String> = net.names().iter().map(|n| sanitize(n)).collect();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for l in &labels {
        *seen.entry(l).or_default() += 1;
    }
    labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            if seen[l.as_str()] > 1 {
                format!("{l}_{i}")
            } else {
                l.clone()
            }
        })
        .collect()
}

/// Edges that every feasible activation must use.
fn forced_active(net: &FlowNetwork) -> HashSet<usize> {
    let mut forced = HashSet::new();
    for v in 0..net.node_count() {
        if !net.is_intermediate(v) {
            continue;
        }
        if let [e] = net.in_edges(v) {
            forced.insert(*e);
        }
        if let [e] = net.out_edges(v) {
            forced.insert(*e);
        }
    }
    forced
}

impl LpInstance {
    pub fn new(net: &FlowNetwork) -> Result<Self, LpError> {
        if net.out_edges(net.source()).is_empty() {
            return Err(LpError::NoSourceEdge);
        }
        let m = big_m(net)?;
        if net.unbounded_path().is_some() {
            return Err(LpError::Unbounded);
        }
        let labels = node_labels(net);
        let k = net.k();
        let mut order: Vec<usize> = (0..net.edges().len()).collect();
        order.sort_by_key(|&e| (net.edge(e).from, net.edge(e).to));

        let mut names = Vec::new();
        let mut kinds = Vec::new();
        let mut flow_var = vec![usize::MAX; net.edges().len() * k];
        let mut active_var = vec![usize::MAX; net.edges().len()];
        let edge_label = |e: usize| {
            let edge = net.edge(e);
            format!("{}_{}", labels[edge.from], labels[edge.to])
        };
        for &e in &order {
            for dim in 0..k {
                flow_var[e * k + dim] = names.len();
                names.push(format!("f_{}_{dim}", edge_label(e)));
                kinds.push(VarKind::Flow { edge: e, dim });
            }
        }
        for &e in &order {
            active_var[e] = names.len();
            names.push(format!("b_{}", edge_label(e)));
            kinds.push(VarKind::Active { edge: e });
        }

        let f = |e: usize, dim: usize| flow_var[e * k + dim];
        let mut source_edges: Vec<usize> = net.out_edges(net.source()).to_vec();
        source_edges.sort_by_key(|&e| net.edge(e).to);
        let objective = source_edges
            .iter()
            .flat_map(|&e| (0..k).map(move |dim| (e, dim)))
            .map(|(e, dim)| f(e, dim))
            .collect();

        let mut rows = Vec::new();
        let forced = forced_active(net);
        for &e in &order {
            let edge = net.edge(e);
            match &edge.capacity {
                CapVec::Finite(c) => {
                    for (dim, &cap) in c.iter().enumerate() {
                        let mut terms = vec![(1.0, f(e, dim))];
                        if cap != 0.0 {
                            terms.push((-cap, active_var[e]));
                        }
                        rows.push(Row {
                            name: format!("cap_{}_{dim}", edge_label(e)),
                            family: Family::Capacity,
                            terms,
                            sense: Sense::Le,
                            rhs: 0.0,
                        });
                    }
                }
                CapVec::Infinite if !forced.contains(&e) => {
                    for dim in 0..k {
                        rows.push(Row {
                            name: format!("bigm_{}_{dim}", edge_label(e)),
                            family: Family::Capacity,
                            terms: vec![(1.0, f(e, dim)), (-m, active_var[e])],
                            sense: Sense::Le,
                            rhs: 0.0,
                        });
                    }
                }
                CapVec::Infinite => {}
            }
        }

        let mut inner: Vec<NodeId> = (0..net.node_count()).filter(|&v| net.is_intermediate(v)).collect();
        inner.sort_unstable();
        let sorted = |mut v: Vec<usize>| {
            v.sort_by_key(|&e| (net.edge(e).from, net.edge(e).to));
            v
        };
        for &v in &inner {
            let ins = sorted(net.in_edges(v).to_vec());
            let outs = sorted(net.out_edges(v).to_vec());
            for dim in 0..k {
                let mut terms: Vec<(f64, usize)> = ins.iter().map(|&e| (1.0, f(e, dim))).collect();
                terms.extend(outs.iter().map(|&e| (-1.0, f(e, dim))));
                rows.push(Row {
                    name: format!("cons_{}_{dim}", labels[v]),
                    family: Family::FlowConservation,
                    terms,
                    sense: Sense::Eq,
                    rhs: 0.0,
                });
            }
        }
        for &v in &inner {
            for (prefix, edges) in [("nin", net.in_edges(v)), ("nout", net.out_edges(v))] {
                rows.push(Row {
                    name: format!("{prefix}_{}", labels[v]),
                    family: Family::NodeCount,
                    terms: sorted(edges.to_vec())
                        .into_iter()
                        .map(|e| (1.0, active_var[e]))
                        .collect(),
                    sense: Sense::Eq,
                    rhs: 1.0,
                });
            }
        }
        for (prefix, edges) in [
            ("tot_out", net.out_edges(net.source())),
            ("tot_in", net.in_edges(net.sink())),
        ] {
            rows.push(Row {
                name: prefix.to_string(),
                family: Family::TotalCount,
                terms: sorted(edges.to_vec())
                    .into_iter()
                    .map(|e| (1.0, active_var[e]))
                    .collect(),
                sense: Sense::Eq,
                rhs: net.d() as f64,
            });
        }

        Ok(Self {
            names,
            kinds,
            objective,
            rows,
            big_m: m,
            flow_var,
            active_var,
        })
    }

    pub fn flow_var(&self, k: usize, edge: usize, dim: usize) -> &str {
        &self.names[self.flow_var[edge * k + dim]]
    }

    pub fn active_var(&self, edge: usize) -> &str {
        &self.names[self.active_var[edge]]
    }

    pub fn rows_of(&self, family: Family) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(move |r| r.family == family)
    }

    /// The model as LP-format text.
    pub fn to_lp(&self, net: &FlowNetwork) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "\\ vector flow MIP: {} nodes, {} edges, k = {}, d = {}, M = {}",
            net.node_count(),
            net.edges().len(),
            net.k(),
            net.d(),
            self.big_m
        );
        out.push_str("Maximize\n obj:");
        let obj: Vec<(f64, usize)> = self.objective.iter().map(|&v| (1.0, v)).collect();
        self.write_terms(&mut out, &obj);
        out.push_str("\nSubject To\n");
        let mut family = None;
        for r in &self.rows {
            if family != Some(r.family) {
                let _ = writeln!(out, "\\ {}", r.family.header());
                family = Some(r.family);
            }
            let _ = write!(out, " {}:", r.name);
            self.write_terms(&mut out, &r.terms);
            let op = match r.sense {
                Sense::Le => "<=",
                Sense::Eq => "=",
            };
            let _ = writeln!(out, " {op} {}", r.rhs);
        }
        out.push_str("Bounds\n\\ non-neg.\n");
        for (name, kind) in self.names.iter().zip(&self.kinds) {
            match kind {
                VarKind::Flow { .. } => {
                    let _ = writeln!(out, " {name} >= 0");
                }
                VarKind::Active { .. } => {
                    let _ = writeln!(out, " 0 <= {name} <= 1");
                }
            }
        }
        out.push_str("Binaries\n");
        for (name, kind) in self.names.iter().zip(&self.kinds) {
            if matches!(kind, VarKind::Active { .. }) {
                let _ = writeln!(out, " {name}");
            }
        }
        out.push_str("End\n");
        out
    }

    fn write_terms(&self, out: &mut String, terms: &[(f64, usize)]) {
        if terms.is_empty() {
            out.push_str(" 0 ");
            out.push_str(&self.names[self.objective.first().copied().unwrap_or(0)]);
            return;
        }
        for (i, &(c, v)) in terms.iter().enumerate() {
            if i > 0 && i % 6 == 0 {
                out.push_str("\n   ");
            }
            let sign = if c < 0.0 { '-' } else { '+' };
            let mag = c.abs();
            if i == 0 && sign == '+' {
                out.push(' ');
            } else {
                let _ = write!(out, " {sign} ");
            }
            if mag != 1.0 {
                let _ = write!(out, "{mag} ");
            }
            out.push_str(&self.names[v]);
        }
    }

    /// Names of rows, bounds and integrality conditions violated by
    /// `values` beyond `tol`.
    pub fn violated(&self, values: &[f64], tol: f64) -> Vec<String> {
        let mut bad = Vec::new();
        for r in &self.rows {
            let lhs: f64 = r.terms.iter().map(|&(c, v)| c * values[v]).sum();
            let ok = match r.sense {
                Sense::Le => lhs <= r.rhs + tol,
                Sense::Eq => (lhs - r.rhs).abs() <= tol,
            };
            if !ok {
                bad.push(r.name.clone());
            }
        }
        for ((name, kind), &x) in self.names.iter().zip(&self.kinds).zip(values) {
            let ok = match kind {
                VarKind::Flow { .. } => x >= -tol,
                VarKind::Active { .. } => x.abs() <= tol || (x - 1.0).abs() <= tol,
            };
            if !ok {
                bad.push(name.clone());
            }
        }
        bad
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|&v| values[v]).sum()
    }

    /// Variable values of a solution, in variable order.
    pub fn values_of(&self, sol: &Solution) -> Vec<f64> {
        self.kinds
            .iter()
            .map(|k| match *k {
                VarKind::Flow { edge, dim } => sol.flows[edge][dim],
                VarKind::Active { edge } => f64::from(u8::from(sol.active[edge])),
            })
            .collect()
    }

    /// Values of a `name value` map in variable order.
    pub fn values_from_map(&self, map: &HashMap<String, f64>) -> Result<Vec<f64>, LpError> {
        self.names
            .iter()
            .map(|n| map.get(n).copied().ok_or_else(|| LpError::MissingValue(n.clone())))
            .collect()
    }

    /// Solution described by variable values; binaries are rounded.
    pub fn to_solution(&self, net: &FlowNetwork, values: &[f64]) -> Solution {
        let mut sol = Solution::zero(net);
        for (kind, &x) in self.kinds.iter().zip(values) {
            match *kind {
                VarKind::Flow { edge, dim } => sol.flows[edge][dim] = x,
                VarKind::Active { edge } => sol.active[edge] = x > 0.5,
            }
        }
        sol.objective = objective(net, &sol);
        sol
    }
}

/// LP-format text of the MIP for `net`.
pub fn export_lp(net: &FlowNetwork) -> Result<String, LpError> {
    Ok(LpInstance::new(net)?.to_lp(net))
}

/// Reads `name value` pairs, one per line. Blank lines and lines starting
/// with `#` or `\` are skipped.
pub fn read_solution(text: &str) -> Result<HashMap<String, f64>, LpError> {
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('\\') {
            continue;
        }
        let err = |message: String| LpError::SolutionSyntax { line: i + 1, message };
        let mut parts = line.split_whitespace();
        let (Some(name), Some(value), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(err("expected `name value`".into()));
        };
        let value: f64 = value
            .parse()
            .map_err(|_| err(format!("cannot parse value {value:?}")))?;
        out.insert(name.to_string(), value);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{flow_from_paths, validate, NetworkBuilder};
    use crate::oracle::enumerate_covers;

    fn single_path() -> FlowNetwork {
        let mut b = NetworkBuilder::new();
        b.edge("s", "a", CapVec::Infinite)
            .edge("a", "t", CapVec::finite([0.5, 0.2]));
        b.build("s", "t", 2, 1).unwrap()
    }

    #[test]
    fn single_path_counts() {
        let net = single_path();
        let lp = LpInstance::new(&net).unwrap();
        let flows = lp.kinds.iter().filter(|k| matches!(k, VarKind::Flow { .. })).count();
        assert_eq!(flows, 4);
        assert_eq!(lp.kinds.len() - flows, 2);
        assert_eq!(lp.rows_of(Family::Capacity).count(), 2);
        assert_eq!(lp.rows_of(Family::FlowConservation).count(), 2);
        assert_eq!(lp.rows_of(Family::NodeCount).count(), 2);
        assert_eq!(lp.rows_of(Family::TotalCount).count(), 2);
    }

    #[test]
    fn text_layout() {
        let text = export_lp(&single_path()).unwrap();
        let expected = "\\ vector flow MIP: 3 nodes, 2 edges, k = 2, d = 1, M = 0.5
Maximize
 obj: f_s_a_0 + f_s_a_1
Subject To
\\ capacity
 cap_a_t_0: f_a_t_0 - 0.5 b_a_t <= 0
 cap_a_t_1: f_a_t_1 - 0.2 b_a_t <= 0
\\ flow cons.
 cons_a_0: f_s_a_0 - f_a_t_0 = 0
 cons_a_1: f_s_a_1 - f_a_t_1 = 0
\\ node count
 nin_a: b_s_a = 1
 nout_a: b_a_t = 1
\\ total count
 tot_out: b_s_a = 1
 tot_in: b_a_t = 1
Bounds
\\ non-neg.
 f_s_a_0 >= 0
 f_s_a_1 >= 0
 f_a_t_0 >= 0
 f_a_t_1 >= 0
 0 <= b_s_a <= 1
 0 <= b_a_t <= 1
Binaries
 b_s_a
 b_a_t
End
";
        assert_eq!(text, expected);
    }

    #[test]
    fn big_m_examples() {
        let mut b = NetworkBuilder::new();
        b.edge("s", "a", CapVec::finite([0.5, 0.2]))
            .edge("a", "t", CapVec::finite([0.1, 0.9]));
        assert_eq!(big_m(&b.build("s", "t", 2, 1).unwrap()), Ok(0.9));
        let mut b = NetworkBuilder::new();
        b.edge("s", "a", CapVec::Infinite)
            .edge("a", "t", CapVec::finite([3.0, 4.0]));
        assert_eq!(big_m(&b.build("s", "t", 2, 1).unwrap()), Ok(4.0));
        let mut b = NetworkBuilder::new();
        b.edge("s", "a", CapVec::Infinite).edge("a", "t", CapVec::Infinite);
        assert_eq!(big_m(&b.build("s", "t", 1, 1).unwrap()), Err(LpError::NoFiniteCapacity));
    }

    #[test]
    fn no_source_edge_is_an_error() {
        let mut b = NetworkBuilder::new();
        b.node("s");
        b.edge("a", "t", CapVec::finite([1.0]));
        let net = b.build("s", "t", 1, 1).unwrap();
        assert_eq!(export_lp(&net), Err(LpError::NoSourceEdge));
    }

    #[test]
    fn colliding_names_are_disambiguated() {
        let mut b = NetworkBuilder::new();
        b.edge("s", "a-1", CapVec::Infinite)
            .edge("s", "a_1", CapVec::Infinite)
            .edge("a-1", "t", CapVec::finite([1.0]))
            .edge("a_1", "t", CapVec::finite([1.0]));
        let net = b.build("s", "t", 1, 2).unwrap();
        let lp = LpInstance::new(&net).unwrap();
        let unique: HashSet<&String> = lp.names.iter().collect();
        assert_eq!(unique.len(), lp.names.len());
    }

    fn crossing() -> FlowNetwork {
        let mut b = NetworkBuilder::new();
        for (n, c) in [
            ("1", [1.0, 0.0]),
            ("2", [0.0, 1.0]),
            ("3", [0.9, 0.0]),
            ("4", [0.0, 0.9]),
        ] {
            b.edge("s", &format!("e{n}"), CapVec::Infinite)
                .edge(&format!("e{n}"), &format!("o{n}"), CapVec::finite(c))
                .edge(&format!("o{n}"), "t", CapVec::Infinite);
        }
        for (u, v) in [("o1", "e3"), ("o1", "e4"), ("o2", "e3"), ("o2", "e4")] {
            b.edge(u, v, CapVec::Infinite);
        }
        b.build("s", "t", 2, 2).unwrap()
    }

    #[test]
    fn every_cover_flow_satisfies_the_model() {
        let net = crossing();
        let lp = LpInstance::new(&net).unwrap();
        for cover in enumerate_covers(&net).unwrap() {
            let sol = flow_from_paths(&net, &cover).unwrap();
            let values = lp.values_of(&sol);
            assert!(lp.violated(&values, 1e-9).is_empty());
            assert_eq!(lp.objective_value(&values), sol.objective);
            let back = lp.to_solution(&net, &values);
            assert_eq!(back, sol);
        }
    }

    #[test]
    fn flow_on_inactive_transition_is_rejected() {
        let net = crossing();
        let lp = LpInstance::new(&net).unwrap();
        let cover = enumerate_covers(&net).unwrap().next().unwrap();
        let mut sol = flow_from_paths(&net, &cover).unwrap();
        let idle = (0..net.edges().len()).find(|&e| !sol.active[e]).unwrap();
        sol.flows[idle][0] = 0.5;
        assert!(!lp.violated(&lp.values_of(&sol), 1e-9).is_empty());
        assert!(!validate(&net, &sol).unwrap().is_empty());
    }

    #[test]
    fn solution_reader() {
        let map = read_solution("# comment\nf_s_a_0 0.5\n\nb_s_a 1\n").unwrap();
        assert_eq!(map["f_s_a_0"], 0.5);
        let err = read_solution("x 1\ny\n").unwrap_err();
        assert!(matches!(err, LpError::SolutionSyntax { line: 2, .. }));
        let lp = LpInstance::new(&single_path()).unwrap();
        assert!(matches!(lp.values_from_map(&map), Err(LpError::MissingValue(_))));
    }
}

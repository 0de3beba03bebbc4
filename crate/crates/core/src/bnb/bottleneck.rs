//! Vector objective: each path contributes the component sum of the
//! elementwise minimum of the finite capacities along it.
//!
//! Two admissible bounds are combined. The prefix-min bound adds the current
//! running minima of open paths and, for every path not yet opened, the
//! largest component sum of a finite edge still reachable. When all paths are
//! open, a per-dimension bound also charges the unavoidable loss caused by
//! groups of pending edges that must lie on pairwise different paths.

use crate::flow::{path_bottleneck, CapVec, FlowNetwork, PathCover};

use super::engine::{CoverScorer, SearchView};

/// Component sum of a running minimum.
pub(crate) fn vec_sum(v: &[f64]) -> f64 {
    let mut s = 0.0;
    for &x in v {
        s += x;
    }
    s
}

/// Prefix-min bound: open path values plus `unopened` copies of the best
/// single-edge value still available.
pub(crate) fn prefix_min_bound(
    open_values: impl IntoIterator<Item = f64>,
    unopened: usize,
    best_remaining: f64,
) -> f64 {
    let mut total: f64 = open_values.into_iter().sum();
    if unopened > 0 {
        total += unopened as f64 * best_remaining;
    }
    total
}

#[derive(Debug, Clone, Copy)]
struct Forced {
    tail_pos: usize,
    edge: usize,
}

pub struct BottleneckScorer<'a> {
    net: &'a FlowNetwork,
    suffix_best: Vec<f64>,
    exit_best: f64,
    /// Single finite out-edge leading to an intermediate node.
    forced: Vec<Option<usize>>,
    groups: Vec<Vec<Forced>>,
}

/// Above this many intermediate nodes the reachability matrix is skipped.
const GROUP_NODE_LIMIT: usize = 4096;

impl<'a> BottleneckScorer<'a> {
    pub fn new(net: &'a FlowNetwork) -> Self {
        let order = net.intermediate_order();
        let n = order.len();
        let mut pos_of = vec![usize::MAX; net.node_count()];
        for (p, &v) in order.iter().enumerate() {
            pos_of[v] = p;
        }

        let mut suffix_best = vec![f64::NEG_INFINITY; n + 1];
        let mut exit_best = f64::NEG_INFINITY;
        for e in net.edges() {
            let Some(sum) = e.capacity.sum() else { continue };
            if e.to == net.sink() {
                exit_best = exit_best.max(sum);
            } else {
                let p = pos_of[e.to];
                suffix_best[p] = suffix_best[p].max(sum);
            }
        }
        for p in (0..n).rev() {
            suffix_best[p] = suffix_best[p].max(suffix_best[p + 1]);
        }

        let mut forced = vec![None; net.node_count()];
        for &u in order {
            if let [e] = net.out_edges(u) {
                let edge = net.edge(*e);
                if net.is_intermediate(edge.to) && !edge.capacity.is_infinite() {
                    forced[u] = Some(*e);
                }
            }
        }

        let groups = if n <= GROUP_NODE_LIMIT {
            Self::antichain_groups(net, &pos_of, &forced)
        } else {
            Vec::new()
        };

        Self {
            net,
            suffix_best,
            exit_best,
            forced,
            groups,
        }
    }

    /// Greedily groups forced edges (in topological order of their tails)
    /// into sets no two of which can lie on a common path.
    fn antichain_groups(net: &FlowNetwork, pos_of: &[usize], forced: &[Option<usize>]) -> Vec<Vec<Forced>> {
        let order = net.intermediate_order();
        let n = order.len();
        let words = n.div_ceil(64);
        let mut reach = vec![0u64; n * words];
        for p in (0..n).rev() {
            for &e in net.out_edges(order[p]) {
                let w = net.edge(e).to;
                if !net.is_intermediate(w) {
                    continue;
                }
                let q = pos_of[w];
                reach[p * words + q / 64] |= 1 << (q % 64);
                for i in 0..words {
                    let bits = reach[q * words + i];
                    reach[p * words + i] |= bits;
                }
            }
        }
        let reaches = |from: usize, to: usize| reach[from * words + to / 64] & (1 << (to % 64)) != 0;

        let mut groups: Vec<Vec<Forced>> = Vec::new();
        let mut current: Vec<Forced> = Vec::new();
        for (p, &u) in order.iter().enumerate() {
            let Some(edge) = forced[u] else { continue };
            let item = Forced { tail_pos: p, edge };
            let compatible = current.iter().all(|m| {
                let head = pos_of[net.edge(m.edge).to];
                head != p && !reaches(head, p)
            });
            if !compatible {
                groups.push(std::mem::take(&mut current));
            }
            current.push(item);
        }
        if !current.is_empty() {
            groups.push(current);
        }
        groups.retain(|g| g.len() > 1);
        groups
    }

    /// Largest component sum over finite edges that a path built from the
    /// unplaced nodes could still use.
    pub(crate) fn best_remaining(&self, pos: usize) -> f64 {
        self.suffix_best[pos].max(self.exit_best)
    }

    fn cap(&self, edge: usize) -> &[f64] {
        self.net
            .edge(edge)
            .capacity
            .as_finite()
            .expect("forced edges are finite")
    }
}

/// Minimum over order-preserving injections of the sorted `values` into the
/// sorted `minima` of the total shortfall `sum (m - a)^+`.
fn min_shortfall(minima: &[f64], values: &[f64]) -> f64 {
    let (d, g) = (minima.len(), values.len());
    debug_assert!(g <= d);
    // dp[j] after processing value i: best cost placing values 0..=i among minima 0..j.
    let mut prev = vec![0.0; d + 1];
    let mut cur = vec![f64::INFINITY; d + 1];
    for (i, &a) in values.iter().enumerate() {
        cur[..=i].fill(f64::INFINITY);
        for j in i + 1..=d {
            let take = prev[j - 1] + (minima[j - 1] - a).max(0.0);
            cur[j] = cur[j - 1].min(take);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[d]
}

impl CoverScorer for BottleneckScorer<'_> {
    type Track = Option<Vec<f64>>;

    fn open(&self, edge: usize) -> Self::Track {
        self.net.edge(edge).capacity.as_finite().map(<[f64]>::to_vec)
    }

    fn extend(&self, track: &Self::Track, edge: usize) -> Self::Track {
        match (&self.net.edge(edge).capacity, track) {
            (CapVec::Infinite, t) => t.clone(),
            (CapVec::Finite(c), None) => Some(c.clone()),
            (CapVec::Finite(c), Some(m)) => Some(m.iter().zip(c).map(|(a, b)| a.min(*b)).collect()),
        }
    }

    fn bound(&self, view: &SearchView<'_, Self::Track>) -> f64 {
        let best_rem = self.best_remaining(view.pos);
        let mut minima: Vec<Option<Vec<f64>>> = Vec::with_capacity(view.tracks.len());
        for t in view.tracks {
            let pending = self.forced[t.tail].map(|e| self.cap(e));
            minima.push(match (&t.acc, pending) {
                (None, None) => None,
                (None, Some(c)) => Some(c.to_vec()),
                (Some(m), None) => Some(m.clone()),
                (Some(m), Some(c)) => Some(m.iter().zip(c).map(|(a, b)| a.min(*b)).collect()),
            });
        }
        let unopened = view.d - view.tracks.len();
        let base = prefix_min_bound(
            minima.iter().map(|m| m.as_deref().map_or(best_rem, vec_sum)),
            unopened,
            best_rem,
        );
        if base == f64::NEG_INFINITY || unopened > 0 || minima.iter().any(Option::is_none) {
            return base;
        }
        let minima: Vec<&[f64]> = minima.iter().map(|m| m.as_deref().expect("checked")).collect();

        let live: Vec<&[Forced]> = self
            .groups
            .iter()
            .map(|g| {
                let start = g.partition_point(|f| f.tail_pos < view.pos);
                &g[start..]
            })
            .filter(|g| g.len() > 1)
            .collect();
        if live.is_empty() {
            return base;
        }
        if live.iter().any(|g| g.len() > view.d) {
            return f64::NEG_INFINITY;
        }

        let k = self.net.k();
        let mut col = vec![0.0; minima.len()];
        let mut vals = Vec::with_capacity(view.d);
        let mut total = 0.0;
        for dim in 0..k {
            for (c, m) in col.iter_mut().zip(&minima) {
                *c = m[dim];
            }
            let column_sum: f64 = col.iter().sum();
            col.sort_by(f64::total_cmp);
            let mut loss: f64 = 0.0;
            for g in &live {
                vals.clear();
                vals.extend(g.iter().map(|f| self.cap(f.edge)[dim]));
                vals.sort_by(f64::total_cmp);
                loss = loss.max(min_shortfall(&col, &vals));
            }
            total += column_sum - loss;
        }
        total.min(base)
    }

    fn cover_value(&self, cover: &PathCover) -> f64 {
        cover_value(self.net, cover)
    }
}

/// Objective of a cover, summed in canonical path order; matches the
/// objective of the flow built from the same cover.
pub fn cover_value(net: &FlowNetwork, cover: &PathCover) -> f64 {
    let mut total = 0.0;
    for p in cover.paths() {
        match path_bottleneck(net, p) {
            Some(b) => total += vec_sum(&b),
            None => return f64::INFINITY,
        }
    }
    total
}

//! Depth-first branch-and-bound over path covers.
//!
//! Intermediate nodes are visited in the network's topological order. Each
//! node either starts a new path or extends an open path whose tail has an
//! edge to it; a path ends implicitly when nothing later extends it. Every
//! cover corresponds to exactly one branch sequence.
//!
//! The score of a cover comes from a [`CoverScorer`]. Pruning only discards
//! subtrees whose admissible bound is below the incumbent, so every optimal
//! cover is visited and the canonically smallest one is returned no matter
//! how many workers share the incumbent.

use std::cmp::Ordering;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering as AtomicOrdering};
use std::sync::Mutex;
use std::time::Instant;

use crate::flow::{FlowNetwork, NodeId, PathCover};

/// Scoring strategy plugged into the search.
///
/// `bound` must never be below the score of any cover that completes the
/// given partial state (up to floating-point rounding).
pub trait CoverScorer: Sync {
    /// Per-path accumulated state.
    type Track: Clone + Send + Sync;

    /// State of a path entering through source edge `edge`.
    fn open(&self, edge: usize) -> Self::Track;

    /// State after appending `edge` to a path.
    fn extend(&self, track: &Self::Track, edge: usize) -> Self::Track;

    /// Admissible upper bound on the final score of any completion.
    fn bound(&self, view: &SearchView<'_, Self::Track>) -> f64;

    /// Exact score of a complete cover. Both the search and any reference
    /// implementation should evaluate covers through the same arithmetic.
    fn cover_value(&self, cover: &PathCover) -> f64;
}

/// An open path during the search.
#[derive(Debug, Clone)]
pub struct OpenTrack<T> {
    pub tail: NodeId,
    pub acc: T,
}

/// Partial state handed to [`CoverScorer::bound`]: nodes at positions
/// `< pos` of the topological order are placed, the rest are not.
pub struct SearchView<'a, T> {
    pub pos: usize,
    pub tracks: &'a [OpenTrack<T>],
    pub d: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pred {
    Unset,
    Source,
    Node(NodeId),
}

#[derive(Debug, Clone, Copy)]
enum Branch {
    Extend { track: usize, edge: usize },
    Start { edge: usize },
}

#[derive(Clone)]
struct State<T> {
    pos: usize,
    tracks: Vec<OpenTrack<T>>,
    pred: Vec<Pred>,
}

enum Undo<T> {
    Extend { track: usize, old: OpenTrack<T> },
    Start,
}

/// Limits and parallelism for one search.
#[derive(Debug, Clone, Copy)]
pub struct SearchLimits {
    pub deadline: Option<Instant>,
    pub node_limit: Option<u64>,
    pub jobs: usize,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best: Option<(f64, PathCover)>,
    pub aborted: bool,
    pub nodes: u64,
    pub root_bound: f64,
}

struct Shared {
    best_bits: AtomicU64,
    nodes: AtomicU64,
    abort: AtomicBool,
}

impl Shared {
    fn best(&self) -> f64 {
        f64::from_bits(self.best_bits.load(AtomicOrdering::Acquire))
    }

    fn offer(&self, value: f64) {
        let mut cur = self.best_bits.load(AtomicOrdering::Acquire);
        while value > f64::from_bits(cur) {
            match self.best_bits.compare_exchange_weak(
                cur,
                value.to_bits(),
                AtomicOrdering::AcqRel,
                AtomicOrdering::Acquire,
            ) {
                Ok(_) => break,
                Err(actual) => cur = actual,
            }
        }
    }
}

/// Relative slack absorbing rounding differences between a bound and the
/// canonical cover score.
fn prunable(bound: f64, best: f64) -> bool {
    best > f64::NEG_INFINITY && bound < best - 1e-9 * best.abs().max(1.0)
}

fn better(value: f64, cover: &PathCover, incumbent: &Option<(f64, PathCover)>) -> bool {
    match incumbent {
        None => true,
        Some((b, c)) => value > *b || (value == *b && cover.canonical_cmp(c) == Ordering::Less),
    }
}

pub struct Engine<'a, S: CoverScorer> {
    net: &'a FlowNetwork,
    scorer: &'a S,
    order: &'a [NodeId],
    source_edge: Vec<Option<usize>>,
    has_exit: Vec<bool>,
    last_succ_pos: Vec<Option<usize>>,
    starts_after: Vec<usize>,
}

impl<'a, S: CoverScorer> Engine<'a, S> {
    pub fn new(net: &'a FlowNetwork, scorer: &'a S) -> Self {
        let n = net.node_count();
        let order = net.intermediate_order();
        let mut pos_of = vec![usize::MAX; n];
        for (p, &v) in order.iter().enumerate() {
            pos_of[v] = p;
        }
        let mut source_edge = vec![None; n];
        for &e in net.out_edges(net.source()) {
            source_edge[net.edge(e).to] = Some(e);
        }
        let mut has_exit = vec![false; n];
        let mut last_succ_pos = vec![None; n];
        for &v in order {
            for &e in net.out_edges(v) {
                let w = net.edge(e).to;
                if w == net.sink() {
                    has_exit[v] = true;
                } else {
                    last_succ_pos[v] = Some(last_succ_pos[v].map_or(pos_of[w], |p: usize| p.max(pos_of[w])));
                }
            }
        }
        let mut starts_after = vec![0; order.len() + 1];
        for p in (0..order.len()).rev() {
            starts_after[p] = starts_after[p + 1] + usize::from(source_edge[order[p]].is_some());
        }
        Self {
            net,
            scorer,
            order,
            source_edge,
            has_exit,
            last_succ_pos,
            starts_after,
        }
    }

    fn empty_state(&self) -> State<S::Track> {
        State {
            pos: 0,
            tracks: Vec::new(),
            pred: vec![Pred::Unset; self.net.node_count()],
        }
    }

    fn bound(&self, st: &State<S::Track>) -> f64 {
        self.scorer.bound(&SearchView {
            pos: st.pos,
            tracks: &st.tracks,
            d: self.net.d(),
        })
    }

    fn branches(&self, st: &State<S::Track>) -> Vec<Branch> {
        let v = self.order[st.pos];
        let mut out: Vec<Branch> = st
            .tracks
            .iter()
            .enumerate()
            .filter_map(|(i, t)| {
                self.net
                    .find_edge(t.tail, v)
                    .map(|edge| Branch::Extend { track: i, edge })
            })
            .collect();
        if st.tracks.len() < self.net.d() {
            if let Some(edge) = self.source_edge[v] {
                out.push(Branch::Start { edge });
            }
        }
        out
    }

    fn apply(&self, st: &mut State<S::Track>, b: Branch) -> Undo<S::Track> {
        let v = self.order[st.pos];
        st.pos += 1;
        match b {
            Branch::Extend { track, edge } => {
                let old = st.tracks[track].clone();
                st.pred[v] = Pred::Node(old.tail);
                st.tracks[track] = OpenTrack {
                    tail: v,
                    acc: self.scorer.extend(&old.acc, edge),
                };
                Undo::Extend { track, old }
            }
            Branch::Start { edge } => {
                st.pred[v] = Pred::Source;
                st.tracks.push(OpenTrack {
                    tail: v,
                    acc: self.scorer.open(edge),
                });
                Undo::Start
            }
        }
    }

    fn undo(&self, st: &mut State<S::Track>, u: Undo<S::Track>) {
        st.pos -= 1;
        st.pred[self.order[st.pos]] = Pred::Unset;
        match u {
            Undo::Extend { track, old } => st.tracks[track] = old,
            Undo::Start => {
                st.tracks.pop();
            }
        }
    }

    /// Cheap necessary conditions for completing the current state.
    fn viable(&self, st: &State<S::Track>) -> bool {
        let tails_ok = st
            .tracks
            .iter()
            .all(|t| self.has_exit[t.tail] || self.last_succ_pos[t.tail].is_some_and(|p| p >= st.pos));
        tails_ok && self.net.d() - st.tracks.len() <= self.starts_after[st.pos]
    }

    /// Feasible children with their bounds, best bound first; ties keep
    /// track order with "new track" last.
    fn children(&self, st: &mut State<S::Track>) -> Vec<(Branch, f64)> {
        let mut kids: Vec<(Branch, f64)> = Vec::new();
        for b in self.branches(st) {
            let u = self.apply(st, b);
            if self.viable(st) {
                let bound = self.bound(st);
                if bound > f64::NEG_INFINITY {
                    kids.push((b, bound));
                }
            }
            self.undo(st, u);
        }
        kids.sort_by(|a, b| b.1.total_cmp(&a.1));
        kids
    }

    fn leaf_cover(&self, st: &State<S::Track>) -> Option<PathCover> {
        if st.tracks.len() != self.net.d() || !st.tracks.iter().all(|t| self.has_exit[t.tail]) {
            return None;
        }
        let n = self.net.node_count();
        let mut succ = vec![None; n];
        let mut starts = Vec::with_capacity(st.tracks.len());
        for &v in self.order {
            match st.pred[v] {
                Pred::Source => starts.push(v),
                Pred::Node(u) => succ[u] = Some(v),
                Pred::Unset => return None,
            }
        }
        starts.sort_unstable();
        let paths = starts
            .into_iter()
            .map(|f| {
                let mut p = vec![self.net.source(), f];
                let mut cur = f;
                while let Some(next) = succ[cur] {
                    p.push(next);
                    cur = next;
                }
                p.push(self.net.sink());
                p
            })
            .collect();
        Some(PathCover::from_canonical(paths))
    }

    /// Follows the best-bound child without backtracking.
    pub fn greedy(&self) -> Option<(f64, PathCover)> {
        let mut st = self.empty_state();
        while st.pos < self.order.len() {
            let kids = self.children(&mut st);
            let (b, _) = *kids.first()?;
            self.apply(&mut st, b);
        }
        let cover = self.leaf_cover(&st)?;
        Some((self.scorer.cover_value(&cover), cover))
    }

    fn dfs(
        &self,
        st: &mut State<S::Track>,
        shared: &Shared,
        limits: &SearchLimits,
        best: &mut Option<(f64, PathCover)>,
    ) {
        if shared.abort.load(AtomicOrdering::Relaxed) {
            return;
        }
        let visited = shared.nodes.fetch_add(1, AtomicOrdering::Relaxed) + 1;
        if limits.node_limit.is_some_and(|l| visited > l)
            || (visited.is_multiple_of(1024) && limits.deadline.is_some_and(|d| Instant::now() >= d))
        {
            shared.abort.store(true, AtomicOrdering::Relaxed);
            return;
        }
        if st.pos == self.order.len() {
            if let Some(cover) = self.leaf_cover(st) {
                let value = self.scorer.cover_value(&cover);
                if better(value, &cover, best) {
                    shared.offer(value);
                    *best = Some((value, cover));
                }
            }
            return;
        }
        for (b, bound) in self.children(st) {
            if prunable(bound, shared.best()) {
                break;
            }
            let u = self.apply(st, b);
            self.dfs(st, shared, limits, best);
            self.undo(st, u);
            if shared.abort.load(AtomicOrdering::Relaxed) {
                return;
            }
        }
    }

    /// Expands the tree breadth-first until there are enough subtrees to
    /// share among `jobs` workers. Subtrees are returned in search order.
    fn frontier(&self, root: State<S::Track>, jobs: usize, shared: &Shared) -> Vec<State<S::Track>> {
        let mut level = vec![root];
        while level.len() < jobs * 4 {
            if level.iter().any(|st| st.pos == self.order.len()) {
                break;
            }
            let mut next = Vec::new();
            for mut st in level {
                for (b, bound) in self.children(&mut st) {
                    if prunable(bound, shared.best()) {
                        break;
                    }
                    let mut child = st.clone();
                    self.apply(&mut child, b);
                    next.push(child);
                }
            }
            if next.is_empty() {
                return next;
            }
            level = next;
        }
        level
    }

    /// Exact search seeded with an optional incumbent.
    pub fn search(&self, seed: Option<(f64, PathCover)>, limits: SearchLimits) -> SearchResult {
        let root = self.empty_state();
        let root_bound = if self.viable(&root) {
            self.bound(&root)
        } else {
            f64::NEG_INFINITY
        };
        let shared = Shared {
            best_bits: AtomicU64::new(f64::NEG_INFINITY.to_bits()),
            nodes: AtomicU64::new(0),
            abort: AtomicBool::new(false),
        };
        if let Some((v, _)) = &seed {
            shared.offer(*v);
        }
        let mut best = seed;
        if root_bound == f64::NEG_INFINITY {
            return SearchResult {
                best,
                aborted: false,
                nodes: 0,
                root_bound,
            };
        }

        let jobs = limits.jobs.max(1);
        if jobs == 1 {
            let mut st = root;
            self.dfs(&mut st, &shared, &limits, &mut best);
        } else {
            let tasks = self.frontier(root, jobs, &shared);
            let next = AtomicUsize::new(0);
            let results = Mutex::new(Vec::new());
            std::thread::scope(|scope| {
                for _ in 0..jobs.min(tasks.len()) {
                    scope.spawn(|| {
                        let mut local = None;
                        loop {
                            let i = next.fetch_add(1, AtomicOrdering::Relaxed);
                            let Some(task) = tasks.get(i) else { break };
                            let mut st = task.clone();
                            self.dfs(&mut st, &shared, &limits, &mut local);
                        }
                        results.lock().expect("worker panicked").push(local);
                    });
                }
            });
            for (value, cover) in results.into_inner().expect("worker panicked").into_iter().flatten() {
                if better(value, &cover, &best) {
                    best = Some((value, cover));
                }
            }
        }
        SearchResult {
            best,
            aborted: shared.abort.load(AtomicOrdering::Relaxed),
            nodes: shared.nodes.load(AtomicOrdering::Relaxed),
            root_bound,
        }
    }
}

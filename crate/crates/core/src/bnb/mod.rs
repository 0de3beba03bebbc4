//! Exact branch-and-bound solver for the vector flow problem.

mod bottleneck;
mod engine;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::flow::{flow_from_paths, FlowNetwork, NodeId, PathCover, Solution};

pub use bottleneck::{cover_value, BottleneckScorer};
pub use engine::{CoverScorer, Engine, OpenTrack, SearchLimits, SearchResult, SearchView};

/// How equal-objective covers are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Lexicographically smallest list of interior node sequences.
    #[default]
    Canonical,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    /// Wall-clock limit in seconds.
    pub time_limit: Option<f64>,
    /// Maximum number of search nodes.
    pub node_limit: Option<u64>,
    /// Return the greedy incumbent without searching.
    pub greedy_only: bool,
    pub tie_break: TieBreak,
    /// Worker threads for subtree exploration.
    pub jobs: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            time_limit: Some(600.0),
            node_limit: None,
            greedy_only: false,
            tie_break: TieBreak::Canonical,
            jobs: 1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        if self.time_limit.is_some_and(|t| t.is_nan() || t <= 0.0) {
            return Err(SolveError::InvalidConfig("time limit must be positive".into()));
        }
        if self.node_limit == Some(0) {
            return Err(SolveError::InvalidConfig("node limit must be positive".into()));
        }
        if self.jobs == 0 {
            return Err(SolveError::InvalidConfig("jobs must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn limits(&self) -> SearchLimits {
        SearchLimits {
            deadline: self.time_limit.map(|t| Instant::now() + Duration::from_secs_f64(t)),
            node_limit: self.node_limit,
            jobs: self.jobs,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("the network has a source-sink path without a finite edge; objective is unbounded")]
    Unbounded,
    #[error("no feasible path cover exists")]
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// A limit stopped the search; `upper_bound` bounds the true optimum.
    TimeLimit {
        upper_bound: f64,
    },
    /// Greedy incumbent only, no optimality claim.
    Heuristic,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub solution: Option<Solution>,
    pub cover: Option<PathCover>,
    pub nodes: u64,
}

impl SolveOutcome {
    pub fn objective(&self) -> Option<f64> {
        self.solution.as_ref().map(|s| s.objective)
    }

    /// Gap between the reported bound and the incumbent, zero when optimal.
    pub fn gap(&self) -> Option<f64> {
        match (self.status, self.objective()) {
            (SolveStatus::Optimal, Some(_)) => Some(0.0),
            (SolveStatus::TimeLimit { upper_bound }, Some(v)) => Some(upper_bound - v),
            _ => None,
        }
    }
}

/// Status, best (score, cover) and search nodes visited.
pub(crate) type SearchSummary = (SolveStatus, Option<(f64, PathCover)>, u64);

/// Generic driver shared by every scorer: greedy seed, then exact search.
pub(crate) fn run_search<S: CoverScorer>(
    net: &FlowNetwork,
    scorer: &S,
    cfg: &SolverConfig,
) -> Result<SearchSummary, SolveError> {
    cfg.validate()?;
    let engine = Engine::new(net, scorer);
    let seed = engine.greedy();
    if cfg.greedy_only {
        let status = if seed.is_some() {
            SolveStatus::Heuristic
        } else {
            SolveStatus::Infeasible
        };
        return Ok((status, seed, 0));
    }
    let res = engine.search(seed, cfg.limits());
    let status = match (&res.best, res.aborted) {
        (_, true) => SolveStatus::TimeLimit {
            upper_bound: res.root_bound,
        },
        (Some(_), false) => SolveStatus::Optimal,
        (None, false) => SolveStatus::Infeasible,
    };
    Ok((status, res.best, res.nodes))
}

/// Solves the vector flow MIP exactly.
pub fn solve(net: &FlowNetwork, cfg: &SolverConfig) -> Result<SolveOutcome, SolveError> {
    if net.unbounded_path().is_some() {
        return Err(SolveError::Unbounded);
    }
    let scorer = BottleneckScorer::new(net);
    let (status, best, nodes) = run_search(net, &scorer, cfg)?;
    let (solution, cover) = match best {
        Some((_, cover)) => {
            let sol = flow_from_paths(net, &cover).map_err(|_| SolveError::Unbounded)?;
            (Some(sol), Some(cover))
        }
        None => (None, None),
    };
    Ok(SolveOutcome {
        status,
        solution,
        cover,
        nodes,
    })
}

/// Greedy feasible solution: each node takes the branch with the best bound.
pub fn greedy_solve(net: &FlowNetwork) -> Result<(Solution, PathCover), SolveError> {
    if net.unbounded_path().is_some() {
        return Err(SolveError::Unbounded);
    }
    let scorer = BottleneckScorer::new(net);
    let (_, cover) = Engine::new(net, &scorer).greedy().ok_or(SolveError::Infeasible)?;
    let sol = flow_from_paths(net, &cover).map_err(|_| SolveError::Unbounded)?;
    Ok((sol, cover))
}

/// Summary of a partial assignment, as seen by [`upper_bound`].
#[derive(Debug, Clone, PartialEq)]
pub struct SearchNode {
    /// Elementwise running minimum of every opened track.
    pub track_minima: Vec<Vec<f64>>,
    pub assigned: BTreeSet<NodeId>,
    pub opened: usize,
    pub d: usize,
}

/// Prefix-min bound: open track values plus, for each unopened track, the
/// best capacity sum among the remaining enter-eligible detections.
pub fn upper_bound(node: &SearchNode, remaining: &[Vec<f64>]) -> f64 {
    let best = remaining
        .iter()
        .map(|c| bottleneck::vec_sum(c))
        .fold(f64::NEG_INFINITY, f64::max);
    bottleneck::prefix_min_bound(
        node.track_minima.iter().map(|m| bottleneck::vec_sum(m)),
        node.d.saturating_sub(node.opened),
        best,
    )
}

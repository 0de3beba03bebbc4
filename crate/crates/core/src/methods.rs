//! Association methods behind a common interface, looked up by name.
//!
//! Built-in entries: `vector` (exact vector-flow solver), `scalar` (exact
//! minimum-cost baseline), `greedy` (single greedy descent of the vector
//! search) and `oracle` (exhaustive enumeration, tiny graphs only).

use std::collections::BTreeMap;

use thiserror::Error;

use crate::bnb::{greedy_solve, solve, SolveError, SolveStatus, SolverConfig};
use crate::flow::{PathCover, Solution};
use crate::mot::{MotGraph, TrackSet};
use crate::oracle::{brute_force_solve_with_limit, OracleError, OracleOutcome, DEFAULT_NODE_LIMIT};
use crate::scalar::{solve_scalar, Similarity, DEFAULT_BETA};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MethodError {
    #[error("unknown method {name:?}; available: {available}")]
    Unknown { name: String, available: String },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Result of associating one graph.
#[derive(Debug, Clone)]
pub struct Association {
    pub status: SolveStatus,
    pub cover: Option<PathCover>,
    /// Vector-flow solution realizing the cover.
    pub solution: Option<Solution>,
    /// Method-specific score: objective for vector methods, cost for scalar.
    pub score: Option<f64>,
    pub nodes: u64,
}

impl Association {
    pub fn tracks(&self, graph: &MotGraph) -> Option<TrackSet> {
        self.cover.as_ref().map(|c| graph.decode(c))
    }

    fn infeasible() -> Self {
        Self {
            status: SolveStatus::Infeasible,
            cover: None,
            solution: None,
            score: None,
            nodes: 0,
        }
    }
}

pub trait AssociationMethod: Send + Sync {
    fn name(&self) -> &str;
    fn associate(&self, graph: &MotGraph, cfg: &SolverConfig) -> Result<Association, MethodError>;
}

/// Settings shared by the built-in factories.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOptions {
    pub similarity: Similarity,
    pub beta: f64,
    pub oracle_limit: usize,
}

impl Default for MethodOptions {
    fn default() -> Self {
        Self {
            similarity: Similarity::Cosine,
            beta: DEFAULT_BETA,
            oracle_limit: DEFAULT_NODE_LIMIT,
        }
    }
}

struct Vector;

impl AssociationMethod for Vector {
    fn name(&self) -> &str {
        "vector"
    }

    fn associate(&self, graph: &MotGraph, cfg: &SolverConfig) -> Result<Association, MethodError> {
        let out = solve(&graph.net, cfg)?;
        Ok(Association {
            status: out.status,
            score: out.objective(),
            cover: out.cover,
            solution: out.solution,
            nodes: out.nodes,
        })
    }
}

struct Scalar {
    similarity: Similarity,
    beta: f64,
}

impl AssociationMethod for Scalar {
    fn name(&self) -> &str {
        "scalar"
    }

    fn associate(&self, graph: &MotGraph, cfg: &SolverConfig) -> Result<Association, MethodError> {
        let (out, _) = solve_scalar(graph, self.similarity, self.beta, cfg)?;
        Ok(Association {
            status: out.status,
            cover: out.cover,
            solution: out.solution,
            score: out.cost,
            nodes: out.nodes,
        })
    }
}

struct Greedy;

impl AssociationMethod for Greedy {
    fn name(&self) -> &str {
        "greedy"
    }

    fn associate(&self, graph: &MotGraph, _cfg: &SolverConfig) -> Result<Association, MethodError> {
        match greedy_solve(&graph.net) {
            Ok((sol, cover)) => Ok(Association {
                status: SolveStatus::Heuristic,
                score: Some(sol.objective),
                cover: Some(cover),
                solution: Some(sol),
                nodes: 0,
            }),
            Err(SolveError::Infeasible) => Ok(Association::infeasible()),
            Err(e) => Err(e.into()),
        }
    }
}

struct Oracle {
    limit: usize,
}

impl AssociationMethod for Oracle {
    fn name(&self) -> &str {
        "oracle"
    }

    fn associate(&self, graph: &MotGraph, _cfg: &SolverConfig) -> Result<Association, MethodError> {
        Ok(match brute_force_solve_with_limit(&graph.net, self.limit)? {
            OracleOutcome::Optimal { solution, cover } => Association {
                status: SolveStatus::Optimal,
                score: Some(solution.objective),
                cover: Some(cover),
                solution: Some(solution),
                nodes: 0,
            },
            OracleOutcome::Infeasible => Association::infeasible(),
        })
    }
}

type Factory = Box<dyn Fn(&MethodOptions) -> Box<dyn AssociationMethod> + Send + Sync>;

/// Name-keyed factories of association methods.
pub struct MethodRegistry {
    factories: BTreeMap<String, Factory>,
}

impl Default for MethodRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("vector", |_| Box::new(Vector));
        r.register("scalar", |o| {
            Box::new(Scalar {
                similarity: o.similarity,
                beta: o.beta,
            })
        });
        r.register("greedy", |_| Box::new(Greedy));
        r.register("oracle", |o| Box::new(Oracle { limit: o.oracle_limit }));
        r
    }
}

impl MethodRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    /// Adds or replaces a factory.
    pub fn register(
        &mut self,
        name: &str,
        factory: impl Fn(&MethodOptions) -> Box<dyn AssociationMethod> + Send + Sync + 'static,
    ) {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn create(&self, name: &str, opts: &MethodOptions) -> Result<Box<dyn AssociationMethod>, MethodError> {
        let f = self.factories.get(name).ok_or_else(|| MethodError::Unknown {
            name: name.to_string(),
            available: self.names().collect::<Vec<_>>().join(", "),
        })?;
        Ok(f(opts))
    }
}

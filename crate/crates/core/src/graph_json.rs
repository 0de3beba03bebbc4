//! JSON description of a flow network.
//!
//! ```json
//! {"k": 2, "d": 1, "source": "s", "sink": "t",
//!  "nodes": ["s", "a", "t"],
//!  "edges": [{"from": "s", "to": "a", "capacity": "inf"},
//!            {"from": "a", "to": "t", "capacity": [0.5, 0.2]}]}
//! ```
//!
//! `nodes` is optional; nodes named only by edges are added in order of
//! first appearance after the listed ones.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{CapVec, FlowNetwork, NetworkBuilder, NetworkError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CapacityJson {
    Finite(Vec<f64>),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeJson {
    pub from: String,
    pub to: String,
    pub capacity: CapacityJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    pub k: usize,
    pub d: usize,
    pub source: String,
    pub sink: String,
    #[serde(default)]
    pub nodes: Vec<String>,
    pub edges: Vec<EdgeJson>,
}

#[derive(Debug, Error)]
pub enum GraphJsonError {
    #[error("invalid graph JSON: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("edge {from} -> {to}: capacity must be a list of numbers or \"inf\", got {got:?}")]
    Capacity { from: String, to: String, got: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

impl GraphJson {
    pub fn parse(text: &str) -> Result<Self, GraphJsonError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_network(&self) -> Result<FlowNetwork, GraphJsonError> {
        let mut b = NetworkBuilder::new();
        for n in &self.nodes {
            b.node(n);
        }
        for e in &self.edges {
            let cap = match &e.capacity {
                CapacityJson::Finite(v) => CapVec::Finite(v.clone()),
                CapacityJson::Named(s) if s.eq_ignore_ascii_case("inf") => CapVec::Infinite,
                CapacityJson::Named(s) => {
                    return Err(GraphJsonError::Capacity {
                        from: e.from.clone(),
                        to: e.to.clone(),
                        got: s.clone(),
                    })
                }
            };
            b.edge(&e.from, &e.to, cap);
        }
        Ok(b.build(&self.source, &self.sink, self.k, self.d)?)
    }

    pub fn from_network(net: &FlowNetwork) -> Self {
        Self {
            k: net.k(),
            d: net.d(),
            source: net.name(net.source()).to_string(),
            sink: net.name(net.sink()).to_string(),
            nodes: net.names().to_vec(),
            edges: net
                .edges()
                .iter()
                .map(|e| EdgeJson {
                    from: net.name(e.from).to_string(),
                    to: net.name(e.to).to_string(),
                    capacity: match &e.capacity {
                        CapVec::Finite(v) => CapacityJson::Finite(v.clone()),
                        CapVec::Infinite => CapacityJson::Named("inf".into()),
                    },
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_round_trip() {
        let text = r#"{"k": 2, "d": 1, "source": "s", "sink": "t",
            "edges": [{"from": "s", "to": "a", "capacity": "inf"},
                      {"from": "a", "to": "t", "capacity": [0.5, 0.2]}]}"#;
        let net = GraphJson::parse(text).unwrap().to_network().unwrap();
        assert_eq!(net.names(), ["s", "a", "t"]);
        assert!(net.edge(0).capacity.is_infinite());
        let again = GraphJson::from_network(&net).to_network().unwrap();
        assert_eq!(again.edges(), net.edges());
    }

    #[test]
    fn rejects_unknown_capacity_words() {
        let text = r#"{"k": 1, "d": 1, "source": "s", "sink": "t",
            "edges": [{"from": "s", "to": "t", "capacity": "lots"}]}"#;
        let err = GraphJson::parse(text).unwrap().to_network().unwrap_err();
        assert!(err.to_string().contains("lots"));
    }
}

//! Exact solver for non-separable multi-dimensional maximum flows and a
//! multi-object tracking pipeline built on it.
//!
//! A flow unit travels along a single source-sink path carrying a vector of
//! commodities; the amount in each dimension is limited by the smallest
//! capacity on that path. Applied to tracking, detections become
//! observation edges whose capacities are appearance features, and the
//! maximizing flow picks trajectories whose features agree on as many
//! dimensions as possible.

pub mod bnb;
pub mod features;
pub mod flow;
pub mod graph_json;
pub mod lp;
pub mod methods;
pub mod metrics;
pub mod mot;
pub mod oracle;
pub mod pipeline;
pub mod scalar;
pub mod sweep;

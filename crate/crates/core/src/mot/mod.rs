//! Tracking graph construction.
//!
//! Every detection `i` becomes an entry node `e_i` and an exit node `o_i`
//! joined by an observation edge whose capacity is the detection's feature
//! vector. The source feeds every entry node and every exit node drains to
//! the sink, so tracks may begin and end anywhere. Transition edges link
//! `o_i` to `e_j` when `j` is between 1 and `dt` frames after `i`. All edges
//! other than observations have infinite capacity.

mod batch;
pub mod io;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{CapVec, CoverError, Edge, FlowNetwork, NetworkError, NodeId, PathCover};

pub use batch::{batch_d, split_batches, stitch};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl BBox {
    pub fn new(left: f64, top: f64, width: f64, height: f64) -> Self {
        Self {
            left,
            top,
            width,
            height,
        }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.left + self.width / 2.0, self.top + self.height / 2.0)
    }

    pub fn center_distance(&self, other: &BBox) -> f64 {
        let (ax, ay) = self.center();
        let (bx, by) = other.center();
        (ax - bx).hypot(ay - by)
    }
}

/// One detected box with its appearance feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: u32,
    /// Unique within a sequence.
    pub id: u64,
    pub bbox: BBox,
    /// Ground-truth identity, when known.
    pub gt_id: Option<u64>,
    pub feature: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphParams {
    /// Largest frame gap a transition may skip.
    pub dt: u32,
    /// Center-distance gate in pixels per frame of gap.
    pub gate: Option<f64>,
    /// Batch width in frames.
    pub batch: Option<u32>,
    /// Number of tracks.
    pub d: usize,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self {
            dt: 3,
            gate: None,
            batch: None,
            d: 1,
        }
    }
}

impl GraphParams {
    pub fn validate(&self) -> Result<(), GraphError> {
        if self.dt < 1 {
            return Err(GraphError::InvalidParams("dt must be at least 1".into()));
        }
        if self.d < 1 {
            return Err(GraphError::InvalidParams("d must be at least 1".into()));
        }
        if self.gate.is_some_and(|g| g.is_nan() || g < 0.0) {
            return Err(GraphError::InvalidParams("gate must be non-negative".into()));
        }
        if self.batch.is_some_and(|w| w <= self.dt) {
            return Err(GraphError::InvalidParams("batch width must exceed dt".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("invalid graph parameters: {0}")]
    InvalidParams(String),
    #[error("no detections")]
    NoDetections,
    #[error("detection {0} has an empty feature vector")]
    EmptyFeature(u64),
    #[error("detection {id} has {got} feature entries, expected {expected}")]
    FeatureLength { id: u64, expected: usize, got: usize },
    #[error("detection {0} has a negative or non-finite feature entry")]
    InvalidFeature(u64),
    #[error("detection {0} has a non-positive box size")]
    InvalidBox(u64),
    #[error("detection id {0} appears more than once")]
    DuplicateId(u64),
    #[error("detection {0} is not part of the graph")]
    UnknownDetection(u64),
    #[error("tracks do not form a cover of the graph: {0}")]
    InvalidTracks(#[from] CoverError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// What an edge of the tracking graph stands for. Indices refer to
/// [`MotGraph::detections`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum EdgeRole {
    Enter { det: usize },
    Observation { det: usize },
    Exit { det: usize },
    Transition { from: usize, to: usize },
}

#[derive(Debug, Clone)]
pub struct MotGraph {
    pub net: FlowNetwork,
    /// Role of each network edge, aligned with `net.edges()`.
    pub roles: Vec<EdgeRole>,
    /// Detections sorted by (frame, id); node ids follow this order.
    pub detections: Vec<Detection>,
}

const SOURCE: NodeId = 0;
const SINK: NodeId = 1;

impl MotGraph {
    pub fn entry_node(det: usize) -> NodeId {
        2 + 2 * det
    }

    pub fn exit_node(det: usize) -> NodeId {
        3 + 2 * det
    }

    /// Detection index of an intermediate node.
    pub fn detection_of(node: NodeId) -> Option<usize> {
        node.checked_sub(2).map(|n| n / 2)
    }

    pub fn with_d(&self, d: usize) -> Result<Self, GraphError> {
        Ok(Self {
            net: self.net.with_d(d)?,
            roles: self.roles.clone(),
            detections: self.detections.clone(),
        })
    }

    /// Transition edge indices.
    pub fn transitions(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.roles.iter().enumerate().filter_map(|(e, r)| match *r {
            EdgeRole::Transition { from, to } => Some((e, from, to)),
            _ => None,
        })
    }

    /// Tracks of a cover; track ids follow canonical path order starting at 1.
    pub fn decode(&self, cover: &PathCover) -> TrackSet {
        let mut entries = Vec::with_capacity(self.detections.len());
        for (t, path) in cover.paths().iter().enumerate() {
            for &v in path {
                if v >= 2 && v % 2 == 0 {
                    let det = &self.detections[(v - 2) / 2];
                    entries.push(TrackEntry {
                        frame: det.frame,
                        track_id: t as u32 + 1,
                        det_id: det.id,
                    });
                }
            }
        }
        TrackSet::from_entries(entries)
    }

    /// The cover realizing `tracks`, if every track is a path of the graph.
    pub fn encode(&self, tracks: &TrackSet) -> Result<PathCover, GraphError> {
        let index: BTreeMap<u64, usize> = self.detections.iter().enumerate().map(|(i, d)| (d.id, i)).collect();
        let mut paths = Vec::new();
        for (_, dets) in tracks.tracks() {
            let mut p = vec![SOURCE];
            for det_id in dets {
                let i = *index.get(&det_id).ok_or(GraphError::UnknownDetection(det_id))?;
                p.push(Self::entry_node(i));
                p.push(Self::exit_node(i));
            }
            p.push(SINK);
            paths.push(p);
        }
        Ok(PathCover::new(&self.net, paths)?)
    }
}

fn check_detections(dets: &[Detection]) -> Result<usize, GraphError> {
    let first = dets.first().ok_or(GraphError::NoDetections)?;
    let k = first.feature.len();
    if k == 0 {
        return Err(GraphError::EmptyFeature(first.id));
    }
    let mut ids = HashSet::with_capacity(dets.len());
    for d in dets {
        if !ids.insert(d.id) {
            return Err(GraphError::DuplicateId(d.id));
        }
        if d.feature.len() != k {
            return Err(GraphError::FeatureLength {
                id: d.id,
                expected: k,
                got: d.feature.len(),
            });
        }
        if d.feature.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(GraphError::InvalidFeature(d.id));
        }
        if !(d.bbox.width > 0.0 && d.bbox.height > 0.0) {
            return Err(GraphError::InvalidBox(d.id));
        }
    }
    Ok(k)
}

/// Builds the tracking network. Node ids are assigned in (frame, id) order,
/// so the result does not depend on the input order.
pub fn build_graph(dets: &[Detection], p: &GraphParams) -> Result<MotGraph, GraphError> {
    p.validate()?;
    let k = check_detections(dets)?;
    let mut detections = dets.to_vec();
    detections.sort_by_key(|d| (d.frame, d.id));

    let mut names = vec!["s".to_string(), "t".to_string()];
    let mut edges = Vec::new();
    let mut roles = Vec::new();
    for (i, d) in detections.iter().enumerate() {
        names.push(format!("e{}", d.id));
        names.push(format!("o{}", d.id));
        let (e, o) = (MotGraph::entry_node(i), MotGraph::exit_node(i));
        edges.push(Edge {
            from: SOURCE,
            to: e,
            capacity: CapVec::Infinite,
        });
        roles.push(EdgeRole::Enter { det: i });
        edges.push(Edge {
            from: e,
            to: o,
            capacity: CapVec::Finite(d.feature.clone()),
        });
        roles.push(EdgeRole::Observation { det: i });
        edges.push(Edge {
            from: o,
            to: SINK,
            capacity: CapVec::Infinite,
        });
        roles.push(EdgeRole::Exit { det: i });
    }
    for (i, a) in detections.iter().enumerate() {
        for (j, b) in detections.iter().enumerate().skip(i + 1) {
            let gap = b.frame - a.frame;
            if gap > p.dt {
                break;
            }
            if gap == 0 {
                continue;
            }
            edges.push(Edge {
                from: MotGraph::exit_node(i),
                to: MotGraph::entry_node(j),
                capacity: CapVec::Infinite,
            });
            roles.push(EdgeRole::Transition { from: i, to: j });
        }
    }
    let net = FlowNetwork::new(names, SOURCE, SINK, edges, k, p.d)?;
    let graph = MotGraph { net, roles, detections };
    Ok(match p.gate {
        Some(g) => prune(&graph, g),
        None => graph,
    })
}

/// Drops transitions whose box-center distance exceeds `gate` times the
/// frame gap. Observation, enter and exit edges are never removed.
pub fn prune(graph: &MotGraph, gate: f64) -> MotGraph {
    let dets = &graph.detections;
    let keep: Vec<bool> = graph
        .roles
        .iter()
        .map(|r| match *r {
            EdgeRole::Transition { from, to } => {
                let gap = f64::from(dets[to].frame - dets[from].frame);
                dets[from].bbox.center_distance(&dets[to].bbox) <= gate * gap
            }
            _ => true,
        })
        .collect();
    let net = graph.net.retain_edges(|i, _| keep[i]);
    let roles = graph
        .roles
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(r, _)| *r)
        .collect();
    MotGraph {
        net,
        roles,
        detections: graph.detections.clone(),
    }
}

/// One row of a track assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrackEntry {
    pub frame: u32,
    pub track_id: u32,
    pub det_id: u64,
}

/// Assignment of detections to tracks, ordered by (frame, det_id).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct TrackSet {
    entries: Vec<TrackEntry>,
}

impl TrackSet {
    pub fn from_entries(mut entries: Vec<TrackEntry>) -> Self {
        entries.sort_by_key(|e| (e.frame, e.det_id, e.track_id));
        Self { entries }
    }

    pub fn entries(&self) -> &[TrackEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn track_of(&self, det_id: u64) -> Option<u32> {
        self.entries.iter().find(|e| e.det_id == det_id).map(|e| e.track_id)
    }

    pub fn track_count(&self) -> usize {
        self.tracks().len()
    }

    /// Detection ids per track, each in frame order.
    pub fn tracks(&self) -> BTreeMap<u32, Vec<u64>> {
        let mut out: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
        for e in &self.entries {
            out.entry(e.track_id).or_default().push(e.det_id);
        }
        out
    }

    /// Checks that frames strictly increase within each track with gaps of at most `dt`.
    pub fn respects_window(&self, dt: u32) -> bool {
        let mut last: BTreeMap<u32, u32> = BTreeMap::new();
        for e in &self.entries {
            if let Some(prev) = last.insert(e.track_id, e.frame) {
                if e.frame <= prev || e.frame - prev > dt {
                    return false;
                }
            }
        }
        true
    }

    /// Renames track ids through `f`.
    pub fn relabel(&self, mut f: impl FnMut(u32) -> u32) -> Self {
        Self::from_entries(
            self.entries
                .iter()
                .map(|e| TrackEntry {
                    track_id: f(e.track_id),
                    ..*e
                })
                .collect(),
        )
    }
}

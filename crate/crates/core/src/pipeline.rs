//! End-to-end tracking: split into batches, build one graph per batch,
//! associate each independently (concurrently when asked) and stitch.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use thiserror::Error;

use crate::bnb::{SolveStatus, SolverConfig};
use crate::flow::{validate, Solution};
use crate::methods::{AssociationMethod, MethodError};
use crate::mot::{batch_d, build_graph, split_batches, Detection, GraphError, GraphParams, TrackSet};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("batch {batch}: {source}")]
    Graph { batch: usize, source: GraphError },
    #[error("batch {batch}: {source}")]
    Method { batch: usize, source: MethodError },
    #[error("batch {batch}: no feasible assignment with {d} tracks")]
    Infeasible { batch: usize, d: usize },
    #[error("batch {batch}: solution violates {count} constraints")]
    InvalidSolution { batch: usize, count: usize },
}

#[derive(Debug, Clone)]
pub struct BatchReport {
    pub first_frame: u32,
    pub last_frame: u32,
    pub detections: usize,
    pub d: usize,
    pub status: SolveStatus,
    pub score: Option<f64>,
    pub nodes: u64,
    pub solution: Solution,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub tracks: TrackSet,
    pub batches: Vec<BatchReport>,
}

fn run_batch(
    index: usize,
    dets: &[Detection],
    params: &GraphParams,
    method: &dyn AssociationMethod,
    cfg: &SolverConfig,
) -> Result<(TrackSet, BatchReport), PipelineError> {
    let d = batch_d(dets, params.d);
    let p = GraphParams { d, ..params.clone() };
    let graph = build_graph(dets, &p).map_err(|source| PipelineError::Graph { batch: index, source })?;
    let a = method
        .associate(&graph, cfg)
        .map_err(|source| PipelineError::Method { batch: index, source })?;
    let (Some(tracks), Some(solution)) = (a.tracks(&graph), a.solution) else {
        return Err(PipelineError::Infeasible { batch: index, d });
    };
    let violations = validate(&graph.net, &solution).expect("solution shaped by its own network");
    if !violations.is_empty() {
        return Err(PipelineError::InvalidSolution {
            batch: index,
            count: violations.len(),
        });
    }
    let report = BatchReport {
        first_frame: graph.detections.first().map_or(0, |d| d.frame),
        last_frame: graph.detections.last().map_or(0, |d| d.frame),
        detections: graph.detections.len(),
        d,
        status: a.status,
        score: a.score,
        nodes: a.nodes,
        solution,
    };
    Ok((tracks, report))
}

type BatchResult = Result<(TrackSet, BatchReport), PipelineError>;

/// Tracks a whole sequence. Up to `jobs` batches are solved at once; the
/// output does not depend on `jobs`.
pub fn track_sequence(
    dets: &[Detection],
    params: &GraphParams,
    method: &dyn AssociationMethod,
    cfg: &SolverConfig,
    jobs: usize,
) -> Result<PipelineOutput, PipelineError> {
    params
        .validate()
        .map_err(|source| PipelineError::Graph { batch: 0, source })?;
    let batches = split_batches(dets, params);
    let results: Vec<Mutex<Option<BatchResult>>> = batches.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = jobs.clamp(1, batches.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(batch) = batches.get(i) else { break };
                let r = run_batch(i, batch, params, method, cfg);
                *results[i].lock().expect("result slot") = Some(r);
            });
        }
    });

    let mut solved = Vec::with_capacity(batches.len());
    let mut reports = Vec::with_capacity(batches.len());
    for (batch, slot) in batches.into_iter().zip(results) {
        let (tracks, report) = slot.into_inner().expect("result slot").expect("every batch ran")?;
        solved.push((batch, tracks));
        reports.push(report);
    }
    Ok(PipelineOutput {
        tracks: crate::mot::stitch(&solved),
        batches: reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{generate_synthetic, SyntheticSpec};
    use crate::methods::{MethodOptions, MethodRegistry};
    use crate::metrics::idsw_norm;

    #[test]
    fn clean_sequence_tracks_perfectly_in_batches() {
        let seq = generate_synthetic(&SyntheticSpec::crossing(2, 8, 6, 2, 0.0, 4)).unwrap();
        let reg = MethodRegistry::default();
        for name in ["vector", "scalar"] {
            let m = reg.create(name, &MethodOptions::default()).unwrap();
            let p = GraphParams {
                dt: 1,
                batch: Some(4),
                d: 2,
                ..Default::default()
            };
            let one = track_sequence(&seq.detections, &p, m.as_ref(), &SolverConfig::default(), 1).unwrap();
            let many = track_sequence(&seq.detections, &p, m.as_ref(), &SolverConfig::default(), 4).unwrap();
            assert_eq!(one.tracks, many.tracks);
            assert_eq!(one.batches.len(), 2);
            let r = idsw_norm(&seq.detections, &one.tracks).unwrap();
            assert_eq!(r.idsw_norm, 0.0, "{name}");
            assert_eq!(r.total_tracks, 2);
        }
    }

    #[test]
    fn infeasible_batch_is_reported() {
        let mut seq = generate_synthetic(&SyntheticSpec::crossing(2, 2, 3, 0, 0.0, 1)).unwrap();
        for d in &mut seq.detections {
            d.gt_id = None;
        }
        let m = MethodRegistry::default()
            .create("vector", &MethodOptions::default())
            .unwrap();
        let p = GraphParams {
            d: 1,
            ..Default::default()
        };
        let err = track_sequence(&seq.detections, &p, m.as_ref(), &SolverConfig::default(), 1).unwrap_err();
        assert!(matches!(err, PipelineError::Infeasible { batch: 0, d: 1 }));
    }
}

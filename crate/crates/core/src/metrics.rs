//! Identity-switch evaluation.
//!
//! Detections are ground-truth boxes, so matching a prediction to the ground
//! truth is the identity on detection ids. For each ground-truth identity a
//! switch is counted at every appearance whose predicted track differs from
//! the one at its previous appearance; the first appearance never counts.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::mot::{Detection, TrackSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("predicted detection {0} is not in the ground truth")]
    UnknownDetection(u64),
    #[error("ground-truth detection {0} has no predicted track")]
    MissingDetection(u64),
    #[error("detection {0} is assigned to more than one track")]
    DuplicateAssignment(u64),
    #[error("ground-truth detection {0} has no identity")]
    MissingIdentity(u64),
    #[error("predicted frame {got} of detection {id} differs from ground-truth frame {expected}")]
    FrameMismatch { id: u64, expected: u32, got: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FrameCounts {
    pub frame: u32,
    pub gt: usize,
    pub idsw: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub frames: Vec<FrameCounts>,
    pub total_gt: usize,
    pub total_idsw: usize,
    pub idsw_norm: f64,
    pub total_tracks: usize,
    pub identities: usize,
}

pub fn idsw_norm(gt: &[Detection], pred: &TrackSet) -> Result<MetricsReport, MetricsError> {
    let mut assigned: HashMap<u64, (u32, u32)> = HashMap::with_capacity(pred.len());
    for e in pred.entries() {
        if assigned.insert(e.det_id, (e.frame, e.track_id)).is_some() {
            return Err(MetricsError::DuplicateAssignment(e.det_id));
        }
    }
    let mut by_identity: BTreeMap<u64, Vec<(u32, u64)>> = BTreeMap::new();
    let mut frames: BTreeMap<u32, FrameCounts> = BTreeMap::new();
    for d in gt {
        let identity = d.gt_id.ok_or(MetricsError::MissingIdentity(d.id))?;
        let (frame, _) = *assigned.get(&d.id).ok_or(MetricsError::MissingDetection(d.id))?;
        if frame != d.frame {
            return Err(MetricsError::FrameMismatch {
                id: d.id,
                expected: d.frame,
                got: frame,
            });
        }
        by_identity.entry(identity).or_default().push((d.frame, d.id));
        frames
            .entry(d.frame)
            .or_insert(FrameCounts {
                frame: d.frame,
                gt: 0,
                idsw: 0,
            })
            .gt += 1;
    }
    if assigned.len() != gt.len() {
        let known: std::collections::HashSet<u64> = gt.iter().map(|d| d.id).collect();
        let extra = pred
            .entries()
            .iter()
            .find(|e| !known.contains(&e.det_id))
            .expect("an extra prediction exists");
        return Err(MetricsError::UnknownDetection(extra.det_id));
    }

    for appearances in by_identity.values_mut() {
        appearances.sort_unstable();
        let mut previous = None;
        for &(frame, id) in appearances.iter() {
            let track = assigned[&id].1;
            if previous.is_some_and(|p| p != track) {
                frames.get_mut(&frame).expect("frame counted").idsw += 1;
            }
            previous = Some(track);
        }
    }

    let frames: Vec<FrameCounts> = frames.into_values().collect();
    let total_gt: usize = frames.iter().map(|f| f.gt).sum();
    let total_idsw: usize = frames.iter().map(|f| f.idsw).sum();
    Ok(MetricsReport {
        idsw_norm: if total_gt == 0 {
            0.0
        } else {
            total_idsw as f64 / total_gt as f64
        },
        frames,
        total_gt,
        total_idsw,
        total_tracks: pred.track_count(),
        identities: by_identity.len(),
    })
}

/// Dimension a track "selects": the one with the largest elementwise
/// minimum over the track's features (its path bottleneck).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackDominance {
    pub track_id: u32,
    /// Most frequent ground-truth identity among the track's detections,
    /// smallest id on ties.
    pub gt_id: Option<u64>,
    pub dim: usize,
    pub value: f64,
}

/// Dominant dimension of every track; ties go to the smaller dimension.
pub fn dominant_dimensions(dets: &[Detection], tracks: &TrackSet) -> Result<Vec<TrackDominance>, MetricsError> {
    let by_id: HashMap<u64, &Detection> = dets.iter().map(|d| (d.id, d)).collect();
    let mut out = Vec::new();
    for (track_id, ids) in tracks.tracks() {
        let mut minimum: Option<Vec<f64>> = None;
        let mut votes: BTreeMap<u64, usize> = BTreeMap::new();
        for id in &ids {
            let d = by_id.get(id).ok_or(MetricsError::UnknownDetection(*id))?;
            if let Some(g) = d.gt_id {
                *votes.entry(g).or_default() += 1;
            }
            minimum = Some(match minimum {
                None => d.feature.clone(),
                Some(m) => m.iter().zip(&d.feature).map(|(a, b)| a.min(*b)).collect(),
            });
        }
        let minimum = minimum.unwrap_or_default();
        let Some((dim, &value)) = minimum
            .iter()
            .enumerate()
            .reduce(|best, cur| if cur.1 > best.1 { cur } else { best })
        else {
            continue;
        };
        let top = votes.values().copied().max().unwrap_or(0);
        out.push(TrackDominance {
            track_id,
            gt_id: votes.iter().find(|(_, &n)| n == top).map(|(&g, _)| g),
            dim,
            value,
        });
    }
    Ok(out)
}

/// One evaluated run of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub method: String,
    pub sigma: f64,
    pub seed: u64,
    pub idsw_norm: f64,
}

/// Aggregate over seeds for one (method, sigma) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub method: String,
    pub sigma: f64,
    pub mean_idsw_norm: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub std: f64,
    pub seeds: usize,
}

/// Mean and standard deviation per (method, sigma), sorted by method then sigma.
pub fn sweep_report(results: &[SweepResult]) -> Vec<SweepRow> {
    let mut sorted: Vec<&SweepResult> = results.iter().collect();
    sorted.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then(a.sigma.total_cmp(&b.sigma))
            .then(a.seed.cmp(&b.seed))
    });
    let mut rows = Vec::new();
    for cell in sorted.chunk_by(|a, b| a.method == b.method && a.sigma.total_cmp(&b.sigma).is_eq()) {
        let n = cell.len();
        let mean = cell.iter().map(|r| r.idsw_norm).sum::<f64>() / n as f64;
        let std = if n > 1 {
            let ss: f64 = cell.iter().map(|r| (r.idsw_norm - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        rows.push(SweepRow {
            method: cell[0].method.clone(),
            sigma: cell[0].sigma,
            mean_idsw_norm: mean,
            std,
            seeds: n,
        });
    }
    rows
}

pub fn write_sweep_csv<W: Write>(w: W, rows: &[SweepRow]) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["method", "sigma", "mean_idsw_norm", "std", "seeds"])?;
    for r in rows {
        wr.write_record([
            r.method.clone(),
            r.sigma.to_string(),
            r.mean_idsw_norm.to_string(),
            r.std.to_string(),
            r.seeds.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

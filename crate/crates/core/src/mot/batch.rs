//! Batch splitting and cross-batch track stitching.
//!
//! Stitching is a heuristic: the track ending in one batch is linked to the
//! track starting in the next one whose endpoint features are most similar.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::features::cosine_similarity;

use super::{Detection, GraphParams, TrackEntry, TrackSet};

/// Splits detections into consecutive windows of `p.batch` frames starting at
/// the earliest frame. Windows without detections are skipped.
pub fn split_batches(dets: &[Detection], p: &GraphParams) -> Vec<Vec<Detection>> {
    let Some(first) = dets.iter().map(|d| d.frame).min() else {
        return Vec::new();
    };
    let Some(w) = p.batch else {
        return vec![dets.to_vec()];
    };
    let mut windows: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
    for d in dets {
        windows.entry((d.frame - first) / w).or_default().push(d.clone());
    }
    windows.into_values().collect()
}

/// Track count for a batch: the number of distinct ground-truth identities
/// when every detection carries one, `default_d` otherwise.
pub fn batch_d(dets: &[Detection], default_d: usize) -> usize {
    if dets.is_empty() || dets.iter().any(|d| d.gt_id.is_none()) {
        return default_d;
    }
    dets.iter().filter_map(|d| d.gt_id).collect::<BTreeSet<_>>().len()
}

/// Joins per-batch track sets into one with globally consistent ids.
///
/// Batches must be given in time order. Tracks of the first batch keep their
/// order and are numbered from 1. For each later batch, candidate links from
/// every track of the previous batch (its last detection) to every track of
/// the current one (its first detection) are taken greedily by descending
/// cosine similarity, ties going to the smaller previous id and then the
/// smaller current id. Unlinked tracks receive fresh ids.
pub fn stitch(batches: &[(Vec<Detection>, TrackSet)]) -> TrackSet {
    let mut entries = Vec::new();
    let mut next_id = 1u32;
    // Global id -> feature of the last detection, for the previous batch.
    let mut prev_ends: Vec<(u32, Vec<f64>)> = Vec::new();

    for (dets, tracks) in batches {
        let by_id: HashMap<u64, &Detection> = dets.iter().map(|d| (d.id, d)).collect();
        let local = tracks.tracks();
        let feature = |id: &u64| by_id.get(id).map_or(&[][..], |d| d.feature.as_slice());

        let mut pairs = Vec::new();
        for (pi, (_, end)) in prev_ends.iter().enumerate() {
            for (li, dets) in local.values().enumerate() {
                let sim = cosine_similarity(end, feature(&dets[0]));
                pairs.push((sim, pi, li));
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let mut assigned: Vec<Option<u32>> = vec![None; local.len()];
        let mut prev_used = vec![false; prev_ends.len()];
        for (_, pi, li) in pairs {
            if !prev_used[pi] && assigned[li].is_none() {
                prev_used[pi] = true;
                assigned[li] = Some(prev_ends[pi].0);
            }
        }

        let mut ends = Vec::with_capacity(local.len());
        for (slot, dets) in assigned.iter_mut().zip(local.values()) {
            let id = *slot.get_or_insert_with(|| {
                next_id += 1;
                next_id - 1
            });
            next_id = next_id.max(id + 1);
            for det_id in dets {
                let frame = by_id.get(det_id).map_or(0, |d| d.frame);
                entries.push(TrackEntry {
                    frame,
                    track_id: id,
                    det_id: *det_id,
                });
            }
            let last = dets.last().expect("tracks are non-empty");
            ends.push((id, feature(last).to_vec()));
        }
        prev_ends = ends;
    }
    TrackSet::from_entries(entries)
}

//! CSV formats: MOT-style detection rows, per-detection feature rows and
//! track assignments.
//!
//! * detections: `frame,id,left,top,width,height[,conf,class,visibility]`,
//!   no header. The `id` column is the ground-truth identity (`-1` when
//!   unknown). Rows with `conf` equal to 0 are ignored. Detection ids are the
//!   1-based row numbers, counting ignored rows.
//! * features: `frame,id,f1,...,fk`, optional header, keyed by the same
//!   `(frame, id)` pair as the detection file.
//! * tracks: `frame,track_id,det_id` with a header.

use std::collections::HashMap;
use std::io::{Read, Write};

use thiserror::Error;

use super::{BBox, Detection, TrackEntry, TrackSet};

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("line {line}: duplicate feature row for frame {frame}, id {id}")]
    DuplicateFeature { line: u64, frame: u32, id: i64 },
    #[error("no feature row for frame {frame}, id {id}")]
    MissingFeature { frame: u32, id: i64 },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(r)
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, csv::Position::line)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str) -> Result<T, CsvError> {
    let raw = rec.get(i).ok_or_else(|| CsvError::Row {
        line: line_of(rec),
        message: format!("missing column {name}"),
    })?;
    raw.parse().map_err(|_| CsvError::Row {
        line: line_of(rec),
        message: format!("cannot parse {name} from {raw:?}"),
    })
}

fn is_blank(rec: &csv::StringRecord) -> bool {
    rec.iter().all(str::is_empty)
}

/// Identity column value for a detection; `-1` means unknown.
pub fn identity_key(d: &Detection) -> i64 {
    d.gt_id.map_or(-1, |g| g as i64)
}

/// A detection row before features are attached.
#[derive(Debug, Clone, PartialEq)]
pub struct MotRow {
    pub det_id: u64,
    pub frame: u32,
    pub identity: i64,
    pub bbox: BBox,
}

pub fn read_mot<R: Read>(r: R) -> Result<Vec<MotRow>, CsvError> {
    let mut out = Vec::new();
    let mut row = 0u64;
    for rec in reader(r).records() {
        let rec = rec?;
        if is_blank(&rec) {
            continue;
        }
        row += 1;
        let frame: f64 = field(&rec, 0, "frame")?;
        if !(frame >= 1.0 && frame.fract() == 0.0 && frame <= f64::from(u32::MAX)) {
            return Err(CsvError::Row {
                line: line_of(&rec),
                message: format!("frame must be a positive integer, got {frame}"),
            });
        }
        let identity: f64 = field(&rec, 1, "id")?;
        let bbox = BBox::new(
            field(&rec, 2, "bb_left")?,
            field(&rec, 3, "bb_top")?,
            field(&rec, 4, "bb_width")?,
            field(&rec, 5, "bb_height")?,
        );
        if !(bbox.width > 0.0 && bbox.height > 0.0) || !bbox.left.is_finite() || !bbox.top.is_finite() {
            return Err(CsvError::Row {
                line: line_of(&rec),
                message: "box must be finite with positive size".into(),
            });
        }
        if rec.len() > 6 {
            let conf: f64 = field(&rec, 6, "conf")?;
            if conf == 0.0 {
                continue;
            }
        }
        out.push(MotRow {
            det_id: row,
            frame: frame as u32,
            identity: identity as i64,
            bbox,
        });
    }
    Ok(out)
}

/// Feature rows keyed by `(frame, id)`.
pub fn read_features<R: Read>(r: R) -> Result<HashMap<(u32, i64), Vec<f64>>, CsvError> {
    let mut out = HashMap::new();
    let mut first = true;
    for rec in reader(r).records() {
        let rec = rec?;
        if is_blank(&rec) {
            continue;
        }
        let header = first && rec.get(0).is_some_and(|f| f.parse::<f64>().is_err());
        first = false;
        if header {
            continue;
        }
        let frame: u32 = field(&rec, 0, "frame")?;
        let id: f64 = field(&rec, 1, "id")?;
        if rec.len() < 3 {
            return Err(CsvError::Row {
                line: line_of(&rec),
                message: "no feature columns".into(),
            });
        }
        let mut feature = Vec::with_capacity(rec.len() - 2);
        for i in 2..rec.len() {
            let x: f64 = field(&rec, i, &format!("f{}", i - 1))?;
            if !(x.is_finite() && x >= 0.0) {
                return Err(CsvError::Row {
                    line: line_of(&rec),
                    message: format!("feature f{} must be finite and non-negative", i - 1),
                });
            }
            feature.push(x);
        }
        let key = (frame, id as i64);
        if out.insert(key, feature).is_some() {
            return Err(CsvError::DuplicateFeature {
                line: line_of(&rec),
                frame,
                id: key.1,
            });
        }
    }
    Ok(out)
}

/// Attaches features to MOT rows.
pub fn join_features(rows: &[MotRow], features: &HashMap<(u32, i64), Vec<f64>>) -> Result<Vec<Detection>, CsvError> {
    rows.iter()
        .map(|r| {
            let feature = features
                .get(&(r.frame, r.identity))
                .ok_or(CsvError::MissingFeature {
                    frame: r.frame,
                    id: r.identity,
                })?
                .clone();
            Ok(to_detection(r, feature))
        })
        .collect()
}

pub fn to_detection(r: &MotRow, feature: Vec<f64>) -> Detection {
    Detection {
        frame: r.frame,
        id: r.det_id,
        bbox: r.bbox,
        gt_id: u64::try_from(r.identity).ok(),
        feature,
    }
}

/// Writes detections as MOT rows in the given order, so reading the file
/// back assigns ids by row position.
pub fn write_mot<W: Write>(w: W, dets: &[Detection]) -> Result<(), CsvError> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for d in dets {
        wr.write_record([
            d.frame.to_string(),
            identity_key(d).to_string(),
            d.bbox.left.to_string(),
            d.bbox.top.to_string(),
            d.bbox.width.to_string(),
            d.bbox.height.to_string(),
            "1".into(),
            "1".into(),
            "1".into(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_features<W: Write>(w: W, dets: &[Detection]) -> Result<(), CsvError> {
    let mut wr = csv::WriterBuilder::new().flexible(true).from_writer(w);
    let k = dets.first().map_or(0, |d| d.feature.len());
    let mut header = vec!["frame".to_string(), "id".to_string()];
    header.extend((1..=k).map(|i| format!("f{i}")));
    wr.write_record(&header)?;
    for d in dets {
        let mut row = vec![d.frame.to_string(), identity_key(d).to_string()];
        row.extend(d.feature.iter().map(f64::to_string));
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_tracks<W: Write>(w: W, tracks: &TrackSet) -> Result<(), CsvError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["frame", "track_id", "det_id"])?;
    for e in tracks.entries() {
        wr.write_record([e.frame.to_string(), e.track_id.to_string(), e.det_id.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_tracks<R: Read>(r: R) -> Result<TrackSet, CsvError> {
    let mut entries = Vec::new();
    let mut first = true;
    for rec in reader(r).records() {
        let rec = rec?;
        if is_blank(&rec) {
            continue;
        }
        let header = first && rec.get(0) == Some("frame");
        first = false;
        if header {
            continue;
        }
        entries.push(TrackEntry {
            frame: field(&rec, 0, "frame")?,
            track_id: field(&rec, 1, "track_id")?,
            det_id: field(&rec, 2, "det_id")?,
        });
    }
    Ok(TrackSet::from_entries(entries))
}

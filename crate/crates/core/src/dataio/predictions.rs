//! Prediction JSON lines: one object per (sequence, point).
//!
//! ```json
//! {"sequence_id": "s1", "point_id": "a", "frames": [{"frame": 100, "x": -3.0, "y": 40.0, "visibility": 0.1}]}
//! ```
//!
//! Coordinates are taken verbatim; values outside the image encode a
//! predicted out-of-view point.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_to_string, write_file, DataIoError};
use crate::metrics::Predictions;
use crate::model::{PredictedPoint, PredictedTrack, SequenceAnnotation};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrediction {
    sequence_id: String,
    point_id: String,
    frames: Vec<RawFrame>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFrame {
    frame: u32,
    x: f64,
    y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    visibility: Option<f64>,
}

/// Parses every line of a prediction file without checking coverage.
pub fn parse_predictions(text: &str, origin: &Path) -> Result<Predictions, DataIoError> {
    let mut preds = Predictions::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut de = serde_json::Deserializer::from_str(line);
        let raw: RawPrediction = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            DataIoError::parse(origin, lineno, format!("{}: {}", e.path(), e.inner()))
        })?;
        let mut frames = BTreeMap::new();
        for f in raw.frames {
            let p = PredictedPoint {
                x: f.x,
                y: f.y,
                visibility: f.visibility,
            };
            if frames.insert(f.frame, p).is_some() {
                return Err(DataIoError::parse(
                    origin,
                    lineno,
                    format!("frame {} listed twice", f.frame),
                ));
            }
        }
        let track = PredictedTrack {
            point_id: raw.point_id,
            frames,
        };
        track
            .validate()
            .map_err(|e| DataIoError::parse(origin, lineno, e.to_string()))?;
        let point_id = track.point_id.clone();
        if preds.insert(&raw.sequence_id, track).is_some() {
            return Err(DataIoError::parse(
                origin,
                lineno,
                format!(
                    "duplicate prediction for sequence {}, point {point_id}",
                    raw.sequence_id
                ),
            ));
        }
    }
    Ok(preds)
}

/// Loads predictions and checks they cover every annotated point at every
/// evaluation frame. Points not present in `expected` are dropped with a
/// warning.
pub fn load_predictions(
    path: &Path,
    expected: &[SequenceAnnotation],
) -> Result<Predictions, DataIoError> {
    let all = parse_predictions(&read_to_string(path)?, path)?;
    let mut kept = Predictions::new();
    for seq in expected {
        for gt in &seq.tracks {
            let Some(pred) = all.get(&seq.sequence_id, &gt.point_id) else {
                return Err(DataIoError::MissingPrediction {
                    sequence_id: seq.sequence_id.clone(),
                    point_id: gt.point_id.clone(),
                    frame: None,
                });
            };
            if let Some(&frame) = gt.evaluations.keys().find(|f| !pred.frames.contains_key(f)) {
                return Err(DataIoError::MissingPrediction {
                    sequence_id: seq.sequence_id.clone(),
                    point_id: gt.point_id.clone(),
                    frame: Some(frame),
                });
            }
            kept.insert(&seq.sequence_id, pred.clone());
        }
    }
    let extra = all.len() - kept.len();
    if extra > 0 {
        log::warn!(
            "{}: ignoring {extra} predicted tracks with no matching annotation",
            path.display()
        );
    }
    Ok(kept)
}

pub fn save_predictions(path: &Path, preds: &Predictions) -> Result<(), DataIoError> {
    let mut out = String::new();
    for (sequence_id, track) in preds.iter() {
        let raw = RawPrediction {
            sequence_id: sequence_id.to_string(),
            point_id: track.point_id.clone(),
            frames: track
                .frames
                .iter()
                .map(|(&frame, p)| RawFrame {
                    frame,
                    x: p.x,
                    y: p.y,
                    visibility: p.visibility,
                })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&raw).expect("prediction serialization"));
        out.push('\n');
    }
    write_file(path, out)
}

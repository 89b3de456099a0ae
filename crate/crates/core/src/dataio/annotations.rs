//! Benchmark annotation JSON.
//!
//! A file holds a list of sequences:
//!
//! ```json
//! [{"sequence_id": "P01_01_a", "width": 1920, "height": 1080,
//!   "total_frames": 512, "reference_frame": 0, "evaluation_frames": [200, 511],
//!   "tracks": [{"point_id": "0", "category": "scene",
//!               "reference": {"x": 10.0, "y": 20.0},
//!               "evaluations": [{"frame": 200, "state": "oov"},
//!                               {"frame": 511, "x": 12.0, "y": 22.5, "state": "visible"}]}]}]
//! ```
//!
//! `x`/`y` are required for `visible` and `occluded` and ignored for `oov`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{files_with_extension, read_to_string, write_file, DataIoError};
use crate::model::{
    Category, GroundTruthTrack, ImageSpace, Pixel, PointObservation, SequenceAnnotation,
    VisibilityState,
};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSequence {
    sequence_id: String,
    width: u32,
    height: u32,
    total_frames: u32,
    reference_frame: u32,
    evaluation_frames: Vec<u32>,
    tracks: Vec<RawTrack>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrack {
    point_id: String,
    category: Category,
    reference: RawXy,
    evaluations: Vec<RawEvaluation>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawXy {
    x: f64,
    y: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvaluation {
    frame: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y: Option<f64>,
    state: VisibilityState,
}

/// Loads a single annotation file, or every `*.json` file of a directory.
/// Sequences come back in file order, files in name order.
pub fn load_annotations(path: &Path) -> Result<Vec<SequenceAnnotation>, DataIoError> {
    let files = if path.is_dir() {
        files_with_extension(path, "json")?
    } else {
        vec![path.to_path_buf()]
    };
    let mut out: Vec<SequenceAnnotation> = Vec::new();
    for file in files {
        let text = read_to_string(&file)?;
        out.extend(parse_annotations(&text, &file)?);
    }
    let mut ids = std::collections::HashSet::new();
    for seq in &out {
        if !ids.insert(seq.sequence_id.clone()) {
            return Err(schema(
                path,
                &seq.sequence_id,
                "sequence_id",
                "duplicate sequence",
            ));
        }
    }
    Ok(out)
}

fn schema(path: &Path, sequence_id: &str, field: &str, message: impl Into<String>) -> DataIoError {
    DataIoError::Schema {
        path: path.to_path_buf(),
        sequence_id: sequence_id.to_string(),
        field: field.to_string(),
        message: message.into(),
    }
}

/// Parses annotation JSON text; `origin` is only used in error messages.
pub fn parse_annotations(
    text: &str,
    origin: &Path,
) -> Result<Vec<SequenceAnnotation>, DataIoError> {
    let values: Vec<serde_json::Value> =
        serde_json::from_str(text).map_err(|e| DataIoError::Json {
            path: origin.to_path_buf(),
            message: format!("expected a list of sequences: {e}"),
        })?;
    values
        .into_iter()
        .enumerate()
        .map(|(index, value)| {
            let id = value
                .get("sequence_id")
                .and_then(|v| v.as_str())
                .map(str::to_string)
                .unwrap_or_else(|| format!("#{index}"));
            let raw: RawSequence = serde_path_to_error::deserialize(value).map_err(|e| {
                let field = e.path().to_string();
                schema(origin, &id, &field, e.into_inner().to_string())
            })?;
            convert(raw, origin)
        })
        .collect()
}

fn convert(raw: RawSequence, origin: &Path) -> Result<SequenceAnnotation, DataIoError> {
    let id = raw.sequence_id.clone();
    let space = ImageSpace::new(raw.width, raw.height)
        .map_err(|e| schema(origin, &id, "width", e.to_string()))?;
    let mut tracks = Vec::with_capacity(raw.tracks.len());
    for (ti, t) in raw.tracks.into_iter().enumerate() {
        let mut evaluations = BTreeMap::new();
        for (ei, e) in t.evaluations.into_iter().enumerate() {
            let field = |name: &str| format!("tracks[{ti}].evaluations[{ei}].{name}");
            let obs = match e.state {
                VisibilityState::OutOfView => PointObservation::OutOfView,
                state => {
                    let x =
                        e.x.ok_or_else(|| schema(origin, &id, &field("x"), "required"))?;
                    let y =
                        e.y.ok_or_else(|| schema(origin, &id, &field("y"), "required"))?;
                    let p = Pixel::new(x, y);
                    if state == VisibilityState::Visible {
                        if !space.contains(p) {
                            return Err(schema(
                                origin,
                                &id,
                                &field("x"),
                                format!(
                                    "track {}: visible point ({x}, {y}) outside {}x{} image",
                                    t.point_id, space.width, space.height
                                ),
                            ));
                        }
                        PointObservation::Visible(p)
                    } else {
                        PointObservation::Occluded(p)
                    }
                }
            };
            if evaluations.insert(e.frame, obs).is_some() {
                return Err(schema(
                    origin,
                    &id,
                    &field("frame"),
                    format!("track {}: frame {} listed twice", t.point_id, e.frame),
                ));
            }
        }
        tracks.push(GroundTruthTrack {
            point_id: t.point_id,
            category: t.category,
            reference: Pixel::new(t.reference.x, t.reference.y),
            evaluations,
        });
    }
    let seq = SequenceAnnotation {
        sequence_id: raw.sequence_id,
        space,
        reference_frame: raw.reference_frame,
        evaluation_frames: raw.evaluation_frames,
        total_frames: raw.total_frames,
        tracks,
    };
    seq.validate().map_err(|source| DataIoError::Invalid {
        path: origin.to_path_buf(),
        source,
    })?;
    Ok(seq)
}

fn to_raw(seq: &SequenceAnnotation) -> RawSequence {
    RawSequence {
        sequence_id: seq.sequence_id.clone(),
        width: seq.space.width,
        height: seq.space.height,
        total_frames: seq.total_frames,
        reference_frame: seq.reference_frame,
        evaluation_frames: seq.evaluation_frames.clone(),
        tracks: seq
            .tracks
            .iter()
            .map(|t| RawTrack {
                point_id: t.point_id.clone(),
                category: t.category,
                reference: RawXy {
                    x: t.reference.x,
                    y: t.reference.y,
                },
                evaluations: t
                    .evaluations
                    .iter()
                    .map(|(&frame, obs)| {
                        let p = obs.position();
                        RawEvaluation {
                            frame,
                            x: p.map(|p| p.x),
                            y: p.map(|p| p.y),
                            state: obs.state(),
                        }
                    })
                    .collect(),
            })
            .collect(),
    }
}

/// Writes annotations in the same schema [`load_annotations`] reads.
pub fn save_annotations(path: &Path, set: &[SequenceAnnotation]) -> Result<(), DataIoError> {
    let raw: Vec<RawSequence> = set.iter().map(to_raw).collect();
    let text = serde_json::to_string_pretty(&raw).expect("annotation serialization");
    write_file(path, text + "\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"[{"sequence_id": "s1", "width": 1920, "height": 1080,
        "total_frames": 300, "reference_frame": 0, "evaluation_frames": [100, 299],
        "tracks": [{"point_id": "a", "category": "scene", "reference": {"x": 5, "y": 6},
          "evaluations": [{"frame": 100, "state": "oov"},
                          {"frame": 299, "x": 7.5, "y": 8, "state": "visible"}]}]}]"#;

    fn parse(text: &str) -> Result<Vec<SequenceAnnotation>, DataIoError> {
        parse_annotations(text, Path::new("test.json"))
    }

    #[test]
    fn minimal_file_parses() {
        let set = parse(MINIMAL).unwrap();
        assert_eq!(set.len(), 1);
        let t = &set[0].tracks[0];
        assert_eq!(t.evaluations[&100], PointObservation::OutOfView);
        assert_eq!(
            t.evaluations[&299],
            PointObservation::Visible(Pixel::new(7.5, 8.0))
        );
    }

    #[test]
    fn evaluation_before_reference_names_the_track() {
        let text = MINIMAL.replace("\"reference_frame\": 0", "\"reference_frame\": 150");
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("s1"), "{err}");
    }

    #[test]
    fn eval_frame_before_reference_within_track() {
        let text = MINIMAL
            .replace("[100, 299]", "[100, 200, 299]")
            .replace("\"reference_frame\": 0", "\"reference_frame\": 150")
            .replace("\"frame\": 100", "\"frame\": 200");
        // Sequence-level evaluation frame 100 precedes the reference too.
        assert!(parse(&text).is_err());
    }

    #[test]
    fn unknown_state_is_rejected_with_path() {
        let text = MINIMAL.replace("\"oov\"", "\"gone\"");
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("tracks[0].evaluations[0].state"), "{err}");
        assert!(err.contains("sequence s1"), "{err}");
    }

    #[test]
    fn unknown_field_is_rejected() {
        let text = MINIMAL.replace("\"width\"", "\"colour\": 1, \"width\"");
        assert!(parse(&text).is_err());
    }

    #[test]
    fn visible_without_coordinates_is_rejected() {
        let text = MINIMAL.replace("\"x\": 7.5, \"y\": 8, ", "");
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("evaluations[1].x"), "{err}");
    }

    #[test]
    fn visible_point_outside_image_is_rejected() {
        let text = MINIMAL.replace("\"x\": 7.5", "\"x\": 1920");
        assert!(parse(&text).is_err());
    }

    #[test]
    fn string_numbers_are_not_coerced() {
        let text = MINIMAL.replace("\"total_frames\": 300", "\"total_frames\": \"300\"");
        assert!(parse(&text).is_err());
    }

    #[test]
    fn save_then_load_is_a_fixed_point() {
        let dir = tempfile::tempdir().unwrap();
        let set = parse(MINIMAL).unwrap();
        let path = dir.path().join("a.json");
        save_annotations(&path, &set).unwrap();
        let again = load_annotations(&path).unwrap();
        assert_eq!(again, set);
        let path2 = dir.path().join("b.json");
        save_annotations(&path2, &again).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }
}

//! Annotation and prediction types, plus the in-view / out-of-view /
//! re-identification taxonomy that every metric consumes.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid image space {width}x{height}: both sides must be >= 1")]
    InvalidSpace { width: u32, height: u32 },
    #[error("track {point_id}: {reason}")]
    InvalidTrack { point_id: String, reason: String },
    #[error("sequence {sequence_id}: {reason}")]
    InvalidSequence { sequence_id: String, reason: String },
    #[error("sequence {sequence_id}: duplicate point_id {point_id}")]
    DuplicatePoint {
        sequence_id: String,
        point_id: String,
    },
}

/// Pixel grid with origin at the top-left pixel corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageSpace {
    pub width: u32,
    pub height: u32,
}

impl ImageSpace {
    /// Native resolution of the benchmark annotations.
    pub const ANNOTATION: ImageSpace = ImageSpace {
        width: 1920,
        height: 1080,
    };
    /// Resolution all metrics are computed at by default.
    pub const EVALUATION: ImageSpace = ImageSpace {
        width: 512,
        height: 384,
    };

    pub fn new(width: u32, height: u32) -> Result<Self, ModelError> {
        if width == 0 || height == 0 {
            return Err(ModelError::InvalidSpace { width, height });
        }
        Ok(Self { width, height })
    }

    /// `0 <= x < width` and `0 <= y < height`.
    pub fn contains(&self, p: Pixel) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < self.width as f64 && p.y < self.height as f64
    }

    /// Per-axis factors mapping coordinates in `self` onto `to`.
    pub fn ratios_to(&self, to: &ImageSpace) -> (f64, f64) {
        (
            to.width as f64 / self.width as f64,
            to.height as f64 / self.height as f64,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pixel {
    pub x: f64,
    pub y: f64,
}

impl Pixel {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Pixel) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    fn scaled(self, (sx, sy): (f64, f64)) -> Pixel {
        Pixel::new(self.x * sx, self.y * sy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VisibilityState {
    Visible,
    Occluded,
    #[serde(rename = "oov")]
    OutOfView,
}

impl VisibilityState {
    /// Visible and occluded points are both inside the field of view.
    pub fn is_in_view(self) -> bool {
        !matches!(self, VisibilityState::OutOfView)
    }
}

/// Ground truth at one evaluation frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointObservation {
    Visible(Pixel),
    Occluded(Pixel),
    OutOfView,
}

impl PointObservation {
    pub fn state(&self) -> VisibilityState {
        match self {
            PointObservation::Visible(_) => VisibilityState::Visible,
            PointObservation::Occluded(_) => VisibilityState::Occluded,
            PointObservation::OutOfView => VisibilityState::OutOfView,
        }
    }

    pub fn position(&self) -> Option<Pixel> {
        match self {
            PointObservation::Visible(p) | PointObservation::Occluded(p) => Some(*p),
            PointObservation::OutOfView => None,
        }
    }

    fn scaled(self, ratios: (f64, f64)) -> Self {
        match self {
            PointObservation::Visible(p) => PointObservation::Visible(p.scaled(ratios)),
            PointObservation::Occluded(p) => PointObservation::Occluded(p.scaled(ratios)),
            PointObservation::OutOfView => PointObservation::OutOfView,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Scene,
    Dynamic,
    Unknown,
}

/// One annotated point: its position in the reference frame and its
/// state at each evaluation frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthTrack {
    pub point_id: String,
    pub category: Category,
    /// The reference observation is always visible.
    pub reference: Pixel,
    pub evaluations: BTreeMap<u32, PointObservation>,
}

impl GroundTruthTrack {
    fn invalid(&self, reason: impl Into<String>) -> ModelError {
        ModelError::InvalidTrack {
            point_id: self.point_id.clone(),
            reason: reason.into(),
        }
    }

    /// Checks the invariants that do not depend on the enclosing sequence.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.evaluations.is_empty() {
            return Err(self.invalid("no evaluation observations"));
        }
        if !self.reference.is_finite() {
            return Err(self.invalid("non-finite reference coordinates"));
        }
        for (frame, obs) in &self.evaluations {
            if let Some(p) = obs.position() {
                if !p.is_finite() {
                    return Err(self.invalid(format!("non-finite coordinates at frame {frame}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedPoint {
    pub x: f64,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visibility: Option<f64>,
}

impl PredictedPoint {
    pub fn position(&self) -> Pixel {
        Pixel::new(self.x, self.y)
    }
}

/// A model's output for one query point. Coordinates outside the image are
/// how a model says "out of view".
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedTrack {
    pub point_id: String,
    pub frames: BTreeMap<u32, PredictedPoint>,
}

impl PredictedTrack {
    pub fn has_visibility(&self) -> bool {
        self.frames.values().any(|p| p.visibility.is_some())
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let invalid = |reason: String| ModelError::InvalidTrack {
            point_id: self.point_id.clone(),
            reason,
        };
        let with_score = self
            .frames
            .values()
            .filter(|p| p.visibility.is_some())
            .count();
        if with_score != 0 && with_score != self.frames.len() {
            return Err(invalid(
                "visibility scores must be given for all frames or none".into(),
            ));
        }
        for (frame, p) in &self.frames {
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(invalid(format!("non-finite prediction at frame {frame}")));
            }
            if let Some(v) = p.visibility {
                if !(0.0..=1.0).contains(&v) {
                    return Err(invalid(format!(
                        "visibility {v} at frame {frame} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceAnnotation {
    pub sequence_id: String,
    pub space: ImageSpace,
    pub reference_frame: u32,
    pub evaluation_frames: Vec<u32>,
    pub total_frames: u32,
    pub tracks: Vec<GroundTruthTrack>,
}

impl SequenceAnnotation {
    pub fn validate(&self) -> Result<(), ModelError> {
        let invalid = |reason: String| ModelError::InvalidSequence {
            sequence_id: self.sequence_id.clone(),
            reason,
        };
        if self.evaluation_frames.is_empty() {
            return Err(invalid("no evaluation frames".into()));
        }
        if self.reference_frame >= self.total_frames {
            return Err(invalid(format!(
                "reference frame {} outside [0, {})",
                self.reference_frame, self.total_frames
            )));
        }
        for w in self.evaluation_frames.windows(2) {
            if w[0] >= w[1] {
                return Err(invalid("evaluation frames must strictly increase".into()));
            }
        }
        for &f in &self.evaluation_frames {
            if f >= self.total_frames {
                return Err(invalid(format!(
                    "evaluation frame {f} outside [0, {})",
                    self.total_frames
                )));
            }
            if f <= self.reference_frame {
                return Err(invalid(format!(
                    "evaluation frame {f} does not follow reference frame {}",
                    self.reference_frame
                )));
            }
        }
        let mut seen = HashSet::new();
        for track in &self.tracks {
            if !seen.insert(track.point_id.as_str()) {
                return Err(ModelError::DuplicatePoint {
                    sequence_id: self.sequence_id.clone(),
                    point_id: track.point_id.clone(),
                });
            }
            track.validate()?;
            for &frame in track.evaluations.keys() {
                if !self.evaluation_frames.contains(&frame) {
                    return Err(track.invalid(format!(
                        "frame {frame} is not an evaluation frame of sequence {}",
                        self.sequence_id
                    )));
                }
                if frame <= self.reference_frame {
                    return Err(track.invalid(format!(
                        "evaluation frame {frame} precedes reference frame {}",
                        self.reference_frame
                    )));
                }
            }
            if !self.space.contains(track.reference) {
                return Err(track.invalid("reference point outside the image".to_string()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViewLabel {
    #[serde(rename = "IV")]
    InView,
    #[serde(rename = "OOV")]
    OutOfView,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointOutcome {
    pub labels: BTreeMap<u32, ViewLabel>,
    pub has_oov: bool,
    pub has_reid: bool,
}

/// Labels each evaluation frame in-view or out-of-view and flags whether
/// the point ever leaves view, and whether it comes back afterwards.
pub fn classify_track(track: &GroundTruthTrack) -> Result<PointOutcome, ModelError> {
    if track.evaluations.is_empty() {
        return Err(track.invalid("no evaluation observations"));
    }
    let mut labels = BTreeMap::new();
    let mut has_oov = false;
    let mut has_reid = false;
    for (&frame, obs) in &track.evaluations {
        if obs.state().is_in_view() {
            labels.insert(frame, ViewLabel::InView);
            has_reid |= has_oov;
        } else {
            labels.insert(frame, ViewLabel::OutOfView);
            has_oov = true;
        }
    }
    Ok(PointOutcome {
        labels,
        has_oov,
        has_reid,
    })
}

/// Per-axis rescaling between image spaces. States and flags are untouched.
pub trait Rescale: Sized {
    fn rescale(&self, from: &ImageSpace, to: &ImageSpace) -> Self;
}

impl Rescale for GroundTruthTrack {
    fn rescale(&self, from: &ImageSpace, to: &ImageSpace) -> Self {
        let r = from.ratios_to(to);
        GroundTruthTrack {
            point_id: self.point_id.clone(),
            category: self.category,
            reference: self.reference.scaled(r),
            evaluations: self
                .evaluations
                .iter()
                .map(|(&f, obs)| (f, obs.scaled(r)))
                .collect(),
        }
    }
}

impl Rescale for PredictedTrack {
    fn rescale(&self, from: &ImageSpace, to: &ImageSpace) -> Self {
        let (sx, sy) = from.ratios_to(to);
        PredictedTrack {
            point_id: self.point_id.clone(),
            frames: self
                .frames
                .iter()
                .map(|(&f, p)| {
                    (
                        f,
                        PredictedPoint {
                            x: p.x * sx,
                            y: p.y * sy,
                            visibility: p.visibility,
                        },
                    )
                })
                .collect(),
        }
    }
}

impl SequenceAnnotation {
    /// Moves the whole sequence into `to`, updating its declared space.
    pub fn rescaled(&self, to: &ImageSpace) -> SequenceAnnotation {
        SequenceAnnotation {
            tracks: self
                .tracks
                .iter()
                .map(|t| t.rescale(&self.space, to))
                .collect(),
            space: *to,
            ..self.clone()
        }
    }
}

/// Summary of an annotation set, one field per benchmark statistics column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationStats {
    pub sequences: usize,
    pub total_tracks: usize,
    pub oov_tracks: usize,
    pub reid_tracks: usize,
    /// Mean of `total_frames` over sequences.
    pub avg_video_length: f64,
    /// Mean number of visible points per annotated frame (reference and
    /// evaluation frames).
    pub avg_points_per_frame: f64,
}

pub fn validate_annotations(set: &[SequenceAnnotation]) -> Result<AnnotationStats, ModelError> {
    let mut stats = AnnotationStats {
        sequences: set.len(),
        total_tracks: 0,
        oov_tracks: 0,
        reid_tracks: 0,
        avg_video_length: 0.0,
        avg_points_per_frame: 0.0,
    };
    let mut seen_ids = HashSet::new();
    let mut length_sum = 0u64;
    let mut annotated_frames = 0u64;
    let mut visible_points = 0u64;
    for seq in set {
        if !seen_ids.insert(seq.sequence_id.as_str()) {
            return Err(ModelError::InvalidSequence {
                sequence_id: seq.sequence_id.clone(),
                reason: "duplicate sequence_id".into(),
            });
        }
        seq.validate()?;
        length_sum += seq.total_frames as u64;
        annotated_frames += 1 + seq.evaluation_frames.len() as u64;
        visible_points += seq.tracks.len() as u64;
        for track in &seq.tracks {
            let outcome = classify_track(track)?;
            stats.total_tracks += 1;
            stats.oov_tracks += outcome.has_oov as usize;
            stats.reid_tracks += outcome.has_reid as usize;
            visible_points += track
                .evaluations
                .values()
                .filter(|o| o.state() == VisibilityState::Visible)
                .count() as u64;
        }
    }
    if !set.is_empty() {
        stats.avg_video_length = length_sum as f64 / set.len() as f64;
        stats.avg_points_per_frame = visible_points as f64 / annotated_frames as f64;
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track(evals: &[(u32, PointObservation)]) -> GroundTruthTrack {
        GroundTruthTrack {
            point_id: "p".into(),
            category: Category::Scene,
            reference: Pixel::new(10.0, 10.0),
            evaluations: evals.iter().cloned().collect(),
        }
    }

    const V: PointObservation = PointObservation::Visible(Pixel { x: 1.0, y: 2.0 });
    const O: PointObservation = PointObservation::Occluded(Pixel { x: 1.0, y: 2.0 });
    const X: PointObservation = PointObservation::OutOfView;

    #[test]
    fn all_visible_track_is_plain_in_view() {
        let out = classify_track(&track(&[(5, V), (9, V)])).unwrap();
        assert_eq!(
            out.labels.values().copied().collect::<Vec<_>>(),
            vec![ViewLabel::InView, ViewLabel::InView]
        );
        assert!(!out.has_oov && !out.has_reid);
    }

    #[test]
    fn leaving_then_returning_is_reid() {
        let out = classify_track(&track(&[(5, X), (9, V)])).unwrap();
        assert!(out.has_oov && out.has_reid);
        assert_eq!(out.labels[&5], ViewLabel::OutOfView);
    }

    #[test]
    fn leaving_without_return_is_not_reid() {
        let out = classify_track(&track(&[(5, V), (9, X)])).unwrap();
        assert!(out.has_oov && !out.has_reid);
    }

    #[test]
    fn occluded_return_counts_as_in_view() {
        let out = classify_track(&track(&[(5, X), (9, O)])).unwrap();
        assert!(out.has_reid);
    }

    #[test]
    fn empty_track_is_rejected_by_id() {
        let err = classify_track(&track(&[])).unwrap_err();
        assert!(err.to_string().contains("track p"));
    }

    #[test]
    fn scaling_examples() {
        let from = ImageSpace::ANNOTATION;
        let to = ImageSpace::EVALUATION;
        let t = GroundTruthTrack {
            reference: Pixel::new(960.0, 540.0),
            ..track(&[
                (3, PointObservation::Visible(Pixel::new(1920.0, 1080.0))),
                (4, X),
            ])
        };
        let s = t.rescale(&from, &to);
        assert_eq!(s.reference, Pixel::new(256.0, 192.0));
        assert_eq!(s.evaluations[&3].position(), Some(Pixel::new(512.0, 384.0)));
        assert_eq!(s.evaluations[&4], X);
        assert_eq!(t.rescale(&from, &from), t);
    }

    #[test]
    fn space_bounds_are_half_open() {
        let s = ImageSpace::new(4, 3).unwrap();
        assert!(s.contains(Pixel::new(0.0, 0.0)));
        assert!(s.contains(Pixel::new(3.999, 2.999)));
        assert!(!s.contains(Pixel::new(4.0, 1.0)));
        assert!(!s.contains(Pixel::new(1.0, -0.001)));
        assert!(ImageSpace::new(0, 3).is_err());
    }

    fn seq(id: &str, total: u32, tracks: Vec<GroundTruthTrack>) -> SequenceAnnotation {
        SequenceAnnotation {
            sequence_id: id.into(),
            space: ImageSpace::ANNOTATION,
            reference_frame: 0,
            evaluation_frames: vec![5, 9],
            total_frames: total,
            tracks,
        }
    }

    #[test]
    fn stats_of_empty_set_are_zero() {
        let s = validate_annotations(&[]).unwrap();
        assert_eq!(s.total_tracks, 0);
        assert_eq!(s.avg_video_length, 0.0);
        assert_eq!(s.avg_points_per_frame, 0.0);
    }

    #[test]
    fn average_length_is_arithmetic_mean() {
        let set = vec![seq("a", 100, vec![]), seq("b", 300, vec![])];
        assert_eq!(validate_annotations(&set).unwrap().avg_video_length, 200.0);
    }

    #[test]
    fn duplicate_point_ids_are_rejected() {
        let set = vec![seq("a", 100, vec![track(&[(5, V)]), track(&[(9, V)])])];
        assert!(matches!(
            validate_annotations(&set),
            Err(ModelError::DuplicatePoint { .. })
        ));
    }

    #[test]
    fn evaluation_frame_beyond_sequence_is_rejected() {
        let set = vec![seq("a", 9, vec![track(&[(5, V)])])];
        let err = validate_annotations(&set).unwrap_err();
        assert!(err.to_string().contains("outside [0, 9)"), "{err}");
    }

    #[test]
    fn mixed_visibility_scores_are_rejected() {
        let t = PredictedTrack {
            point_id: "q".into(),
            frames: [
                (
                    1,
                    PredictedPoint {
                        x: 0.0,
                        y: 0.0,
                        visibility: Some(0.3),
                    },
                ),
                (
                    2,
                    PredictedPoint {
                        x: 0.0,
                        y: 0.0,
                        visibility: None,
                    },
                ),
            ]
            .into_iter()
            .collect(),
        };
        assert!(t.validate().is_err());
    }
}

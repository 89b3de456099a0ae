//! Point-tracking metrics: thresholded accuracy (δ), re-identification
//! accuracy, in-view / out-of-view accuracy, occlusion accuracy, median
//! trajectory error and average Jaccard, plus length-bucket and category
//! breakdowns.
//!
//! Percentages are computed from integer counts with a single division so
//! that comparisons between metrics are exact.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    classify_track, Category, GroundTruthTrack, ImageSpace, ModelError, Pixel, PointObservation,
    PredictedPoint, PredictedTrack, Rescale, SequenceAnnotation, VisibilityState,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("sequence {sequence_id}: no prediction for point {point_id}")]
    MissingTrack {
        sequence_id: String,
        point_id: String,
    },
    #[error("sequence {sequence_id}: prediction for point {point_id} lacks frame {frame}")]
    MissingFrame {
        sequence_id: String,
        point_id: String,
        frame: u32,
    },
    #[error("invalid threshold set {0:?}: thresholds must be positive and strictly increasing")]
    InvalidThresholds(Vec<f64>),
    #[error("visibility cutoff {0} outside [0, 1]")]
    InvalidCutoff(f64),
    #[error("bucket width must be positive")]
    InvalidBucketWidth,
    #[error("visibility scores are present for some predicted tracks but not others")]
    MixedVisibility,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Pixel radii used by a δ-style metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ThresholdSet(Vec<f64>);

impl ThresholdSet {
    pub fn new(thresholds: Vec<f64>) -> Result<Self, MetricsError> {
        let ok = !thresholds.is_empty()
            && thresholds.iter().all(|t| t.is_finite() && *t > 0.0)
            && thresholds.windows(2).all(|w| w[0] < w[1]);
        if ok {
            Ok(Self(thresholds))
        } else {
            Err(MetricsError::InvalidThresholds(thresholds))
        }
    }

    /// {1, 2, 4, 8, 16}
    pub fn standard() -> Self {
        Self(vec![1.0, 2.0, 4.0, 8.0, 16.0])
    }

    /// {8, 16, 24}, also used for re-identification.
    pub fn relaxed() -> Self {
        Self(vec![8.0, 16.0, 24.0])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for ThresholdSet {
    type Error = MetricsError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<ThresholdSet> for Vec<f64> {
    fn from(t: ThresholdSet) -> Self {
        t.0
    }
}

/// Where distances are measured before being compared against thresholds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSpace {
    /// Pixels of the evaluation image space.
    #[default]
    Raw,
    /// Coordinates rescaled to a 256x256 grid first.
    Normalized256,
}

impl ThresholdSpace {
    fn distance(self, space: &ImageSpace, a: Pixel, b: Pixel) -> f64 {
        match self {
            ThresholdSpace::Raw => a.distance(&b),
            ThresholdSpace::Normalized256 => {
                let sx = 256.0 / space.width as f64;
                let sy = 256.0 / space.height as f64;
                ((a.x - b.x) * sx).hypot((a.y - b.y) * sy)
            }
        }
    }
}

/// A metric value with the number of items it was computed over. A metric
/// with nothing to measure is absent rather than zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: Option<f64>,
    pub count: usize,
}

impl MetricValue {
    pub fn absent() -> Self {
        Self {
            value: None,
            count: 0,
        }
    }

    fn percent(hits: usize, total: usize) -> Self {
        Self {
            value: percent(hits, total),
            count: total,
        }
    }
}

impl fmt::Display for MetricValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.value {
            Some(v) => write!(f, "{v:.1}"),
            None => f.write_str("--"),
        }
    }
}

fn percent(hits: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| 100.0 * hits as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdScore {
    pub threshold: f64,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaResult {
    pub per_threshold: Vec<ThresholdScore>,
    pub average: MetricValue,
}

impl DeltaResult {
    pub fn at(&self, threshold: f64) -> Option<f64> {
        self.per_threshold
            .iter()
            .find(|s| s.threshold == threshold)
            .and_then(|s| s.value)
    }
}

/// Counts per threshold over `total` items turned into per-threshold and
/// averaged percentages.
fn delta_from_counts(thresholds: &ThresholdSet, hits: &[usize], total: usize) -> DeltaResult {
    let per_threshold = thresholds
        .as_slice()
        .iter()
        .zip(hits)
        .map(|(&threshold, &h)| ThresholdScore {
            threshold,
            value: percent(h, total),
        })
        .collect();
    let sum: usize = hits.iter().sum();
    DeltaResult {
        per_threshold,
        average: MetricValue {
            value: percent(sum, total * thresholds.len()),
            count: total,
        },
    }
}

/// Predicted tracks keyed by `(sequence_id, point_id)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Predictions {
    tracks: BTreeMap<(String, String), PredictedTrack>,
}

impl Predictions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, sequence_id: &str, track: PredictedTrack) -> Option<PredictedTrack> {
        self.tracks
            .insert((sequence_id.to_string(), track.point_id.clone()), track)
    }

    pub fn get(&self, sequence_id: &str, point_id: &str) -> Option<&PredictedTrack> {
        self.tracks
            .get(&(sequence_id.to_string(), point_id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &PredictedTrack)> {
        self.tracks.iter().map(|((s, _), t)| (s.as_str(), t))
    }

    /// Rescales every track of a sequence from that sequence's annotation
    /// space into `to`.
    pub fn rescaled(&self, annotations: &[SequenceAnnotation], to: &ImageSpace) -> Predictions {
        let spaces: BTreeMap<&str, ImageSpace> = annotations
            .iter()
            .map(|a| (a.sequence_id.as_str(), a.space))
            .collect();
        let tracks = self
            .tracks
            .iter()
            .map(|(key, t)| {
                let t = match spaces.get(key.0.as_str()) {
                    Some(from) => t.rescale(from, to),
                    None => t.clone(),
                };
                (key.clone(), t)
            })
            .collect();
        Predictions { tracks }
    }

    /// Replays the ground truth: annotated positions where the point is in
    /// view, `(-1, -1)` where it is out of view. Scores are 1.0 on visible
    /// frames and 0.0 otherwise when `with_visibility` is set.
    pub fn playback(annotations: &[SequenceAnnotation], with_visibility: bool) -> Predictions {
        let mut preds = Predictions::new();
        for seq in annotations {
            for track in &seq.tracks {
                let frames = track
                    .evaluations
                    .iter()
                    .map(|(&f, obs)| {
                        let p = obs.position().unwrap_or(Pixel::new(-1.0, -1.0));
                        let visibility = with_visibility.then(|| {
                            if obs.state() == VisibilityState::Visible {
                                1.0
                            } else {
                                0.0
                            }
                        });
                        (
                            f,
                            PredictedPoint {
                                x: p.x,
                                y: p.y,
                                visibility,
                            },
                        )
                    })
                    .collect();
                preds.insert(
                    &seq.sequence_id,
                    PredictedTrack {
                        point_id: track.point_id.clone(),
                        frames,
                    },
                );
            }
        }
        preds
    }
}

/// A ground-truth track joined with its prediction at every evaluation frame.
struct MatchedTrack<'a> {
    gt: &'a GroundTruthTrack,
    pred: &'a PredictedTrack,
    frames: Vec<(u32, PointObservation, PredictedPoint)>,
}

fn match_tracks<'a>(
    gts: &'a [SequenceAnnotation],
    preds: &'a Predictions,
) -> Result<Vec<MatchedTrack<'a>>, MetricsError> {
    let mut out = Vec::new();
    for seq in gts {
        for gt in &seq.tracks {
            let pred = preds.get(&seq.sequence_id, &gt.point_id).ok_or_else(|| {
                MetricsError::MissingTrack {
                    sequence_id: seq.sequence_id.clone(),
                    point_id: gt.point_id.clone(),
                }
            })?;
            let frames = gt
                .evaluations
                .iter()
                .map(|(&f, obs)| {
                    pred.frames.get(&f).map(|p| (f, *obs, *p)).ok_or_else(|| {
                        MetricsError::MissingFrame {
                            sequence_id: seq.sequence_id.clone(),
                            point_id: gt.point_id.clone(),
                            frame: f,
                        }
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            out.push(MatchedTrack { gt, pred, frames });
        }
    }
    Ok(out)
}

/// Fraction of visible ground-truth points predicted within each threshold.
pub fn compute_delta(
    gts: &[SequenceAnnotation],
    preds: &Predictions,
    space: &ImageSpace,
    thresholds: &ThresholdSet,
    threshold_space: ThresholdSpace,
) -> Result<DeltaResult, MetricsError> {
    let matched = match_tracks(gts, preds)?;
    let mut hits = vec![0usize; thresholds.len()];
    let mut total = 0usize;
    for m in &matched {
        for (_, obs, pred) in &m.frames {
            let PointObservation::Visible(gt) = obs else {
                continue;
            };
            total += 1;
            let err = threshold_space.distance(space, *gt, pred.position());
            for (h, &tau) in hits.iter_mut().zip(thresholds.as_slice()) {
                *h += (err <= tau) as usize;
            }
        }
    }
    Ok(delta_from_counts(thresholds, &hits, total))
}

/// Re-identification accuracy. A track that leaves view and returns is
/// correct at a threshold when every out-of-view frame before the return
/// is predicted outside the image and the final return frame is predicted
/// within the threshold.
pub fn compute_reid_delta(
    gts: &[SequenceAnnotation],
    preds: &Predictions,
    space: &ImageSpace,
    thresholds: &ThresholdSet,
    threshold_space: ThresholdSpace,
) -> Result<DeltaResult, MetricsError> {
    let matched = match_tracks(gts, preds)?;
    let mut hits = vec![0usize; thresholds.len()];
    let mut total = 0usize;
    for m in &matched {
        if !classify_track(m.gt)?.has_reid {
            continue;
        }
        total += 1;
        // The last in-view frame that follows an out-of-view frame.
        let first_oov = m
            .frames
            .iter()
            .position(|(_, obs, _)| !obs.state().is_in_view())
            .expect("reid track has an out-of-view frame");
        let ret = m
            .frames
            .iter()
            .rposition(|(_, obs, _)| obs.state().is_in_view())
            .filter(|&i| i > first_oov)
            .expect("reid track returns to view");
        let left_view = m.frames[..ret]
            .iter()
            .filter(|(_, obs, _)| !obs.state().is_in_view())
            .all(|(_, _, pred)| !space.contains(pred.position()));
        if !left_view {
            continue;
        }
        let (_, obs, pred) = &m.frames[ret];
        let gt = obs.position().expect("return frame is in view");
        let err = threshold_space.distance(space, gt, pred.position());
        for (h, &tau) in hits.iter_mut().zip(thresholds.as_slice()) {
            *h += (err <= tau) as usize;
        }
    }
    Ok(delta_from_counts(thresholds, &hits, total))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewAccuracy {
    pub iva: MetricValue,
    pub oova: MetricValue,
}

/// In-view accuracy over ground-truth in-view pairs and out-of-view accuracy
/// over ground-truth out-of-view pairs; a prediction is in view when its
/// coordinates fall inside `space`.
pub fn compute_view_accuracy(
    gts: &[SequenceAnnotation],
    preds: &Predictions,
    space: &ImageSpace,
) -> Result<ViewAccuracy, MetricsError> {
    let matched = match_tracks(gts, preds)?;
    let (mut iv_hits, mut iv_total, mut oov_hits, mut oov_total) = (0, 0, 0, 0);
    for (_, obs, pred) in matched.iter().flat_map(|m| &m.frames) {
        let predicted_in_view = space.contains(pred.position());
        if obs.state().is_in_view() {
            iv_total += 1;
            iv_hits += predicted_in_view as usize;
        } else {
            oov_total += 1;
            oov_hits += !predicted_in_view as usize;
        }
    }
    Ok(ViewAccuracy {
        iva: MetricValue::percent(iv_hits, iv_total),
        oova: MetricValue::percent(oov_hits, oov_total),
    })
}

/// Whether every matched prediction carries visibility scores; a mixed set
/// is an error.
fn scores_present(matched: &[MatchedTrack<'_>]) -> Result<bool, MetricsError> {
    let with = matched.iter().filter(|m| m.pred.has_visibility()).count();
    match with {
        0 => Ok(false),
        n if n == matched.len() => Ok(true),
        _ => Err(MetricsError::MixedVisibility),
    }
}

fn check_cutoff(cutoff: f64) -> Result<(), MetricsError> {
    if (0.0..=1.0).contains(&cutoff) {
        Ok(())
    } else {
        Err(MetricsError::InvalidCutoff(cutoff))
    }
}

fn predicted_visible(p: &PredictedPoint, cutoff: f64) -> bool {
    p.visibility.is_some_and(|v| v > cutoff)
}

/// Agreement between predicted visibility (`score > cutoff`) and ground
/// truth visibility over all evaluation pairs.
pub fn compute_occlusion_accuracy(
    gts: &[SequenceAnnotation],
    preds: &Predictions,
    visibility_cutoff: f64,
) -> Result<MetricValue, MetricsError> {
    check_cutoff(visibility_cutoff)?;
    let matched = match_tracks(gts, preds)?;
    if !scores_present(&matched)? {
        return Ok(MetricValue::absent());
    }
    let (mut agree, mut total) = (0, 0);
    for (_, obs, pred) in matched.iter().flat_map(|m| &m.frames) {
        total += 1;
        let gt_visible = obs.state() == VisibilityState::Visible;
        agree += (gt_visible == predicted_visible(pred, visibility_cutoff)) as usize;
    }
    Ok(MetricValue::percent(agree, total))
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Mean over tracks of the median L2 error across in-view evaluation frames.
pub fn compute_mte(
    gts: &[SequenceAnnotation],
    preds: &Predictions,
) -> Result<MetricValue, MetricsError> {
    let matched = match_tracks(gts, preds)?;
    let medians: Vec<f64> = matched
        .iter()
        .filter_map(|m| {
            let mut errors: Vec<f64> = m
                .frames
                .iter()
                .filter_map(|(_, obs, pred)| obs.position().map(|gt| gt.distance(&pred.position())))
                .collect();
            median(&mut errors)
        })
        .collect();
    Ok(MetricValue {
        value: (!medians.is_empty()).then(|| medians.iter().sum::<f64>() / medians.len() as f64),
        count: medians.len(),
    })
}

/// Average Jaccard: per threshold, true positives are visible ground truth
/// predicted visible and within the threshold; false negatives are the
/// remaining visible ground truth; false positives are non-visible ground
/// truth predicted visible.
pub fn compute_average_jaccard(
    gts: &[SequenceAnnotation],
    preds: &Predictions,
    space: &ImageSpace,
    thresholds: &ThresholdSet,
    visibility_cutoff: f64,
    threshold_space: ThresholdSpace,
) -> Result<DeltaResult, MetricsError> {
    check_cutoff(visibility_cutoff)?;
    let matched = match_tracks(gts, preds)?;
    if !scores_present(&matched)? {
        return Ok(DeltaResult {
            per_threshold: thresholds
                .as_slice()
                .iter()
                .map(|&threshold| ThresholdScore {
                    threshold,
                    value: None,
                })
                .collect(),
            average: MetricValue::absent(),
        });
    }
    let mut tp = vec![0usize; thresholds.len()];
    let (mut gt_visible, mut fp) = (0usize, 0usize);
    for (_, obs, pred) in matched.iter().flat_map(|m| &m.frames) {
        let pv = predicted_visible(pred, visibility_cutoff);
        match obs {
            PointObservation::Visible(gt) => {
                gt_visible += 1;
                if pv {
                    let err = threshold_space.distance(space, *gt, pred.position());
                    for (t, &tau) in tp.iter_mut().zip(thresholds.as_slice()) {
                        *t += (err <= tau) as usize;
                    }
                }
            }
            _ => fp += pv as usize,
        }
    }
    // TP + FN + FP = visible ground truth + FP, whatever the threshold.
    Ok(delta_from_counts(thresholds, &tp, gt_visible + fp))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    pub thresholds: ThresholdSet,
    pub star_thresholds: ThresholdSet,
    pub reid_thresholds: ThresholdSet,
    pub visibility_cutoff: f64,
    pub threshold_space: ThresholdSpace,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            thresholds: ThresholdSet::standard(),
            star_thresholds: ThresholdSet::relaxed(),
            reid_thresholds: ThresholdSet::relaxed(),
            visibility_cutoff: 0.5,
            threshold_space: ThresholdSpace::Raw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub tracks: usize,
    pub delta_avg: MetricValue,
    pub delta: Vec<ThresholdScore>,
    pub delta_star_avg: MetricValue,
    pub delta_star: Vec<ThresholdScore>,
    pub reid_delta_avg: MetricValue,
    pub reid_delta: Vec<ThresholdScore>,
    pub iva: MetricValue,
    pub oova: MetricValue,
    pub oa: MetricValue,
    /// Pixels, not a percentage.
    pub mte: MetricValue,
    pub aj: MetricValue,
    pub jaccard: Vec<ThresholdScore>,
}

impl MetricReport {
    /// δ at a single threshold of the standard set, e.g. 16.
    pub fn delta_at(&self, threshold: f64) -> Option<f64> {
        self.delta
            .iter()
            .find(|s| s.threshold == threshold)
            .and_then(|s| s.value)
    }
}

pub fn build_report(
    gts: &[SequenceAnnotation],
    preds: &Predictions,
    space: &ImageSpace,
    options: &MetricOptions,
) -> Result<MetricReport, MetricsError> {
    let ts = options.threshold_space;
    let delta = compute_delta(gts, preds, space, &options.thresholds, ts)?;
    let star = compute_delta(gts, preds, space, &options.star_thresholds, ts)?;
    let reid = compute_reid_delta(gts, preds, space, &options.reid_thresholds, ts)?;
    let view = compute_view_accuracy(gts, preds, space)?;
    let oa = compute_occlusion_accuracy(gts, preds, options.visibility_cutoff)?;
    let mte = compute_mte(gts, preds)?;
    let aj = compute_average_jaccard(
        gts,
        preds,
        space,
        &options.thresholds,
        options.visibility_cutoff,
        ts,
    )?;
    Ok(MetricReport {
        tracks: gts.iter().map(|s| s.tracks.len()).sum(),
        delta_avg: delta.average,
        delta: delta.per_threshold,
        delta_star_avg: star.average,
        delta_star: star.per_threshold,
        reid_delta_avg: reid.average,
        reid_delta: reid.per_threshold,
        iva: view.iva,
        oova: view.oova,
        oa,
        mte,
        aj: aj.average,
        jaccard: aj.per_threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CategoryFilter {
    All,
    Scene,
    Dynamic,
}

impl CategoryFilter {
    pub fn label(self) -> &'static str {
        match self {
            CategoryFilter::All => "all",
            CategoryFilter::Scene => "scene",
            CategoryFilter::Dynamic => "dynamic",
        }
    }

    fn admits(self, c: Category) -> bool {
        match self {
            CategoryFilter::All => true,
            CategoryFilter::Scene => c == Category::Scene,
            CategoryFilter::Dynamic => c == Category::Dynamic,
        }
    }
}

/// Keeps only the tracks admitted by `filter`; `None` when none remain
/// and the filter is a category.
pub fn filter_category(
    gts: &[SequenceAnnotation],
    filter: CategoryFilter,
) -> Option<Vec<SequenceAnnotation>> {
    if filter == CategoryFilter::All {
        return Some(gts.to_vec());
    }
    let out: Vec<SequenceAnnotation> = gts
        .iter()
        .map(|s| SequenceAnnotation {
            tracks: s
                .tracks
                .iter()
                .filter(|t| filter.admits(t.category))
                .cloned()
                .collect(),
            ..s.clone()
        })
        .collect();
    out.iter().any(|s| !s.tracks.is_empty()).then_some(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LengthBucket {
    pub lower: u32,
    pub upper: u32,
}

impl fmt::Display for LengthBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.lower, self.upper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    pub bucket: LengthBucket,
    pub category: CategoryFilter,
    pub sequences: usize,
    pub report: MetricReport,
}

/// Groups sequences by `floor(total_frames / bucket_width)` and reports
/// each group, optionally split into scene and dynamic tracks. Category
/// entries with no tracks are omitted; unknown-category tracks only appear
/// in the unsplit entry.
pub fn bucket_report(
    gts: &[SequenceAnnotation],
    preds: &Predictions,
    space: &ImageSpace,
    bucket_width: u32,
    split_by_category: bool,
    options: &MetricOptions,
) -> Result<Vec<BucketReport>, MetricsError> {
    if bucket_width == 0 {
        return Err(MetricsError::InvalidBucketWidth);
    }
    let mut groups: BTreeMap<u32, Vec<SequenceAnnotation>> = BTreeMap::new();
    for seq in gts {
        groups
            .entry(seq.total_frames / bucket_width)
            .or_default()
            .push(seq.clone());
    }
    let filters: &[CategoryFilter] = if split_by_category {
        &[
            CategoryFilter::All,
            CategoryFilter::Scene,
            CategoryFilter::Dynamic,
        ]
    } else {
        &[CategoryFilter::All]
    };
    let mut out = Vec::new();
    for (index, mut seqs) in groups {
        seqs.sort_by(|a, b| a.sequence_id.cmp(&b.sequence_id));
        let bucket = LengthBucket {
            lower: index * bucket_width,
            upper: (index + 1) * bucket_width,
        };
        for &filter in filters {
            let Some(subset) = filter_category(&seqs, filter) else {
                continue;
            };
            out.push(BucketReport {
                bucket,
                category: filter,
                sequences: subset.len(),
                report: build_report(&subset, preds, space, options)?,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPACE: ImageSpace = ImageSpace {
        width: 512,
        height: 384,
    };

    fn one_pair(gt: Pixel, pred: Pixel) -> (Vec<SequenceAnnotation>, Predictions) {
        let gts = vec![SequenceAnnotation {
            sequence_id: "s".into(),
            space: SPACE,
            reference_frame: 0,
            evaluation_frames: vec![10],
            total_frames: 20,
            tracks: vec![GroundTruthTrack {
                point_id: "p".into(),
                category: Category::Scene,
                reference: Pixel::new(5.0, 5.0),
                evaluations: [(10, PointObservation::Visible(gt))].into_iter().collect(),
            }],
        }];
        let mut preds = Predictions::new();
        preds.insert(
            "s",
            PredictedTrack {
                point_id: "p".into(),
                frames: [(
                    10,
                    PredictedPoint {
                        x: pred.x,
                        y: pred.y,
                        visibility: None,
                    },
                )]
                .into_iter()
                .collect(),
            },
        );
        (gts, preds)
    }

    fn delta(gts: &[SequenceAnnotation], preds: &Predictions, t: ThresholdSet) -> Option<f64> {
        compute_delta(gts, preds, &SPACE, &t, ThresholdSpace::Raw)
            .unwrap()
            .average
            .value
    }

    #[test]
    fn zero_error_is_full_accuracy() {
        let (g, p) = one_pair(Pixel::new(100.0, 100.0), Pixel::new(100.0, 100.0));
        assert_eq!(delta(&g, &p, ThresholdSet::standard()), Some(100.0));
    }

    #[test]
    fn three_pixel_error_hits_three_of_five() {
        let (g, p) = one_pair(Pixel::new(100.0, 100.0), Pixel::new(103.0, 100.0));
        assert_eq!(delta(&g, &p, ThresholdSet::standard()), Some(60.0));
    }

    #[test]
    fn thirty_pixel_error_misses_relaxed_set() {
        let (g, p) = one_pair(Pixel::new(100.0, 100.0), Pixel::new(100.0, 130.0));
        assert_eq!(delta(&g, &p, ThresholdSet::relaxed()), Some(0.0));
    }

    #[test]
    fn threshold_boundary_is_inclusive() {
        let (g, p) = one_pair(Pixel::new(100.0, 100.0), Pixel::new(104.0, 100.0));
        let d = compute_delta(
            &g,
            &p,
            &SPACE,
            &ThresholdSet::standard(),
            ThresholdSpace::Raw,
        )
        .unwrap();
        assert_eq!(d.at(4.0), Some(100.0));
        assert_eq!(d.at(2.0), Some(0.0));
    }

    #[test]
    fn normalized_space_rescales_axes() {
        // 512 px wide -> 256: a 4 px horizontal error becomes 2.
        let (g, p) = one_pair(Pixel::new(100.0, 100.0), Pixel::new(104.0, 100.0));
        let d = compute_delta(
            &g,
            &p,
            &SPACE,
            &ThresholdSet::standard(),
            ThresholdSpace::Normalized256,
        )
        .unwrap();
        assert_eq!(d.at(2.0), Some(100.0));
        assert_eq!(d.at(1.0), Some(0.0));
    }

    #[test]
    fn missing_prediction_is_an_error() {
        let (g, _) = one_pair(Pixel::new(1.0, 1.0), Pixel::new(1.0, 1.0));
        let err = compute_delta(
            &g,
            &Predictions::new(),
            &SPACE,
            &ThresholdSet::standard(),
            ThresholdSpace::Raw,
        )
        .unwrap_err();
        assert!(err.to_string().contains("point p"));
    }

    #[test]
    fn threshold_sets_validate() {
        assert!(ThresholdSet::new(vec![]).is_err());
        assert!(ThresholdSet::new(vec![2.0, 1.0]).is_err());
        assert!(ThresholdSet::new(vec![0.0, 1.0]).is_err());
        assert!(ThresholdSet::new(vec![1.0, 1.0]).is_err());
        assert!(ThresholdSet::new(vec![0.5, 3.0]).is_ok());
    }

    #[test]
    fn cutoff_outside_unit_interval_is_rejected() {
        let (g, p) = one_pair(Pixel::new(1.0, 1.0), Pixel::new(1.0, 1.0));
        assert_eq!(
            compute_occlusion_accuracy(&g, &p, 1.5),
            Err(MetricsError::InvalidCutoff(1.5))
        );
    }

    #[test]
    fn median_of_pair_is_mean() {
        assert_eq!(median(&mut [4.0, 2.0]), Some(3.0));
        assert_eq!(median(&mut [5.0, 1.0, 3.0]), Some(3.0));
        assert_eq!(median(&mut []), None);
    }

    #[test]
    fn zero_bucket_width_is_rejected() {
        let (g, p) = one_pair(Pixel::new(1.0, 1.0), Pixel::new(1.0, 1.0));
        assert_eq!(
            bucket_report(&g, &p, &SPACE, 0, false, &MetricOptions::default()),
            Err(MetricsError::InvalidBucketWidth)
        );
    }

    #[test]
    fn metric_value_display() {
        assert_eq!(MetricValue::absent().to_string(), "--");
        assert_eq!(MetricValue::percent(1, 3).to_string(), "33.3");
    }
}

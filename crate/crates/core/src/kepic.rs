//! Semi-real sequence synthesis: pick high-motion windows from a
//! reconstructed video, project its 3D points into tracks, keep the tracks an
//! external tracker agrees with, resample to 24 frames, add object layers and
//! optionally loop the result.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::time::Duration;

use nalgebra::{Point3, Vector3};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataio::{
    Camera, Frame, Observation, Provenance, ReconstructionBundle, SequenceRecord, TrackRow,
    TrackSample,
};
use crate::geometry::{
    default_rotation_weight, motion_magnitude, project, CameraIntrinsics, CameraPose,
    GeometryError, Projection, ScenePoint3D,
};
use crate::model::{ImageSpace, Pixel};
use crate::oracle::{
    query_tracks, OracleError, OracleQuery, OracleRequest, OracleSample, OracleTrack, PlaybackData,
    TrackerOracle,
};

pub const WINDOW_FRAMES: usize = 32;
pub const OUTPUT_FRAMES: usize = 24;
pub const DEFAULT_STRIDE: usize = 16;
pub const CLUSTERS: usize = 3;
const KMEANS_MAX_ITER: usize = 100;
const KMEANS_RESTARTS: usize = 10;
/// Oracle visibility scores above this count as visible.
pub const VISIBILITY_CUTOFF: f64 = 0.5;
pub const DEFAULT_ALPHA_CUTOFF: f64 = 0.5;

#[derive(Debug, Error)]
pub enum KepicError {
    #[error("need at least {CLUSTERS} candidate windows, found {0}")]
    TooFewWindows(usize),
    #[error("loop augmentation needs an even frame count, got {0}")]
    OddFrameCount(usize),
    #[error("object layer {object_id}: {message}")]
    Layer { object_id: String, message: String },
    #[error("frame {0} has no pose")]
    UnposedFrame(String),
    #[error("frame {frame} references unknown camera {camera_id}")]
    UnknownCamera { frame: String, camera_id: u32 },
    #[error("expected {expected} frames, got {found}")]
    FrameCount { expected: usize, found: usize },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

// ---------------------------------------------------------------------------
// Window selection

#[derive(Debug, Clone, PartialEq)]
pub struct WindowCandidate {
    /// Index of the first frame in the video's frame order.
    pub start: usize,
    pub frames: Vec<String>,
    /// Summed per-step camera motion over the window.
    pub motion: f64,
    /// Cluster rank, 0 = least motion.
    pub cluster: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSelection {
    pub candidates: Vec<WindowCandidate>,
    /// Members of the highest-motion cluster, in video order.
    pub selected: Vec<WindowCandidate>,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub labels: Vec<usize>,
    /// Ascending; `labels` index into this.
    pub centroids: Vec<f64>,
}

fn nearest(v: f64, centers: &[f64]) -> usize {
    let mut best = 0;
    for (i, c) in centers.iter().enumerate() {
        if (v - c).abs() < (v - centers[best]).abs() {
            best = i;
        }
    }
    best
}

fn lloyd(values: &[f64], mut centers: Vec<f64>) -> (Vec<usize>, Vec<f64>, f64) {
    let mut labels: Vec<usize> = values.iter().map(|&v| nearest(v, &centers)).collect();
    for _ in 0..KMEANS_MAX_ITER {
        let mut sums = vec![0.0; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (&v, &l) in values.iter().zip(&labels) {
            sums[l] += v;
            counts[l] += 1;
        }
        for i in 0..centers.len() {
            if counts[i] > 0 {
                centers[i] = sums[i] / counts[i] as f64;
            }
        }
        let next: Vec<usize> = values.iter().map(|&v| nearest(v, &centers)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    let inertia = values
        .iter()
        .zip(&labels)
        .map(|(v, &l)| (v - centers[l]).powi(2))
        .sum();
    (labels, centers, inertia)
}

/// Globally optimal 1-D k-means: contiguous segments of the sorted values,
/// found by dynamic programming with divide-and-conquer split search.
fn exact_1d(values: &[f64], k: usize) -> (Vec<usize>, Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let n = order.len();
    let mut s1 = vec![0.0; n + 1];
    let mut s2 = vec![0.0; n + 1];
    for (i, &o) in order.iter().enumerate() {
        s1[i + 1] = s1[i] + values[o];
        s2[i + 1] = s2[i] + values[o] * values[o];
    }
    let cost = |a: usize, b: usize| {
        let m = (b - a) as f64;
        (s2[b] - s2[a] - (s1[b] - s1[a]).powi(2) / m).max(0.0)
    };
    // prev[j]: best cost of j leading values in c-1 segments.
    let mut prev: Vec<f64> = (0..=n)
        .map(|j| if j == 0 { 0.0 } else { cost(0, j) })
        .collect();
    let mut splits: Vec<Vec<usize>> = Vec::new();
    for c in 2..=k {
        let mut cur = vec![f64::INFINITY; n + 1];
        let mut arg = vec![0usize; n + 1];
        fill_layer(c, n, c - 1, n - 1, &prev, &cost, &mut cur, &mut arg);
        splits.push(arg);
        prev = cur;
    }
    let mut bounds = vec![n];
    let mut j = n;
    for arg in splits.iter().rev() {
        j = arg[j];
        bounds.push(j);
    }
    bounds.push(0);
    bounds.reverse();
    let mut labels = vec![0; n];
    let mut centers = Vec::with_capacity(k);
    for (c, w) in bounds.windows(2).enumerate() {
        centers.push((s1[w[1]] - s1[w[0]]) / (w[1] - w[0]) as f64);
        for &o in &order[w[0]..w[1]] {
            labels[o] = c;
        }
    }
    let inertia = values
        .iter()
        .zip(&labels)
        .map(|(v, &l)| (v - centers[l]).powi(2))
        .sum();
    (labels, centers, inertia)
}

#[allow(clippy::too_many_arguments)]
fn fill_layer(
    lo: usize,
    hi: usize,
    opt_lo: usize,
    opt_hi: usize,
    prev: &[f64],
    cost: &dyn Fn(usize, usize) -> f64,
    cur: &mut [f64],
    arg: &mut [usize],
) {
    if lo > hi {
        return;
    }
    let mid = (lo + hi) / 2;
    let mut best = (f64::INFINITY, opt_lo);
    for (i, &p) in prev
        .iter()
        .enumerate()
        .take(opt_hi.min(mid - 1) + 1)
        .skip(opt_lo)
    {
        let c = p + cost(i, mid);
        if c < best.0 {
            best = (c, i);
        }
    }
    cur[mid] = best.0;
    arg[mid] = best.1;
    if mid > lo {
        fill_layer(lo, mid - 1, opt_lo, best.1, prev, cost, cur, arg);
    }
    fill_layer(mid + 1, hi, best.1, opt_hi, prev, cost, cur, arg);
}

fn plus_plus_seeds(values: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut centers = vec![values[rng.random_range(0..values.len())]];
    while centers.len() < k {
        let d2: Vec<f64> = values
            .iter()
            .map(|&v| {
                centers
                    .iter()
                    .map(|c| (v - c).powi(2))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(0);
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        centers.push(values[pick]);
    }
    centers
}

/// Lloyd's k-means on scalars with k-means++ seeding, keeping the lowest
/// inertia of several seeded restarts, replaced by the exact 1-D optimum
/// when that is strictly better. `k` is reduced to the number of distinct
/// values. Labels are ranked by ascending centroid.
pub fn kmeans_1d(values: &[f64], k: usize, seed: u64) -> Clustering {
    if values.is_empty() {
        return Clustering {
            labels: vec![],
            centroids: vec![],
        };
    }
    let mut distinct = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let k = k.clamp(1, distinct.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<usize>, Vec<f64>, f64)> = None;
    for _ in 0..KMEANS_RESTARTS {
        let run = lloyd(values, plus_plus_seeds(values, k, &mut rng));
        if best.as_ref().is_none_or(|b| run.2 < b.2) {
            best = Some(run);
        }
    }
    let (mut labels, mut centers, inertia) = best.unwrap();
    // Lloyd can stall in a local minimum; in 1-D the optimum is cheap.
    let exact = exact_1d(values, k);
    if exact.2 < inertia - 1e-12 * inertia.max(1.0) {
        (labels, centers) = (exact.0, exact.1);
    }
    let mut order: Vec<usize> = (0..centers.len()).collect();
    order.sort_by(|&a, &b| centers[a].total_cmp(&centers[b]));
    let mut rank = vec![0; centers.len()];
    for (r, &c) in order.iter().enumerate() {
        rank[c] = r;
    }
    Clustering {
        labels: labels.into_iter().map(|l| rank[l]).collect(),
        centroids: order.iter().map(|&c| centers[c]).collect(),
    }
}

/// Indices of the values in the cluster with the largest centroid.
pub fn top_cluster(values: &[f64], seed: u64) -> Vec<usize> {
    let c = kmeans_1d(values, CLUSTERS, seed);
    let top = c.centroids.len().saturating_sub(1);
    (0..values.len()).filter(|&i| c.labels[i] == top).collect()
}

/// Enumerates 32-frame windows at `stride` over the video frame order, skips
/// windows touching unregistered frames, and keeps the highest-motion
/// cluster.
pub fn select_windows(
    bundle: &ReconstructionBundle,
    stride: usize,
    seed: u64,
) -> Result<WindowSelection, KepicError> {
    let order = bundle.ordered_frame_names();
    let poses: HashMap<&str, &CameraPose> = bundle
        .frames
        .iter()
        .map(|f| (f.name.as_str(), &f.pose))
        .collect();
    let posed: Vec<CameraPose> = order
        .iter()
        .filter_map(|n| poses.get(n.as_str()).map(|p| **p))
        .collect();
    let weight = default_rotation_weight(&posed);

    let mut candidates = Vec::new();
    let mut skipped = 0;
    let mut start = 0;
    while start + WINDOW_FRAMES <= order.len() {
        let names = &order[start..start + WINDOW_FRAMES];
        match names
            .iter()
            .map(|n| poses.get(n.as_str()))
            .collect::<Option<Vec<_>>>()
        {
            Some(window) => candidates.push(WindowCandidate {
                start,
                frames: names.to_vec(),
                motion: window
                    .windows(2)
                    .map(|w| motion_magnitude(w[0], w[1], weight))
                    .sum(),
                cluster: 0,
            }),
            None => {
                log::warn!("skipping window at frame {start}: unposed frames");
                skipped += 1;
            }
        }
        start += stride.max(1);
    }
    if candidates.len() < CLUSTERS {
        return Err(KepicError::TooFewWindows(candidates.len()));
    }
    let features: Vec<f64> = candidates.iter().map(|c| c.motion).collect();
    let clustering = kmeans_1d(&features, CLUSTERS, seed);
    let top = clustering.centroids.len() - 1;
    for (c, &l) in candidates.iter_mut().zip(&clustering.labels) {
        c.cluster = l;
    }
    let selected = candidates
        .iter()
        .filter(|c| c.cluster == top)
        .cloned()
        .collect();
    Ok(WindowSelection {
        candidates,
        selected,
        skipped,
    })
}

// ---------------------------------------------------------------------------
// Scene tracks

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneTrackParams {
    pub max_points: usize,
    pub min_track_len: usize,
    pub max_reproj: f64,
}

impl Default for SceneTrackParams {
    fn default() -> Self {
        Self {
            max_points: 4000,
            min_track_len: 20,
            max_reproj: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneTrack {
    pub point_id: u64,
    /// One projection per window frame. Points on a camera plane get
    /// `(-1, -1)`, depth 0 and `in_view = false`.
    pub samples: Vec<Projection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneTracks {
    pub start: usize,
    pub frames: Vec<String>,
    pub space: ImageSpace,
    /// Ordered by point id.
    pub tracks: Vec<SceneTrack>,
}

fn frame_camera<'a>(
    bundle: &'a ReconstructionBundle,
    index: &HashMap<&str, &'a Frame>,
    name: &str,
) -> Result<(&'a Frame, &'a Camera), KepicError> {
    let frame = index
        .get(name)
        .ok_or_else(|| KepicError::UnposedFrame(name.to_string()))?;
    let camera = bundle
        .cameras
        .get(&frame.camera_id)
        .ok_or_else(|| KepicError::UnknownCamera {
            frame: name.to_string(),
            camera_id: frame.camera_id,
        })?;
    Ok((frame, camera))
}

fn project_into(
    point: &Point3<f64>,
    frame: &Frame,
    camera: &Camera,
    space: &ImageSpace,
) -> Projection {
    match project(point, &frame.pose, &camera.intrinsics, &camera.space) {
        Ok(p) if camera.space == *space => p,
        Ok(p) => {
            let (sx, sy) = camera.space.ratios_to(space);
            let pixel = Pixel::new(p.pixel.x * sx, p.pixel.y * sy);
            Projection { pixel, ..p }
        }
        Err(_) => Projection {
            pixel: Pixel::new(-1.0, -1.0),
            depth: 0.0,
            in_view: false,
        },
    }
}

/// Projects the reliable 3D points into every frame of a window.
///
/// A point is eligible when it projects inside the first frame and passes
/// both quality thresholds. Above `max_points`, the lowest-error points win
/// (ties by id).
pub fn build_scene_tracks(
    bundle: &ReconstructionBundle,
    window: &WindowCandidate,
    space: &ImageSpace,
    params: &SceneTrackParams,
) -> Result<SceneTracks, KepicError> {
    let index: HashMap<&str, &Frame> = bundle.frames.iter().map(|f| (f.name.as_str(), f)).collect();
    let views = window
        .frames
        .iter()
        .map(|n| frame_camera(bundle, &index, n))
        .collect::<Result<Vec<_>, _>>()?;
    let (first_frame, first_camera) = views[0];

    let mut eligible: Vec<&ScenePoint3D> = bundle
        .points
        .values()
        .filter(|p| {
            p.track_length() >= params.min_track_len
                && p.reprojection_error <= params.max_reproj
                && project_into(&p.position, first_frame, first_camera, space).in_view
        })
        .collect();
    if eligible.len() > params.max_points {
        eligible.sort_by(|a, b| {
            a.reprojection_error
                .total_cmp(&b.reprojection_error)
                .then(a.point_id.cmp(&b.point_id))
        });
        eligible.truncate(params.max_points);
        eligible.sort_by_key(|p| p.point_id);
    }
    if eligible.is_empty() {
        log::warn!("window at frame {}: no eligible points", window.start);
    }
    let tracks = eligible
        .into_iter()
        .map(|p| SceneTrack {
            point_id: p.point_id,
            samples: views
                .iter()
                .map(|(f, c)| project_into(&p.position, f, c, space))
                .collect(),
        })
        .collect();
    Ok(SceneTracks {
        start: window.start,
        frames: window.frames.clone(),
        space: *space,
        tracks,
    })
}

// ---------------------------------------------------------------------------
// Oracle filter

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledSample {
    pub pixel: Pixel,
    pub visible: bool,
    pub in_view: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrack {
    pub point_id: String,
    pub samples: Vec<LabeledSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilteredTracks {
    pub start: usize,
    pub frames: Vec<String>,
    pub space: ImageSpace,
    pub kept: Vec<LabeledTrack>,
    pub rejected: Vec<u64>,
}

/// Mean L2 between a projected track and the oracle's over the frames where
/// the projection is in view.
pub fn oracle_agreement(track: &SceneTrack, oracle: &[OracleSample]) -> Option<f64> {
    let d: Vec<f64> = track
        .samples
        .iter()
        .zip(oracle)
        .filter(|(p, _)| p.in_view)
        .map(|(p, o)| p.pixel.distance(&Pixel::new(o.x, o.y)))
        .collect();
    (!d.is_empty()).then(|| d.iter().sum::<f64>() / d.len() as f64)
}

/// Queries the oracle from each track's first-frame position and keeps the
/// tracks it agrees with to within `max_mean_l2` pixels. `frame_paths` are
/// what the oracle is told to read, one per window frame.
pub fn filter_with_oracle(
    tracks: &SceneTracks,
    frame_paths: &[String],
    oracle: &mut dyn TrackerOracle,
    max_mean_l2: f64,
    request_id: u64,
    timeout: Duration,
) -> Result<FilteredTracks, KepicError> {
    if frame_paths.len() != tracks.frames.len() {
        return Err(KepicError::FrameCount {
            expected: tracks.frames.len(),
            found: frame_paths.len(),
        });
    }
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    if !tracks.tracks.is_empty() {
        let request = OracleRequest {
            id: request_id,
            frames: frame_paths.to_vec(),
            width: tracks.space.width,
            height: tracks.space.height,
            queries: tracks
                .tracks
                .iter()
                .map(|t| OracleQuery {
                    point_id: t.point_id.to_string(),
                    x: t.samples[0].pixel.x,
                    y: t.samples[0].pixel.y,
                })
                .collect(),
        };
        let response = query_tracks(&request, oracle, timeout)?;
        for (track, answer) in tracks.tracks.iter().zip(&response.tracks) {
            match oracle_agreement(track, &answer.frames) {
                Some(l2) if l2 <= max_mean_l2 => kept.push(LabeledTrack {
                    point_id: track.point_id.to_string(),
                    samples: track
                        .samples
                        .iter()
                        .zip(&answer.frames)
                        .map(|(p, o)| LabeledSample {
                            pixel: p.pixel,
                            visible: p.in_view && o.visibility > VISIBILITY_CUTOFF,
                            in_view: p.in_view,
                        })
                        .collect(),
                }),
                _ => rejected.push(track.point_id),
            }
        }
    }
    Ok(FilteredTracks {
        start: tracks.start,
        frames: tracks.frames.clone(),
        space: tracks.space,
        kept,
        rejected,
    })
}

// ---------------------------------------------------------------------------
// Resampling, compositing, looping

/// Per-pixel coverage of an object layer, 0..=255.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaMask {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl AlphaMask {
    /// `data` is row-major; panics if it does not hold `width * height` values.
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Self {
        assert_eq!(
            data.len(),
            width as usize * height as usize,
            "alpha mask size"
        );
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn raw(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    /// Coverage in [0, 1] at the pixel containing `p`; zero outside the mask.
    pub fn alpha(&self, p: Pixel) -> f64 {
        if !(p.x >= 0.0 && p.y >= 0.0 && p.x < self.width as f64 && p.y < self.height as f64) {
            return 0.0;
        }
        self.raw(p.x as u32, p.y as u32) as f64 / 255.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectTrack {
    pub point_id: String,
    /// `(position, visible)` per layer frame.
    pub samples: Vec<(Pixel, bool)>,
}

/// A pre-rendered moving object: RGBA frames plus the tracks of points on it.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectLayer {
    pub object_id: String,
    pub frames: Vec<PathBuf>,
    pub alpha: Vec<AlphaMask>,
    pub tracks: Vec<ObjectTrack>,
}

impl ObjectLayer {
    fn check(&self, frames: usize) -> Result<(), KepicError> {
        let fail = |message: String| KepicError::Layer {
            object_id: self.object_id.clone(),
            message,
        };
        if self.alpha.len() != frames || self.frames.len() != frames {
            return Err(fail(format!(
                "{} frames, expected {frames}",
                self.alpha.len()
            )));
        }
        if let Some(t) = self.tracks.iter().find(|t| t.samples.len() != frames) {
            return Err(fail(format!(
                "track {} has {} samples",
                t.point_id,
                t.samples.len()
            )));
        }
        Ok(())
    }
}

/// Nearest-index resampling: output `i` reads input `round(i (n_in - 1) / (n_out - 1))`.
pub fn resample_indices(n_in: usize, n_out: usize) -> Vec<usize> {
    if n_out <= 1 {
        return vec![0; n_out];
    }
    let (a, b) = (n_in - 1, n_out - 1);
    (0..n_out).map(|i| (2 * i * a + b) / (2 * b)).collect()
}

fn sample(p: Pixel, visible: bool, in_view: bool) -> TrackSample {
    TrackSample {
        x: p.x as f32,
        y: p.y as f32,
        visible,
        in_view,
    }
}

/// Resamples a filtered window to 24 frames and stacks object layers on top.
/// Scene points under any layer with alpha ≥ `alpha_cutoff` become not
/// visible (still in view). Object point ids are prefixed with their layer id.
pub fn resample_and_composite(
    sequence_id: &str,
    filtered: &FilteredTracks,
    layers: &[ObjectLayer],
    alpha_cutoff: f64,
) -> Result<SequenceRecord, KepicError> {
    for layer in layers {
        layer.check(OUTPUT_FRAMES)?;
    }
    let picks = resample_indices(filtered.frames.len(), OUTPUT_FRAMES);
    let space = filtered.space;
    let occluded = |frame: usize, p: Pixel| {
        layers.iter().any(|l| {
            let mask = &l.alpha[frame];
            let (sx, sy) = (
                mask.width() as f64 / space.width as f64,
                mask.height() as f64 / space.height as f64,
            );
            mask.alpha(Pixel::new(p.x * sx, p.y * sy)) >= alpha_cutoff
        })
    };
    let scene_tracks = filtered
        .kept
        .iter()
        .map(|t| TrackRow {
            point_id: t.point_id.clone(),
            samples: picks
                .iter()
                .enumerate()
                .map(|(out, &src)| {
                    let s = t.samples[src];
                    let visible = s.visible && !(s.in_view && occluded(out, s.pixel));
                    sample(s.pixel, visible, s.in_view)
                })
                .collect(),
        })
        .collect();
    let object_tracks = layers
        .iter()
        .flat_map(|l| {
            l.tracks.iter().map(move |t| TrackRow {
                point_id: format!("{}:{}", l.object_id, t.point_id),
                samples: t
                    .samples
                    .iter()
                    .map(|&(p, v)| {
                        let in_view = space.contains(p);
                        sample(p, v && in_view, in_view)
                    })
                    .collect(),
            })
        })
        .collect();
    let frames: Vec<String> = picks.iter().map(|&i| filtered.frames[i].clone()).collect();
    Ok(SequenceRecord {
        sequence_id: sequence_id.to_string(),
        frames: frames.clone(),
        space,
        scene_tracks,
        object_tracks,
        provenance: Provenance {
            source_start: filtered.start,
            source_frames: frames,
            loop_augmented: false,
            object_count: layers.len(),
            object_ids: layers.iter().map(|l| l.object_id.clone()).collect(),
        },
    })
}

/// 0-based source index for each output frame of the looped order
/// `[1, 3, 5, …, N-1, N, N-2, …, 4, 2]`.
pub fn loop_order(n: usize) -> Result<Vec<usize>, KepicError> {
    if n % 2 == 1 {
        return Err(KepicError::OddFrameCount(n));
    }
    Ok((1..=n)
        .map(|k| {
            if k <= n / 2 {
                2 * k - 1
            } else {
                2 * (n - k + 1)
            }
        })
        .map(|one_based| one_based - 1)
        .collect())
}

pub fn loop_augment(record: &SequenceRecord) -> Result<SequenceRecord, KepicError> {
    let order = loop_order(record.frame_count())?;
    let permute_rows = |rows: &[TrackRow]| -> Vec<TrackRow> {
        rows.iter()
            .map(|r| TrackRow {
                point_id: r.point_id.clone(),
                samples: order.iter().map(|&i| r.samples[i]).collect(),
            })
            .collect()
    };
    let mut provenance = record.provenance.clone();
    if provenance.source_frames.len() == order.len() {
        provenance.source_frames = order
            .iter()
            .map(|&i| provenance.source_frames[i].clone())
            .collect();
    }
    provenance.loop_augmented = true;
    Ok(SequenceRecord {
        sequence_id: record.sequence_id.clone(),
        frames: order.iter().map(|&i| record.frames[i].clone()).collect(),
        space: record.space,
        scene_tracks: permute_rows(&record.scene_tracks),
        object_tracks: permute_rows(&record.object_tracks),
        provenance,
    })
}

// ---------------------------------------------------------------------------
// Synthetic fixtures

/// A reconstruction with known geometry and its closed-form tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFixture {
    pub bundle: ReconstructionBundle,
    pub space: ImageSpace,
    /// Frame names in temporal order.
    pub frames: Vec<String>,
    /// Per point, per frame: pixel, depth and in-view flag computed with
    /// explicit trigonometry rather than [`project`].
    pub tracks: BTreeMap<u64, Vec<Projection>>,
}

/// Camera yaw (radians) and center per frame, from a Catmull-Rom spline
/// through keyposes. The middle keypose turns far enough for part of the
/// scene to leave view; the last one turns back.
fn camera_path(rng: &mut ChaCha8Rng, n_frames: usize) -> Vec<(f64, Vector3<f64>)> {
    let keys = 3 + n_frames / 24;
    let mid = keys / 2;
    let key_yaw: Vec<f64> = (0..keys)
        .map(|i| {
            if i == 0 {
                0.0
            } else if i == mid {
                rng.random_range(1.2..1.9)
            } else if i == keys - 1 {
                rng.random_range(-0.05..0.05)
            } else {
                rng.random_range(-0.4..0.4)
            }
        })
        .collect();
    let key_pos: Vec<Vector3<f64>> = (0..keys)
        .map(|_| {
            Vector3::new(
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.3..0.3),
            )
        })
        .collect();
    let catmull = |p0: f64, p1: f64, p2: f64, p3: f64, t: f64| {
        0.5 * (2.0 * p1
            + (p2 - p0) * t
            + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t * t
            + (3.0 * p1 - p0 - 3.0 * p2 + p3) * t * t * t)
    };
    (0..n_frames)
        .map(|f| {
            let u = f as f64 / (n_frames - 1) as f64 * (keys - 1) as f64;
            let seg = (u.floor() as usize).min(keys - 2);
            let t = u - seg as f64;
            let at = |i: isize| i.clamp(0, keys as isize - 1) as usize;
            let ix = [at(seg as isize - 1), seg, seg + 1, at(seg as isize + 2)];
            let yaw = catmull(
                key_yaw[ix[0]],
                key_yaw[ix[1]],
                key_yaw[ix[2]],
                key_yaw[ix[3]],
                t,
            );
            let c = Vector3::from_fn(|r, _| {
                catmull(
                    key_pos[ix[0]][r],
                    key_pos[ix[1]][r],
                    key_pos[ix[2]][r],
                    key_pos[ix[3]][r],
                    t,
                )
            });
            (yaw, c)
        })
        .collect()
}

/// Random static points in front of a yawing camera. Every point gets a
/// random COLMAP track length in [5, 400] and error in [0, 1.5], so some fail
/// each eligibility threshold. Deterministic in `seed`.
pub fn make_synthetic_fixture(
    seed: u64,
    n_points: usize,
    n_frames: usize,
    space: ImageSpace,
) -> SyntheticFixture {
    assert!(
        n_points >= 1 && n_frames >= 2,
        "fixture needs points and two frames"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (space.width as f64, space.height as f64);
    let intr = CameraIntrinsics::new(0.8 * w, 0.8 * w, w / 2.0, h / 2.0).expect("positive focal");
    let path = camera_path(&mut rng, n_frames);
    let frames: Vec<String> = (0..n_frames).map(|i| format!("frame_{i:04}.jpg")).collect();

    // (id, position, observations, error, color)
    type Draw = (u64, Point3<f64>, usize, f64, [u8; 3]);
    let points: Vec<Draw> = (1..=n_points as u64)
        .map(|id| {
            let pos = Point3::new(
                rng.random_range(-6.0..6.0),
                rng.random_range(-2.5..2.5),
                rng.random_range(4.0..14.0),
            );
            (
                id,
                pos,
                rng.random_range(5..=400),
                rng.random_range(0.0..1.5),
                rng.random(),
            )
        })
        .collect();

    // Closed form: camera yaw θ about +y, world-to-camera rotation Ry(θ)ᵀ.
    let analytic = |p: &Point3<f64>, (yaw, c): &(f64, Vector3<f64>)| {
        let (s, co) = yaw.sin_cos();
        let d = p.coords - c;
        let (xc, yc, zc) = (co * d.x - s * d.z, d.y, s * d.x + co * d.z);
        let pixel = Pixel::new(intr.fx * xc / zc + intr.cx, intr.fy * yc / zc + intr.cy);
        Projection {
            pixel,
            depth: zc,
            in_view: zc > 0.0 && space.contains(pixel),
        }
    };
    let tracks: BTreeMap<u64, Vec<Projection>> = points
        .iter()
        .map(|(id, pos, ..)| (*id, path.iter().map(|v| analytic(pos, v)).collect()))
        .collect();

    let mut observations: Vec<Vec<Observation>> = vec![Vec::new(); n_frames];
    let mut scene_points = BTreeMap::new();
    for (id, pos, length, error, color) in &points {
        let mut track = Vec::with_capacity(*length);
        for (f, proj) in tracks[id].iter().enumerate() {
            if proj.in_view && track.len() < *length {
                track.push(((f + 1) as u32, observations[f].len() as u32));
                observations[f].push(Observation {
                    pixel: proj.pixel,
                    point3d_id: Some(*id),
                });
            }
        }
        // Remaining observations come from images outside this subset.
        let mut extra = (n_frames + 1) as u32;
        while track.len() < *length {
            track.push((extra, 0));
            extra += 1;
        }
        scene_points.insert(
            *id,
            ScenePoint3D {
                point_id: *id,
                position: *pos,
                reprojection_error: *error,
                track,
                color: Some(*color),
            },
        );
    }

    let bundle_frames = path
        .iter()
        .zip(observations)
        .enumerate()
        .map(|(i, ((yaw, c), observations))| {
            let (s, co) = yaw.sin_cos();
            let t = -Vector3::new(co * c.x - s * c.z, c.y, s * c.x + co * c.z);
            let (hs, hc) = (yaw / 2.0).sin_cos();
            Frame {
                image_id: (i + 1) as u32,
                name: frames[i].clone(),
                camera_id: 1,
                pose: CameraPose::from_wxyz(hc, 0.0, -hs, 0.0, t).expect("unit quaternion"),
                observations,
            }
        })
        .collect();
    let mut cameras = BTreeMap::new();
    cameras.insert(
        1,
        Camera {
            camera_id: 1,
            space,
            intrinsics: intr,
        },
    );
    SyntheticFixture {
        bundle: ReconstructionBundle {
            cameras,
            frames: bundle_frames,
            points: scene_points,
            frame_order: None,
        },
        space,
        frames,
        tracks,
    }
}

/// Playback data replaying the fixture's analytic tracks, with the points in
/// `drifted` displaced by `offset` pixels in a random direction on every
/// frame. Visibility is 1 in view and 0 otherwise.
pub fn fixture_playback(
    fixture: &SyntheticFixture,
    drifted: &BTreeSet<u64>,
    offset: f64,
    seed: u64,
) -> PlaybackData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PlaybackData {
        frames: fixture.frames.clone(),
        tracks: fixture
            .tracks
            .iter()
            .map(|(id, samples)| {
                let (dx, dy) = if drifted.contains(id) {
                    let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    (offset * a.cos(), offset * a.sin())
                } else {
                    (0.0, 0.0)
                };
                OracleTrack {
                    point_id: id.to_string(),
                    frames: samples
                        .iter()
                        .map(|p| OracleSample {
                            x: p.pixel.x + dx,
                            y: p.pixel.y + dy,
                            visibility: if p.in_view { 1.0 } else { 0.0 },
                        })
                        .collect(),
                }
            })
            .collect(),
    }
}

/// Picks `count` random ids out of `pool`, sorted.
pub fn choose_ids(pool: &[u64], count: usize, seed: u64) -> BTreeSet<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.choose_multiple(&mut rng, count.min(pool.len()))
        .copied()
        .collect()
}

/// Opaque discs sliding across the frame, each carrying a ring of tracked
/// points.
pub fn make_object_layers(seed: u64, count: usize, space: ImageSpace) -> Vec<ObjectLayer> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (space.width as f64, space.height as f64);
    (0..count)
        .map(|i| {
            let radius = rng.random_range(0.04..0.1) * w.min(h) + 2.0;
            let from = Pixel::new(rng.random_range(0.0..w), rng.random_range(0.0..h));
            let to = Pixel::new(rng.random_range(0.0..w), rng.random_range(0.0..h));
            let centers: Vec<Pixel> = (0..OUTPUT_FRAMES)
                .map(|f| {
                    let t = f as f64 / (OUTPUT_FRAMES - 1) as f64;
                    Pixel::new(from.x + (to.x - from.x) * t, from.y + (to.y - from.y) * t)
                })
                .collect();
            let alpha = centers
                .iter()
                .map(|c| {
                    let data = (0..space.height)
                        .flat_map(|y| (0..space.width).map(move |x| (x, y)))
                        .map(|(x, y)| {
                            let p = Pixel::new(x as f64 + 0.5, y as f64 + 0.5);
                            if p.distance(c) <= radius {
                                255
                            } else {
                                0
                            }
                        })
                        .collect();
                    AlphaMask::new(space.width, space.height, data)
                })
                .collect();
            let tracks = (0..8)
                .map(|k| {
                    let a = k as f64 * std::f64::consts::TAU / 8.0;
                    let r = 0.5 * radius;
                    ObjectTrack {
                        point_id: k.to_string(),
                        samples: centers
                            .iter()
                            .map(|c| (Pixel::new(c.x + r * a.cos(), c.y + r * a.sin()), true))
                            .collect(),
                    }
                })
                .collect();
            ObjectLayer {
                object_id: format!("obj_{i:02}"),
                frames: (0..OUTPUT_FRAMES)
                    .map(|f| PathBuf::from(format!("rgba_{f:02}.png")))
                    .collect(),
                alpha,
                tracks,
            }
        })
        .collect()
}

/// File name component of a frame reference.
pub fn frame_basename(frame: &str) -> String {
    Path::new(frame)
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| frame.to_string())
}

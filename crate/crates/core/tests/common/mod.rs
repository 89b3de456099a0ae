//! Test support: random evaluation cases in a plain representation, their
//! conversion to library types, and a brute-force metric implementation that
//! works on the plain representation only.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::Rng;
use trackbench::metrics::Predictions;
use trackbench::model::{
    Category, GroundTruthTrack, ImageSpace, Pixel, PointObservation, PredictedPoint,
    PredictedTrack, SequenceAnnotation,
};

pub const W: u32 = 512;
pub const H: u32 = 384;
pub const STANDARD: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];
pub const RELAXED: [f64; 3] = [8.0, 16.0, 24.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum St {
    Vis,
    Occ,
    Oov,
}

#[derive(Debug, Clone)]
pub struct CaseTrack {
    pub category: Category,
    pub reference: (f64, f64),
    /// `(state, x, y)` per evaluation frame; x/y unused when out of view.
    pub gt: Vec<(St, f64, f64)>,
    /// `(x, y, visibility)` per evaluation frame.
    pub pred: Vec<(f64, f64, Option<f64>)>,
}

#[derive(Debug, Clone)]
pub struct CaseSeq {
    pub id: String,
    pub total_frames: u32,
    pub frames: Vec<u32>,
    pub tracks: Vec<CaseTrack>,
}

#[derive(Debug, Clone)]
pub struct Case {
    pub seqs: Vec<CaseSeq>,
}

fn inside(rng: &mut impl Rng) -> (f64, f64) {
    (
        rng.random_range(0.0..W as f64),
        rng.random_range(0.0..H as f64),
    )
}

/// Offsets whose lengths are exactly representable: 0, 1, 2, 4, 5, 8, 10,
/// 16, 24 and 25 pixels.
const EXACT: [(f64, f64); 10] = [
    (0.0, 0.0),
    (1.0, 0.0),
    (0.0, 2.0),
    (0.0, -4.0),
    (3.0, 4.0),
    (-8.0, 0.0),
    (6.0, -8.0),
    (0.0, 16.0),
    (24.0, 0.0),
    (-15.0, 20.0),
];

fn predict(rng: &mut impl Rng, gt: (St, f64, f64)) -> (f64, f64) {
    let (st, x, y) = gt;
    match rng.random_range(0..8) {
        0 if st != St::Oov => (x, y),
        1 if st != St::Oov => {
            let (dx, dy) = EXACT[rng.random_range(0..EXACT.len())];
            (x + dx, y + dy)
        }
        2 | 3 if st != St::Oov => (
            x + rng.random_range(-30.0..30.0),
            y + rng.random_range(-30.0..30.0),
        ),
        4 => (-1.0, -1.0),
        5 => match rng.random_range(0..4) {
            0 => (W as f64, rng.random_range(0.0..H as f64)),
            1 => (rng.random_range(0.0..W as f64), H as f64),
            2 => (0.0, 0.0),
            _ => (
                rng.random_range(-100.0..-0.001),
                rng.random_range(-50.0..450.0),
            ),
        },
        6 => (
            rng.random_range(-200.0..W as f64 + 200.0),
            rng.random_range(-200.0..H as f64 + 200.0),
        ),
        _ => inside(rng),
    }
}

/// One or two sequences, at most 10 tracks in total, 2 evaluation frames.
/// Either every prediction carries visibility scores or none does.
pub fn random_case(rng: &mut impl Rng) -> Case {
    let with_vis = rng.random_bool(0.6);
    let n_seqs = rng.random_range(1..=2);
    let mut budget = rng.random_range(1..=10usize);
    let mut seqs = Vec::new();
    for s in 0..n_seqs {
        let n_tracks = if s + 1 == n_seqs {
            budget
        } else {
            rng.random_range(0..=budget)
        };
        budget -= n_tracks;
        let total_frames = rng.random_range(20..900);
        let f1 = rng.random_range(1..total_frames - 1);
        let f2 = rng.random_range(f1 + 1..total_frames);
        let tracks = (0..n_tracks)
            .map(|_| {
                let gt: Vec<(St, f64, f64)> = (0..2)
                    .map(|_| {
                        let (x, y) = inside(rng);
                        match rng.random_range(0..5) {
                            0 | 1 => (St::Vis, x, y),
                            2 => (St::Occ, x, y),
                            _ => (St::Oov, f64::NAN, f64::NAN),
                        }
                    })
                    .collect();
                let pred = gt
                    .iter()
                    .map(|&g| {
                        let (x, y) = predict(rng, g);
                        let vis = with_vis.then(|| match rng.random_range(0..4) {
                            0 => 0.5,
                            1 => 1.0,
                            2 => 0.0,
                            _ => rng.random_range(0.0..=1.0),
                        });
                        (x, y, vis)
                    })
                    .collect();
                CaseTrack {
                    category: [Category::Scene, Category::Dynamic, Category::Unknown]
                        [rng.random_range(0..3)],
                    reference: inside(rng),
                    gt,
                    pred,
                }
            })
            .collect();
        seqs.push(CaseSeq {
            id: format!("seq{s}"),
            total_frames,
            frames: vec![f1, f2],
            tracks,
        });
    }
    Case { seqs }
}

pub fn to_library(case: &Case) -> (Vec<SequenceAnnotation>, Predictions) {
    let space = ImageSpace::new(W, H).unwrap();
    let mut preds = Predictions::new();
    let gts = case
        .seqs
        .iter()
        .map(|s| {
            let tracks = s
                .tracks
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let point_id = format!("p{i}");
                    let evaluations: BTreeMap<u32, PointObservation> = s
                        .frames
                        .iter()
                        .zip(&t.gt)
                        .map(|(&f, &(st, x, y))| {
                            let obs = match st {
                                St::Vis => PointObservation::Visible(Pixel::new(x, y)),
                                St::Occ => PointObservation::Occluded(Pixel::new(x, y)),
                                St::Oov => PointObservation::OutOfView,
                            };
                            (f, obs)
                        })
                        .collect();
                    preds.insert(
                        &s.id,
                        PredictedTrack {
                            point_id: point_id.clone(),
                            frames: s
                                .frames
                                .iter()
                                .zip(&t.pred)
                                .map(|(&f, &(x, y, visibility))| {
                                    (f, PredictedPoint { x, y, visibility })
                                })
                                .collect(),
                        },
                    );
                    GroundTruthTrack {
                        point_id,
                        category: t.category,
                        reference: Pixel::new(t.reference.0, t.reference.1),
                        evaluations,
                    }
                })
                .collect();
            SequenceAnnotation {
                sequence_id: s.id.clone(),
                space,
                reference_frame: 0,
                evaluation_frames: s.frames.clone(),
                total_frames: s.total_frames,
                tracks,
            }
        })
        .collect();
    (gts, preds)
}

/// Every metric, straight from the definitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Brute {
    pub delta: Vec<Option<f64>>,
    pub delta_avg: Option<f64>,
    pub delta_star: Vec<Option<f64>>,
    pub delta_star_avg: Option<f64>,
    pub reid: Vec<Option<f64>>,
    pub reid_avg: Option<f64>,
    pub iva: Option<f64>,
    pub oova: Option<f64>,
    pub oa: Option<f64>,
    pub mte: Option<f64>,
    pub jaccard: Vec<Option<f64>>,
    pub aj: Option<f64>,
}

fn l2(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    ((ax - bx) * (ax - bx) + (ay - by) * (ay - by)).sqrt()
}

fn in_image(x: f64, y: f64) -> bool {
    x >= 0.0 && x < W as f64 && y >= 0.0 && y < H as f64
}

fn mean(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

fn mean_opt(v: &[Option<f64>]) -> Option<f64> {
    if v.iter().any(|x| x.is_none()) {
        return None;
    }
    mean(&v.iter().map(|x| x.unwrap()).collect::<Vec<_>>())
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    if den == 0 {
        None
    } else {
        Some(num as f64 / den as f64 * 100.0)
    }
}

fn delta_at(case: &Case, tau: f64) -> Option<f64> {
    let (mut num, mut den) = (0, 0);
    for s in &case.seqs {
        for t in &s.tracks {
            for i in 0..t.gt.len() {
                if t.gt[i].0 == St::Vis {
                    den += 1;
                    if l2(t.pred[i].0, t.pred[i].1, t.gt[i].1, t.gt[i].2) <= tau {
                        num += 1;
                    }
                }
            }
        }
    }
    ratio(num, den)
}

fn reid_at(case: &Case, tau: f64) -> Option<f64> {
    let (mut num, mut den) = (0, 0);
    for s in &case.seqs {
        for t in &s.tracks {
            // With two evaluation frames a re-identification is OOV then in view.
            if t.gt[0].0 == St::Oov && t.gt[1].0 != St::Oov {
                den += 1;
                let left = !in_image(t.pred[0].0, t.pred[0].1);
                let close = l2(t.pred[1].0, t.pred[1].1, t.gt[1].1, t.gt[1].2) <= tau;
                if left && close {
                    num += 1;
                }
            }
        }
    }
    ratio(num, den)
}

fn jaccard_at(case: &Case, tau: f64, cutoff: f64) -> Option<f64> {
    let (mut tp, mut fn_, mut fp) = (0, 0, 0);
    for s in &case.seqs {
        for t in &s.tracks {
            for i in 0..t.gt.len() {
                let pv = t.pred[i].2.unwrap() > cutoff;
                if t.gt[i].0 == St::Vis {
                    if pv && l2(t.pred[i].0, t.pred[i].1, t.gt[i].1, t.gt[i].2) <= tau {
                        tp += 1;
                    } else {
                        fn_ += 1;
                    }
                } else if pv {
                    fp += 1;
                }
            }
        }
    }
    ratio(tp, tp + fn_ + fp)
}

pub fn brute(case: &Case, cutoff: f64) -> Brute {
    let all_tracks = || case.seqs.iter().flat_map(|s| &s.tracks);
    let has_scores = all_tracks().next().is_some_and(|t| t.pred[0].2.is_some());

    let delta: Vec<_> = STANDARD.iter().map(|&t| delta_at(case, t)).collect();
    let delta_star: Vec<_> = RELAXED.iter().map(|&t| delta_at(case, t)).collect();
    let reid: Vec<_> = RELAXED.iter().map(|&t| reid_at(case, t)).collect();

    let (mut iv_ok, mut iv_n, mut oov_ok, mut oov_n, mut oa_ok, mut oa_n) = (0, 0, 0, 0, 0, 0);
    let mut medians = Vec::new();
    for t in all_tracks() {
        let mut errs = Vec::new();
        for i in 0..t.gt.len() {
            let (px, py, vis) = t.pred[i];
            if t.gt[i].0 == St::Oov {
                oov_n += 1;
                if !in_image(px, py) {
                    oov_ok += 1;
                }
            } else {
                iv_n += 1;
                if in_image(px, py) {
                    iv_ok += 1;
                }
                errs.push(l2(px, py, t.gt[i].1, t.gt[i].2));
            }
            if let Some(v) = vis {
                oa_n += 1;
                if (v > cutoff) == (t.gt[i].0 == St::Vis) {
                    oa_ok += 1;
                }
            }
        }
        errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        match errs.len() {
            0 => {}
            1 => medians.push(errs[0]),
            _ => medians.push((errs[0] + errs[1]) / 2.0),
        }
    }
    let jaccard: Vec<_> = if has_scores {
        STANDARD
            .iter()
            .map(|&t| jaccard_at(case, t, cutoff))
            .collect()
    } else {
        vec![None; STANDARD.len()]
    };
    Brute {
        delta_avg: mean_opt(&delta),
        delta,
        delta_star_avg: mean_opt(&delta_star),
        delta_star,
        reid_avg: mean_opt(&reid),
        reid,
        iva: ratio(iv_ok, iv_n),
        oova: ratio(oov_ok, oov_n),
        oa: if has_scores { ratio(oa_ok, oa_n) } else { None },
        mte: mean(&medians),
        aj: if has_scores { mean_opt(&jaccard) } else { None },
        jaccard,
    }
}

pub fn close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(a), Some(b)) => (a - b).abs() <= tol,
        _ => false,
    }
}

/// Three tracks over a reference and two evaluation frames. Blue stays in
/// view and is tracked well. Red leaves view and comes back; the prediction
/// leaves too and returns onto it. Purple does the same but the prediction
/// stays in the image and ends far away.
pub fn three_track_case() -> Case {
    let track = |gt: Vec<(St, f64, f64)>, pred: Vec<(f64, f64, Option<f64>)>| CaseTrack {
        category: Category::Scene,
        reference: (100.0, 100.0),
        gt,
        pred,
    };
    let oov = (St::Oov, f64::NAN, f64::NAN);
    Case {
        seqs: vec![CaseSeq {
            id: "three_tracks".into(),
            total_frames: 300,
            frames: vec![100, 200],
            tracks: vec![
                track(
                    vec![(St::Vis, 120.0, 110.0), (St::Vis, 140.0, 115.0)],
                    vec![(121.0, 110.0, None), (140.0, 117.0, None)],
                ),
                track(
                    vec![oov, (St::Vis, 300.0, 200.0)],
                    vec![(-40.0, 180.0, None), (302.0, 201.0, None)],
                ),
                track(
                    vec![oov, (St::Vis, 60.0, 300.0)],
                    vec![(5.0, 250.0, None), (200.0, 120.0, None)],
                ),
            ],
        }],
    }
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_trackbench"))
}

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

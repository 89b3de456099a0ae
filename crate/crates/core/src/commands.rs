//! The workflows behind the command-line tool. Each returns a value the
//! binary prints, or an error that maps onto an exit code.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use image::{Rgba, RgbaImage};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::dataio::{
    load_annotations, load_object_layers, load_predictions, load_reconstruction, save_predictions,
    write_object_layer, write_reconstruction, write_sequence, DataIoError, SequenceRecord,
    TableEncoding,
};
use crate::kepic::{
    build_scene_tracks, choose_ids, filter_with_oracle, fixture_playback, frame_basename,
    loop_augment, make_object_layers, make_synthetic_fixture, resample_and_composite,
    select_windows, KepicError, ObjectLayer, SceneTrackParams, DEFAULT_ALPHA_CUTOFF,
};
use crate::metrics::{
    bucket_report, build_report, filter_category, BucketReport, CategoryFilter, MetricOptions,
    MetricReport, MetricValue, MetricsError, Predictions,
};
use crate::model::{validate_annotations, AnnotationStats, ImageSpace, ModelError};
use crate::oracle::{IdentityOracle, OracleError, PlaybackOracle, ProcessOracle, TrackerOracle};

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Input(#[from] DataIoError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Kepic(#[from] KepicError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("{0}")]
    Usage(String),
    #[error("writing output: {0}")]
    Output(DataIoError),
}

impl CommandError {
    /// 2 for bad input, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Input(_)
            | CommandError::Metrics(_)
            | CommandError::Model(_)
            | CommandError::Usage(_)
            | CommandError::Kepic(KepicError::TooFewWindows(_)) => 2,
            _ => 1,
        }
    }
}

fn output<T>(r: Result<T, DataIoError>) -> Result<T, CommandError> {
    r.map_err(CommandError::Output)
}

fn write_text(path: &Path, text: String) -> Result<(), CommandError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| {
            CommandError::Output(DataIoError::Io {
                path: parent.to_path_buf(),
                source: e,
            })
        })?;
    }
    std::fs::write(path, text).map_err(|e| {
        CommandError::Output(DataIoError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

// ---------------------------------------------------------------------------
// evaluate

#[derive(Debug, Clone)]
pub struct EvaluateConfig {
    pub annotations: PathBuf,
    pub predictions: PathBuf,
    pub out: PathBuf,
    pub eval_space: ImageSpace,
    pub options: MetricOptions,
    pub bucket_width: u32,
    pub split_category: bool,
    /// Predictions are already in `eval_space` rather than annotation space.
    pub predictions_in_eval_space: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryReport {
    pub category: CategoryFilter,
    pub sequences: usize,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub model: String,
    pub eval_space: ImageSpace,
    pub options: MetricOptions,
    pub bucket_width: u32,
    pub annotations: AnnotationStats,
    pub overall: Vec<CategoryReport>,
    pub buckets: Vec<BucketReport>,
}

impl EvaluationReport {
    /// The all-categories, all-lengths report.
    pub fn all(&self) -> &MetricReport {
        &self.overall[0].report
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_report(r: &EvaluationReport) -> String {
    let o = &r.options;
    let mut header = vec!["model", "bucket", "category", "sequences", "tracks"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    header.push("delta_avg".into());
    header.extend(o.thresholds.as_slice().iter().map(|t| format!("delta_{t}")));
    header.push("delta_star_avg".into());
    header.push("reid_delta_avg".into());
    header.extend(
        o.reid_thresholds
            .as_slice()
            .iter()
            .map(|t| format!("reid_delta_{t}")),
    );
    header.extend(["iva", "oova", "oa", "mte", "aj"].map(String::from));

    let row = |bucket: String, category: CategoryFilter, sequences: usize, m: &MetricReport| {
        let mut cells = vec![
            r.model.clone(),
            bucket,
            category.label().to_string(),
            sequences.to_string(),
            m.tracks.to_string(),
            cell(m.delta_avg.value),
        ];
        cells.extend(m.delta.iter().map(|s| cell(s.value)));
        cells.push(cell(m.delta_star_avg.value));
        cells.push(cell(m.reid_delta_avg.value));
        cells.extend(m.reid_delta.iter().map(|s| cell(s.value)));
        for v in [m.iva, m.oova, m.oa, m.mte, m.aj] {
            cells.push(cell(v.value));
        }
        cells
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).unwrap();
    for c in &r.overall {
        w.write_record(row("all".into(), c.category, c.sequences, &c.report))
            .unwrap();
    }
    for b in &r.buckets {
        w.write_record(row(
            b.bucket.to_string(),
            b.category,
            b.sequences,
            &b.report,
        ))
        .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

/// Scores a prediction file and writes `report.json` and `report.csv`.
pub fn cmd_evaluate(config: &EvaluateConfig) -> Result<EvaluationReport, CommandError> {
    let annotations = load_annotations(&config.annotations)?;
    let stats = validate_annotations(&annotations)?;
    let preds = load_predictions(&config.predictions, &annotations)?;
    let space = config.eval_space;
    let preds = if config.predictions_in_eval_space {
        preds
    } else {
        preds.rescaled(&annotations, &space)
    };
    let gts: Vec<_> = annotations.iter().map(|a| a.rescaled(&space)).collect();

    let filters: &[CategoryFilter] = if config.split_category {
        &[
            CategoryFilter::All,
            CategoryFilter::Scene,
            CategoryFilter::Dynamic,
        ]
    } else {
        &[CategoryFilter::All]
    };
    let mut overall = Vec::new();
    for &f in filters {
        if let Some(subset) = filter_category(&gts, f) {
            overall.push(CategoryReport {
                category: f,
                sequences: subset.len(),
                report: build_report(&subset, &preds, &space, &config.options)?,
            });
        }
    }
    let buckets = bucket_report(
        &gts,
        &preds,
        &space,
        config.bucket_width,
        config.split_category,
        &config.options,
    )?;
    let report = EvaluationReport {
        model: config
            .predictions
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        eval_space: space,
        options: config.options.clone(),
        bucket_width: config.bucket_width,
        annotations: stats,
        overall,
        buckets,
    };
    write_text(&config.out.join("report.json"), json(&report))?;
    write_text(&config.out.join("report.csv"), csv_report(&report))?;
    Ok(report)
}

/// One-line-per-metric text summary of the headline report.
pub fn format_summary(report: &MetricReport) -> String {
    let mut s = String::new();
    let rows: [(&str, MetricValue); 8] = [
        ("delta_avg", report.delta_avg),
        ("delta_star_avg", report.delta_star_avg),
        ("reid_delta_avg", report.reid_delta_avg),
        ("iva", report.iva),
        ("oova", report.oova),
        ("oa", report.oa),
        ("mte", report.mte),
        ("aj", report.aj),
    ];
    for (name, v) in rows {
        writeln!(s, "{name:>15}  {v}").unwrap();
    }
    s
}

/// Writes ground-truth playback predictions for an annotation set.
pub fn cmd_playback(
    annotations: &Path,
    out: &Path,
    with_visibility: bool,
) -> Result<usize, CommandError> {
    let set = load_annotations(annotations)?;
    validate_annotations(&set)?;
    let preds = Predictions::playback(&set, with_visibility);
    output(save_predictions(out, &preds))?;
    Ok(preds.len())
}

pub fn cmd_validate(annotations: &Path) -> Result<AnnotationStats, CommandError> {
    let set = load_annotations(annotations)?;
    Ok(validate_annotations(&set)?)
}

// ---------------------------------------------------------------------------
// synthesize

#[derive(Debug, Clone)]
pub struct SynthesizeConfig {
    pub reconstruction: PathBuf,
    pub objects: Option<PathBuf>,
    /// Source video frames; when given, composited PNGs are written too.
    pub frames: Option<PathBuf>,
    pub oracle_cmd: String,
    pub oracle_timeout: Duration,
    pub out: PathBuf,
    pub stride: usize,
    pub params: SceneTrackParams,
    pub filter_l2: f64,
    pub loop_fraction: f64,
    pub objects_per_sequence: usize,
    pub seed: u64,
    pub encoding: TableEncoding,
    /// Output space; defaults to the first camera's.
    pub space: Option<ImageSpace>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SynthesisSummary {
    pub windows_considered: usize,
    pub windows_skipped_unposed: usize,
    pub windows_selected: usize,
    pub windows_without_points: usize,
    pub windows_failed: usize,
    pub tracks_eligible: usize,
    pub tracks_kept: usize,
    pub tracks_rejected: usize,
    pub sequences_written: usize,
    pub sequences_looped: usize,
}

/// Resolves `--oracle-cmd`: `mock:identity`, `mock:playback:<file>`, or a
/// command line to launch.
pub fn open_oracle(spec: &str, timeout: Duration) -> Result<Box<dyn TrackerOracle>, CommandError> {
    if spec == "mock:identity" {
        return Ok(Box::new(IdentityOracle));
    }
    if let Some(path) = spec.strip_prefix("mock:playback:") {
        return Ok(Box::new(PlaybackOracle::from_file(Path::new(path))?));
    }
    if spec.starts_with("mock:") {
        return Err(CommandError::Usage(format!(
            "unknown built-in oracle {spec}"
        )));
    }
    Ok(Box::new(ProcessOracle::launch(spec, timeout)?))
}

fn composite_frames(
    frames_dir: &Path,
    record: &SequenceRecord,
    layers: &[ObjectLayer],
) -> Result<Vec<RgbaImage>, CommandError> {
    let open = |p: &Path| {
        let err = |source| {
            CommandError::Input(DataIoError::Image {
                path: p.to_path_buf(),
                source,
            })
        };
        image::ImageReader::open(p)
            .and_then(|r| r.with_guessed_format())
            .map_err(|e| err(image::ImageError::IoError(e)))?
            .decode()
            .map(|i| i.to_rgba8())
            .map_err(err)
    };
    let mut out = Vec::with_capacity(record.frames.len());
    for (k, name) in record.frames.iter().enumerate() {
        let mut base = open(&frames_dir.join(name))?;
        for layer in layers {
            let over = open(&layer.frames[k])?;
            for (x, y, px) in base.enumerate_pixels_mut() {
                if x >= over.width() || y >= over.height() {
                    continue;
                }
                let Rgba([r, g, b, a]) = *over.get_pixel(x, y);
                let a = a as f32 / 255.0;
                let mix =
                    |dst: u8, src: u8| (src as f32 * a + dst as f32 * (1.0 - a)).round() as u8;
                px.0 = [mix(px[0], r), mix(px[1], g), mix(px[2], b), 255];
            }
        }
        out.push(base);
    }
    Ok(out)
}

/// Runs the whole synthesis pipeline and writes one directory per sequence
/// under `out/sequences`, plus `out/summary.json`.
pub fn cmd_synthesize(config: &SynthesizeConfig) -> Result<SynthesisSummary, CommandError> {
    if !(0.0..=1.0).contains(&config.loop_fraction) {
        return Err(CommandError::Usage(
            "--loop-fraction must be in [0, 1]".into(),
        ));
    }
    let bundle = load_reconstruction(&config.reconstruction)?;
    let layers = match &config.objects {
        Some(dir) => load_object_layers(dir)?,
        None => Vec::new(),
    };
    let space = match config.space {
        Some(s) => s,
        None => bundle
            .cameras
            .values()
            .next()
            .map(|c| c.space)
            .ok_or_else(|| CommandError::Usage("reconstruction has no cameras".into()))?,
    };
    let selection = select_windows(&bundle, config.stride, config.seed)?;
    let mut oracle = open_oracle(&config.oracle_cmd, config.oracle_timeout)?;

    let mut summary = SynthesisSummary {
        windows_considered: selection.candidates.len(),
        windows_skipped_unposed: selection.skipped,
        windows_selected: selection.selected.len(),
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for (i, window) in selection.selected.iter().enumerate() {
        let sequence_id = format!("w{:06}", window.start);
        let scene = match build_scene_tracks(&bundle, window, &space, &config.params) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("{sequence_id}: {e}");
                summary.windows_failed += 1;
                continue;
            }
        };
        if scene.tracks.is_empty() {
            summary.windows_without_points += 1;
            continue;
        }
        summary.tracks_eligible += scene.tracks.len();
        let paths: Vec<String> = scene
            .frames
            .iter()
            .map(|n| match &config.frames {
                Some(dir) => dir.join(n).to_string_lossy().into_owned(),
                None => n.clone(),
            })
            .collect();
        let filtered = match filter_with_oracle(
            &scene,
            &paths,
            oracle.as_mut(),
            config.filter_l2,
            i as u64 + 1,
            config.oracle_timeout,
        ) {
            Ok(f) => f,
            Err(e) => {
                log::warn!("{sequence_id}: {e}");
                summary.windows_failed += 1;
                continue;
            }
        };
        summary.tracks_kept += filtered.kept.len();
        summary.tracks_rejected += filtered.rejected.len();

        let mut picks = sample(
            &mut rng,
            layers.len(),
            config.objects_per_sequence.min(layers.len()),
        )
        .into_vec();
        picks.sort_unstable();
        let chosen: Vec<ObjectLayer> = picks.iter().map(|&j| layers[j].clone()).collect();
        let looped = rng.random_bool(config.loop_fraction);

        let mut record =
            resample_and_composite(&sequence_id, &filtered, &chosen, DEFAULT_ALPHA_CUTOFF)?;
        let mut images = match &config.frames {
            Some(dir) => Some(composite_frames(dir, &record, &chosen)?),
            None => None,
        };
        if looped {
            record = loop_augment(&record)?;
            if let Some(imgs) = images.as_mut() {
                let order = crate::kepic::loop_order(imgs.len())?;
                *imgs = order.iter().map(|&k| imgs[k].clone()).collect();
            }
            summary.sequences_looped += 1;
        }
        let dir = config.out.join("sequences").join(&sequence_id);
        if let Some(imgs) = images {
            record.frames = (0..imgs.len())
                .map(|k| format!("frames/{k:02}.png"))
                .collect();
            output(
                std::fs::create_dir_all(dir.join("frames")).map_err(|e| DataIoError::Io {
                    path: dir.join("frames"),
                    source: e,
                }),
            )?;
            for (k, img) in imgs.iter().enumerate() {
                let path = dir.join(&record.frames[k]);
                output(
                    img.save(&path)
                        .map_err(|source| DataIoError::Image { path, source }),
                )?;
            }
        }
        output(write_sequence(&record, &dir, config.encoding))?;
        summary.sequences_written += 1;
    }
    write_text(&config.out.join("summary.json"), json(&summary))?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// fixture

#[derive(Debug, Clone)]
pub struct FixtureConfig {
    pub out: PathBuf,
    pub seed: u64,
    pub points: usize,
    pub frames: usize,
    pub space: ImageSpace,
    pub objects: usize,
    pub drift_points: usize,
    pub drift_px: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixtureSummary {
    pub points: usize,
    pub frames: usize,
    pub objects: usize,
    pub drifted: Vec<u64>,
}

/// Writes a synthetic reconstruction, object layers and a playback oracle
/// file (with `drift_points` displaced tracks) for trying the pipeline.
///
/// ```text
/// out/reconstruction/{cameras,images,points3D}.txt
/// out/objects/obj_NN/...
/// out/oracle_playback.json
/// out/fixture.json
/// ```
pub fn cmd_fixture(config: &FixtureConfig) -> Result<FixtureSummary, CommandError> {
    if config.points == 0 || config.frames < 2 {
        return Err(CommandError::Usage(
            "fixture needs at least 1 point and 2 frames".into(),
        ));
    }
    let fixture = make_synthetic_fixture(config.seed, config.points, config.frames, config.space);
    output(write_reconstruction(
        &config.out.join("reconstruction"),
        &fixture.bundle,
    ))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for layer in make_object_layers(config.seed, config.objects, config.space) {
        let color = [rng.random(), rng.random(), rng.random()];
        output(write_object_layer(
            &config.out.join("objects").join(&layer.object_id),
            &layer,
            color,
        ))?;
    }
    let ids: Vec<u64> = fixture.tracks.keys().copied().collect();
    let drifted: BTreeSet<u64> = choose_ids(&ids, config.drift_points, config.seed);
    let mut playback = fixture_playback(&fixture, &drifted, config.drift_px, config.seed);
    playback.frames = playback.frames.iter().map(|f| frame_basename(f)).collect();
    write_text(&config.out.join("oracle_playback.json"), json(&playback))?;
    let summary = FixtureSummary {
        points: config.points,
        frames: config.frames,
        objects: config.objects,
        drifted: drifted.into_iter().collect(),
    };
    write_text(&config.out.join("fixture.json"), json(&summary))?;
    Ok(summary)
}

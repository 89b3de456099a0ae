use std::io::{self, BufReader};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use trackbench::commands::{
    cmd_evaluate, cmd_fixture, cmd_playback, cmd_synthesize, cmd_validate, format_summary,
    CommandError, EvaluateConfig, FixtureConfig, SynthesizeConfig,
};
use trackbench::dataio::TableEncoding;
use trackbench::kepic::{SceneTrackParams, DEFAULT_STRIDE};
use trackbench::metrics::{MetricOptions, ThresholdSet, ThresholdSpace};
use trackbench::model::ImageSpace;
use trackbench::oracle::{serve_mock, MockBackend, PlaybackOracle};

#[derive(Parser)]
#[command(
    name = "trackbench",
    version,
    about = "Egocentric point-tracking evaluation and training-data synthesis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score predictions against annotations.
    Evaluate(EvaluateArgs),
    /// Build training sequences from a reconstruction.
    Synthesize(SynthesizeArgs),
    /// Write a synthetic reconstruction, object layers and playback oracle.
    Fixture(FixtureArgs),
    /// Write predictions that replay the ground truth.
    Playback(PlaybackArgs),
    /// Check annotations and print dataset statistics.
    Validate {
        #[arg(long)]
        annotations: PathBuf,
    },
    /// Serve a built-in oracle over stdin/stdout.
    OracleMock {
        #[arg(long, value_enum, default_value = "identity")]
        backend: MockKind,
        /// Recorded tracks for the playback backend.
        #[arg(long)]
        playback: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MockKind {
    Identity,
    Playback,
}

#[derive(Clone, Copy, ValueEnum)]
enum Encoding {
    Binary,
    Csv,
}

fn thresholds(s: &str) -> Result<ThresholdSet, String> {
    let values = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    ThresholdSet::new(values).map_err(|e| e.to_string())
}

#[derive(Args)]
struct EvaluateArgs {
    /// Annotation file or directory of *.json files.
    #[arg(long)]
    annotations: PathBuf,
    /// JSON-lines prediction file.
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 512)]
    eval_width: u32,
    #[arg(long, default_value_t = 384)]
    eval_height: u32,
    #[arg(long, value_parser = thresholds, default_value = "1,2,4,8,16")]
    thresholds: ThresholdSet,
    /// Used for δ*_avg and ReIDδ.
    #[arg(long, value_parser = thresholds, default_value = "8,16,24")]
    star_thresholds: ThresholdSet,
    /// Sequence-length bucket width in frames.
    #[arg(long, default_value_t = 200)]
    bucket_width: u32,
    /// Also report scene and dynamic tracks separately.
    #[arg(long)]
    split_category: bool,
    /// Compare distances on a 256x256 grid instead of evaluation pixels.
    #[arg(long)]
    normalized_thresholds: bool,
    #[arg(long, default_value_t = 0.5)]
    visibility_cutoff: f64,
    /// Predictions are already in evaluation space.
    #[arg(long)]
    predictions_in_eval_space: bool,
}

#[derive(Args)]
struct SynthesizeArgs {
    /// Directory with cameras.txt, images.txt, points3D.txt.
    #[arg(long)]
    reconstruction: PathBuf,
    /// Directory of object layer directories.
    #[arg(long)]
    objects: Option<PathBuf>,
    /// Source frame images; enables writing composited frames.
    #[arg(long)]
    frames: Option<PathBuf>,
    /// `mock:identity`, `mock:playback:<file>`, or a command to launch.
    #[arg(long)]
    oracle_cmd: String,
    #[arg(long, default_value_t = 300.0)]
    oracle_timeout: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_STRIDE)]
    stride: usize,
    #[arg(long, default_value_t = 4000)]
    max_points: usize,
    #[arg(long, default_value_t = 20)]
    min_track_len: usize,
    #[arg(long, default_value_t = 1.0)]
    max_reproj: f64,
    /// Mean oracle disagreement above which a track is dropped, in pixels.
    #[arg(long, default_value_t = 1.0)]
    filter_l2: f64,
    #[arg(long, default_value_t = 0.5)]
    loop_fraction: f64,
    #[arg(long, default_value_t = 10)]
    objects_per_sequence: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "binary")]
    encoding: Encoding,
    #[arg(long, requires = "height")]
    width: Option<u32>,
    #[arg(long, requires = "width")]
    height: Option<u32>,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    points: usize,
    #[arg(long, default_value_t = 96)]
    frames: usize,
    #[arg(long, default_value_t = 456)]
    width: u32,
    #[arg(long, default_value_t = 256)]
    height: u32,
    #[arg(long, default_value_t = 4)]
    objects: usize,
    /// Tracks to displace in the playback oracle file.
    #[arg(long, default_value_t = 0)]
    drift_points: usize,
    #[arg(long, default_value_t = 2.0)]
    drift_px: f64,
}

#[derive(Args)]
struct PlaybackArgs {
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Include 1.0/0.0 visibility scores.
    #[arg(long)]
    with_visibility: bool,
}

fn space(width: u32, height: u32) -> Result<ImageSpace, CommandError> {
    ImageSpace::new(width, height).map_err(|e| CommandError::Usage(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CommandError> {
    match cli.command {
        Command::Evaluate(a) => {
            let config = EvaluateConfig {
                annotations: a.annotations,
                predictions: a.predictions,
                out: a.out,
                eval_space: space(a.eval_width, a.eval_height)?,
                options: MetricOptions {
                    thresholds: a.thresholds,
                    reid_thresholds: a.star_thresholds.clone(),
                    star_thresholds: a.star_thresholds,
                    visibility_cutoff: a.visibility_cutoff,
                    threshold_space: if a.normalized_thresholds {
                        ThresholdSpace::Normalized256
                    } else {
                        ThresholdSpace::Raw
                    },
                },
                bucket_width: a.bucket_width,
                split_category: a.split_category,
                predictions_in_eval_space: a.predictions_in_eval_space,
            };
            let report = cmd_evaluate(&config)?;
            print!("{}", format_summary(report.all()));
        }
        Command::Synthesize(a) => {
            if !(a.oracle_timeout > 0.0 && a.oracle_timeout.is_finite()) {
                return Err(CommandError::Usage(
                    "--oracle-timeout must be positive".into(),
                ));
            }
            let config = SynthesizeConfig {
                reconstruction: a.reconstruction,
                objects: a.objects,
                frames: a.frames,
                oracle_cmd: a.oracle_cmd,
                oracle_timeout: Duration::from_secs_f64(a.oracle_timeout),
                out: a.out,
                stride: a.stride,
                params: SceneTrackParams {
                    max_points: a.max_points,
                    min_track_len: a.min_track_len,
                    max_reproj: a.max_reproj,
                },
                filter_l2: a.filter_l2,
                loop_fraction: a.loop_fraction,
                objects_per_sequence: a.objects_per_sequence,
                seed: a.seed,
                encoding: match a.encoding {
                    Encoding::Binary => TableEncoding::Binary,
                    Encoding::Csv => TableEncoding::Csv,
                },
                space: match (a.width, a.height) {
                    (Some(w), Some(h)) => Some(space(w, h)?),
                    _ => None,
                },
            };
            let summary = cmd_synthesize(&config)?;
            println!("{}", serde_json::to_string_pretty(&summary).unwrap());
        }
        Command::Fixture(a) => {
            let summary = cmd_fixture(&FixtureConfig {
                out: a.out,
                seed: a.seed,
                points: a.points,
                frames: a.frames,
                space: space(a.width, a.height)?,
                objects: a.objects,
                drift_points: a.drift_points,
                drift_px: a.drift_px,
            })?;
            println!("{}", serde_json::to_string_pretty(&summary).unwrap());
        }
        Command::Playback(a) => {
            let n = cmd_playback(&a.annotations, &a.out, a.with_visibility)?;
            println!("wrote {n} tracks to {}", a.out.display());
        }
        Command::Validate { annotations } => {
            let stats = cmd_validate(&annotations)?;
            println!("{}", serde_json::to_string_pretty(&stats).unwrap());
        }
        Command::OracleMock { backend, playback } => {
            let backend = match (backend, playback) {
                (MockKind::Identity, _) => MockBackend::Identity,
                (MockKind::Playback, Some(p)) => {
                    MockBackend::Playback(PlaybackOracle::from_file(&p)?)
                }
                (MockKind::Playback, None) => {
                    return Err(CommandError::Usage(
                        "--playback is required for the playback backend".into(),
                    ))
                }
            };
            let stdin = io::stdin();
            serve_mock(&backend, BufReader::new(stdin.lock()), io::stdout().lock())
                .map_err(|e| CommandError::Oracle(e.into()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

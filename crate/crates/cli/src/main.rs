use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use skillgauge_core::eval_detect::{default_iou_thresholds, DetectionEvalConfig};
use skillgauge_core::eval_segment::SegmentEvalOptions;
use skillgauge_core::geometry::DEFAULT_WINDOW;
use skillgauge_core::ingest::{self, ObjectClass, TaskProfile};
use skillgauge_core::motion::GapPolicy;
use skillgauge_core::pipeline::{self, MotionOptions, PipelineError};
use skillgauge_core::report::MetricReport;
use skillgauge_core::stats::{MethodChoice, DEFAULT_ALPHA};
use skillgauge_core::viz::GrayscaleMapping;

#[derive(Parser, Debug)]
#[command(name = "skillgauge", version, about = "Hand path analytics and model-output evaluation for depth video")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Camera intrinsics JSON ({fx, fy, cx, cy, depth_scale}).
    #[arg(long, global = true)]
    intrinsics: Option<PathBuf>,
    /// How to treat frames without a hand position.
    #[arg(long, global = true, default_value = "bridge")]
    gap_policy: GapPolicy,
    /// Odd side length of the depth median window around each box center.
    #[arg(long, global = true, default_value_t = DEFAULT_WINDOW)]
    window: usize,
    /// Worker threads for per-participant processing.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Report path.
    #[arg(long, global = true, default_value = "skillgauge_report.json")]
    out: PathBuf,
    /// Also write a table-shaped CSV next to the report.
    #[arg(long, global = true)]
    csv: bool,
    /// Significance level for rank-sum tests.
    #[arg(long, global = true, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Rank-sum p-value method: auto, exact or normal.
    #[arg(long, global = true, default_value = "auto")]
    method: MethodChoice,
    /// Optional odd moving-average window applied to trajectories.
    #[arg(long, global = true)]
    smooth: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Total 3D hand path length per participant, experts vs residents.
    Path3d { manifest: PathBuf },
    /// Hand distance per gesture label, experts vs residents.
    GestureDist { manifest: PathBuf },
    /// Path lengths projected on the XY, YZ and XZ planes.
    Project2d { manifest: PathBuf },
    /// Per-class AP and mAP over IoU thresholds 0.50:0.95.
    EvalDetect {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Comma-separated class names, e.g. "Left Hand,Right Hand".
        #[arg(long)]
        classes: Option<String>,
        /// Comma-separated IoU thresholds (default 0.50,0.55,...,0.95).
        #[arg(long)]
        iou_thresholds: Option<String>,
        /// Also report precision/recall at each confidence cutoff 0.50..0.95.
        #[arg(long)]
        confidence_sweep: bool,
    },
    /// Frame accuracy, edit score and F1@{10,25,50} for label files.
    EvalSegment {
        /// Predicted label file; repeat together with --gt for each video.
        #[arg(long, required = true)]
        pred: Vec<PathBuf>,
        #[arg(long, required = true)]
        gt: Vec<PathBuf>,
        #[arg(long, default_value = "suture_pad")]
        profile: TaskProfile,
        /// Drop "no gesture" (G6) segments from edit and F1.
        #[arg(long)]
        exclude_background: bool,
    },
    /// Rank-sum test over two comma-separated value lists.
    Compare {
        #[arg(long)]
        expert: String,
        #[arg(long)]
        resident: String,
    },
    /// Render depth frames as 8-bit grayscale PGMs (near white, far black).
    Depth2gray {
        dir: PathBuf,
        /// Sequence metadata; defaults to <dir>/meta.json.
        #[arg(long)]
        meta: Option<PathBuf>,
        /// Output directory; defaults to <dir>_gray.
        #[arg(long)]
        frames_out: Option<PathBuf>,
        /// Depth in meters rendered white.
        #[arg(long, requires = "far")]
        near: Option<f64>,
        /// Depth in meters rendered black.
        #[arg(long, requires = "near")]
        far: Option<f64>,
    },
    /// Check that every input named by a manifest loads cleanly.
    Validate { manifest: PathBuf },
}

fn parse_list<T, F>(text: &str, what: &str, f: F) -> Result<Vec<T>, PipelineError>
where
    F: Fn(&str) -> Result<T, String>,
{
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| f(s).map_err(|e| PipelineError::Validation(format!("{what}: {e}"))))
        .collect()
}

fn motion_options(g: &GlobalArgs) -> Result<MotionOptions, PipelineError> {
    let path = g
        .intrinsics
        .as_ref()
        .ok_or_else(|| PipelineError::Validation("--intrinsics is required for this command".into()))?;
    Ok(MotionOptions {
        gap_policy: g.gap_policy,
        window: g.window,
        smoothing_window: g.smooth,
        jobs: g.jobs,
        alpha: g.alpha,
        method: g.method,
        ..MotionOptions::new(ingest::load_intrinsics(path)?)
    })
}

fn run(cli: &Cli) -> Result<MetricReport, PipelineError> {
    let g = &cli.global;
    match &cli.command {
        Command::Path3d { manifest } => pipeline::run_path3d(&ingest::load_manifest(manifest)?, &motion_options(g)?),
        Command::GestureDist { manifest } => {
            pipeline::run_gesture_dist(&ingest::load_manifest(manifest)?, &motion_options(g)?)
        }
        Command::Project2d { manifest } => {
            pipeline::run_project2d(&ingest::load_manifest(manifest)?, &motion_options(g)?)
        }
        Command::EvalDetect {
            pred,
            gt,
            classes,
            iou_thresholds,
            confidence_sweep,
        } => {
            let classes = match classes {
                Some(list) => parse_list(list, "--classes", |s| s.parse::<ObjectClass>())?,
                None => ObjectClass::ALL.to_vec(),
            };
            let thresholds = match iou_thresholds {
                Some(list) => parse_list(list, "--iou-thresholds", |s| {
                    s.parse::<f64>().map_err(|e| e.to_string())
                })?,
                None => default_iou_thresholds(),
            };
            let config = DetectionEvalConfig::new(thresholds, classes)?;
            let sweep = confidence_sweep.then(default_iou_thresholds);
            pipeline::run_eval_detect(pred, gt, &config, sweep.as_deref())
        }
        Command::EvalSegment {
            pred,
            gt,
            profile,
            exclude_background,
        } => {
            if pred.len() != gt.len() {
                return Err(PipelineError::Validation(format!(
                    "{} --pred files but {} --gt files",
                    pred.len(),
                    gt.len()
                )));
            }
            let pairs: Vec<(PathBuf, PathBuf)> = pred.iter().cloned().zip(gt.iter().cloned()).collect();
            pipeline::run_eval_segment(
                &pairs,
                *profile,
                SegmentEvalOptions {
                    exclude_background: *exclude_background,
                },
            )
        }
        Command::Compare { expert, resident } => {
            let parse = |s: &str| s.parse::<f64>().map_err(|e| e.to_string());
            pipeline::run_compare(
                parse_list(expert, "--expert", parse)?,
                parse_list(resident, "--resident", parse)?,
                g.alpha,
                g.method,
            )
        }
        Command::Depth2gray {
            dir,
            meta,
            frames_out,
            near,
            far,
        } => {
            let meta = meta.clone().unwrap_or_else(|| dir.join("meta.json"));
            let out_dir = frames_out.clone().unwrap_or_else(|| {
                let mut name = dir.file_name().unwrap_or_default().to_os_string();
                name.push("_gray");
                dir.with_file_name(name)
            });
            let mapping = match (near, far) {
                (Some(n), Some(f)) => Some(GrayscaleMapping::new(*n, *f)?),
                _ => None,
            };
            pipeline::run_depth2gray(dir, &meta, &out_dir, mapping)
        }
        Command::Validate { manifest } => {
            let intr = g.intrinsics.as_ref().map(|p| ingest::load_intrinsics(p)).transpose()?;
            pipeline::run_validate(&ingest::load_manifest(manifest)?, intr.as_ref(), g.jobs)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SKILLGAUGE_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let outcome = run(&cli).and_then(|report| pipeline::write_report(&report, &cli.global.out, cli.global.csv));
    match outcome {
        Ok(()) => {
            println!("{}", cli.global.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("skillgauge: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! Command-line entry points. [`run`] is the whole CLI; the binary only wires
//! it to the process streams.
//!
//! Exit codes: 0 success, 1 domain error (bad file, gate rejection, backend
//! failure), 2 usage error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dataset::{
    class_weights, compute_stats, load_annotations, load_detections, save_annotations, split, AnnotationRecord,
    ClassCounts, DatasetStats, DetectionSet, SplitSpec,
};
use crate::detection::{AnchorConfig, PostprocessParams};
use crate::evaluation::{
    coco_summary, detection_confusion_matrix, roc_csv, roc_sweep, CocoOptions, DetectionConfusionMatrix, EvalReport,
};
use crate::gating::{GateConfig, GateVerdict};
use crate::geometry::PixelSize;
use crate::risk::{render_report, QuestionnaireResponse};
use crate::service::{
    self, BackendSelection, DetectionSource, FrameRequest, ScreeningService, ServiceConfig, SessionStore,
};

#[derive(Debug, Parser)]
#[command(name = "ecc-screen", version, about = "Early childhood caries screening toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the HTTP screening service.
    Serve(ServeArgs),
    /// COCO metrics (mAP, AP50, AP75, AR) for a detection file.
    Eval(EvalArgs),
    /// Cavity sensitivity/specificity over a descending score-threshold sweep, as CSV.
    Roc(RocArgs),
    /// Box and image counts per class and severity group.
    Stats(AnnotationsArg),
    /// Inverse-frequency class weights from annotations or a census file.
    Weights(WeightsArgs),
    /// Seeded image-level train/test split.
    Split(SplitArgs),
    /// Offline gate -> detect -> assess run for one frame.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Mock,
    DetectionsFile,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    #[arg(long, value_enum, default_value = "mock")]
    backend: BackendKind,
    /// Mock backend fixture (with --backend mock).
    #[arg(long, required_if_eq("backend", "mock"))]
    backend_fixture: Option<PathBuf>,
    /// Precomputed detections (with --backend detections-file).
    #[arg(long, required_if_eq("backend", "detections-file"))]
    detections: Option<PathBuf>,
    /// Session spool directory; sessions are kept in memory when omitted.
    #[arg(long)]
    spool: Option<PathBuf>,
    #[arg(long)]
    form: Option<PathBuf>,
    #[arg(long)]
    clinics: Option<PathBuf>,
    #[arg(long)]
    quiz: Option<PathBuf>,
    #[arg(long, default_value_t = 224)]
    min_crop: u32,
    #[arg(long, default_value_t = 5.0)]
    max_tilt: f64,
}

#[derive(Debug, Args)]
struct AnnotationsArg {
    #[arg(long)]
    annotations: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    detections: PathBuf,
    /// Leave the `other` group out of the averages.
    #[arg(long)]
    exclude_other: bool,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Also write the 5x5 detection confusion matrix (JSON) here.
    #[arg(long)]
    confusion_out: Option<PathBuf>,
    /// IoU threshold for the confusion matrix.
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
}

#[derive(Debug, Args)]
struct RocArgs {
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    detections: PathBuf,
    /// Strictly decreasing score thresholds, comma separated.
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    thresholds: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false, id = "source")]
struct WeightsArgs {
    #[arg(long, group = "source")]
    annotations: Option<PathBuf>,
    /// Per-class box counts: {"normal": .., "code1": .., .., "other": ..}.
    #[arg(long, group = "source")]
    census: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    /// Write the train/val annotations here.
    #[arg(long, requires = "test_out")]
    train_out: Option<PathBuf>,
    #[arg(long, requires = "train_out")]
    test_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Frame file: image id, size and landmarks.
    #[arg(long)]
    landmarks: PathBuf,
    /// Mock backend fixture.
    #[arg(long)]
    backend_fixture: PathBuf,
    /// Questionnaire answers: {"answers": {question_id: option_id}}.
    #[arg(long)]
    answers: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(message) => {
            let _ = writeln!(err, "error: {message}");
            1
        }
    }
}

type CliResult = Result<(), String>;

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn annotations(path: &Path) -> Result<Vec<AnnotationRecord>, String> {
    load_annotations(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))
}

fn detections(path: &Path) -> Result<DetectionSet, String> {
    load_detections(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output types serialize") + "\n"
}

fn emit(out: &mut dyn Write, text: &str) -> CliResult {
    out.write_all(text.as_bytes()).map_err(|e| format!("cannot write output: {e}"))
}

fn execute(command: Command, out: &mut dyn Write) -> CliResult {
    match command {
        Command::Serve(args) => serve(args),
        Command::Eval(args) => eval(args, out),
        Command::Roc(args) => {
            let gt = annotations(&args.annotations)?;
            let dets = detections(&args.detections)?;
            let points = roc_sweep(&gt, &dets, &args.thresholds, args.iou).map_err(|e| e.to_string())?;
            emit(out, &roc_csv(&points).map_err(|e| e.to_string())?)
        }
        Command::Stats(args) => emit(out, &json(&compute_stats(&annotations(&args.annotations)?))),
        Command::Weights(args) => {
            let stats = match (&args.annotations, &args.census) {
                (Some(a), _) => compute_stats(&annotations(a)?),
                (None, Some(c)) => {
                    let counts: ClassCounts =
                        serde_json::from_str(&read(c)?).map_err(|e| format!("{}: {e}", c.display()))?;
                    DatasetStats::from_class_counts(counts)
                }
                (None, None) => unreachable!("clap enforces one source"),
            };
            let weights = class_weights(&stats).map_err(|e| e.to_string())?;
            emit(out, &json(&weights))
        }
        Command::Split(args) => {
            let recs = annotations(&args.annotations)?;
            let spec = SplitSpec { train_fraction: args.train_fraction, seed: args.seed };
            let (train, test) = split(&recs, &spec).map_err(|e| e.to_string())?;
            if let (Some(tp), Some(sp)) = (&args.train_out, &args.test_out) {
                for (path, part) in [(tp, &train), (sp, &test)] {
                    std::fs::write(path, save_annotations(part)).map_err(|e| format!("{}: {e}", path.display()))?;
                }
            }
            let ids = |v: &[AnnotationRecord]| v.iter().map(|r| r.image_id.clone()).collect::<Vec<_>>();
            emit(out, &json(&serde_json::json!({ "seed": args.seed, "train": ids(&train), "test": ids(&test) })))
        }
        Command::Simulate(args) => simulate(args, out),
    }
}

fn eval(args: EvalArgs, out: &mut dyn Write) -> CliResult {
    let gt = annotations(&args.annotations)?;
    let dets = detections(&args.detections)?;
    let report = coco_summary(&gt, &dets, &[], &CocoOptions { exclude_other: args.exclude_other });
    let matrix = detection_confusion_matrix(&gt, &dets, args.iou);
    if let Some(path) = &args.confusion_out {
        std::fs::write(path, json(&matrix)).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    match args.format {
        Format::Json => emit(out, &json(&report)),
        Format::Text => emit(out, &eval_table(&report, &matrix)),
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

/// Fixed-width summary: the four headline numbers, then per group, then the
/// confusion matrix.
fn eval_table(r: &EvalReport, m: &DetectionConfusionMatrix) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "images: {}{}", r.image_count, if r.exclude_other { " (other excluded)" } else { "" });
    let _ = writeln!(s, "{:<10}{:>8}{:>8}{:>8}{:>8}{:>8}", "", "mAP", "AP50", "AP75", "AR", "gt");
    let _ = writeln!(s, "{:<10}{:>8.3}{:>8.3}{:>8.3}{:>8.3}", "overall", r.map, r.ap50, r.ap75, r.ar);
    for g in &r.per_group {
        let _ = writeln!(
            s,
            "{:<10}{:>8}{:>8}{:>8}{:>8}{:>8}",
            g.group.name(),
            cell(g.ap),
            cell(g.ap50),
            cell(g.ap75),
            cell(g.ar),
            g.gt_count
        );
    }
    let _ = writeln!(s, "\nconfusion (rows: ground truth, columns: prediction)");
    let _ = write!(s, "{:<10}", "");
    for c in DetectionConfusionMatrix::COLUMN_LABELS {
        let _ = write!(s, "{c:>8}");
    }
    s.push('\n');
    for (i, row) in DetectionConfusionMatrix::ROW_LABELS.iter().enumerate() {
        let _ = write!(s, "{row:<10}");
        for j in 0..m.dimension() {
            let _ = write!(s, "{:>8}", m.get(i, j));
        }
        s.push('\n');
    }
    s
}

fn serve(args: ServeArgs) -> CliResult {
    let backend = match args.backend {
        BackendKind::Mock => {
            BackendSelection::Mock { fixture: args.backend_fixture.expect("clap requires the fixture") }
        }
        BackendKind::DetectionsFile => {
            BackendSelection::DetectionsFile { path: args.detections.expect("clap requires the detections file") }
        }
    };
    let config = ServiceConfig {
        listen: args.listen,
        backend,
        gate: GateConfig {
            min_crop_pixels: PixelSize::new(args.min_crop, args.min_crop).map_err(|e| e.to_string())?,
            max_tilt_degrees: args.max_tilt,
            ..GateConfig::default()
        },
        anchors: AnchorConfig::default(),
        postprocess: PostprocessParams::default(),
        form_path: args.form,
        clinics_path: args.clinics,
        quiz_path: args.quiz,
        spool_dir: args.spool,
    };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    runtime.block_on(service::serve(config)).map_err(|e| e.to_string())
}

fn simulate(args: SimulateArgs, out: &mut dyn Write) -> CliResult {
    let frame: FrameRequest =
        serde_json::from_str(&read(&args.landmarks)?).map_err(|e| format!("{}: {e}", args.landmarks.display()))?;
    let answers: Option<QuestionnaireResponse> = args
        .answers
        .as_ref()
        .map(|p| serde_json::from_str(&read(p)?).map_err(|e| format!("{}: {e}", p.display())))
        .transpose()?;

    let source = DetectionSource::mock(&args.backend_fixture, AnchorConfig::default(), PostprocessParams::default())
        .map_err(|e| e.to_string())?;
    let service =
        ScreeningService::new(GateConfig::default(), source, SessionStore::in_memory()).map_err(|e| e.to_string())?;
    let id = service.create_session().map_err(|e| e.to_string())?.session_id;

    let frame = FrameRequest { auto_detect: true, ..frame };
    let outcome = service.submit_frame(&id, &frame).map_err(|e| e.to_string())?;
    if outcome.decision.verdict != GateVerdict::Pass {
        return Err(format!(
            "frame rejected ({}): {}",
            serde_json::to_value(outcome.decision.verdict).expect("verdict serializes").as_str().unwrap_or_default(),
            outcome.decision.message
        ));
    }
    if let Some(answers) = &answers {
        service.submit_questionnaire(&id, answers).map_err(|e| e.to_string())?;
    }
    let report = service.get_report(&id).map_err(|e| e.to_string())?;
    match args.format {
        Format::Json => emit(out, &json(&report)),
        Format::Text => emit(out, &render_report(&report)),
    }
}

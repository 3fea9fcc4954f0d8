use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use snowgt_client::{Client, ClientError};
use snowgt_core::api::{self, SelectionRequest};
use snowgt_core::dataset::{timestamp_now, Dataset};
use snowgt_core::lowrank::{desnow_video, BandpassSpec, DesnowParams, QRule};
use snowgt_core::metrics::{evaluate_dirs, LossWeights};
use snowgt_core::video::{detect_channels, load_frames, save_frames};
use snowgt_core::SliceMode;

mod synth;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] snowgt_core::Error),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Server(#[from] snowgt_server::ServerError),
    #[error("{0}")]
    Usage(String),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot start async runtime: {0}")]
    Runtime(#[source] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(snowgt_core::Error::NumericFailure { .. }) => 2,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "snowgt",
    version,
    about = "Snow-free ground truth from static-camera video"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Desnow one frame directory.
    Desnow(DesnowArgs),
    /// Render synthetic snow or rain with exact masks.
    #[command(subcommand)]
    Synth(synth::SynthCommand),
    /// Compare two directories of same-named PNGs.
    Eval(EvalArgs),
    /// Register frame directories in a dataset.
    Ingest(IngestArgs),
    /// Generate desnowed candidate frames for dataset videos.
    Candidates(CandidatesArgs),
    /// List dataset videos and their curation status.
    List(TargetArgs),
    /// Choose the ground-truth frame of a video.
    Select(SelectArgs),
    /// Mark a video as unusable.
    Reject(RejectArgs),
    /// Write snowy/gt pairs and a metrics report.
    Export(ExportArgs),
    /// Run the curation service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct DesnowArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value = "horizontal")]
    mode: SliceMode,
    /// energy:<fraction> or fixed:<rank>
    #[arg(long, default_value = "energy:0.999")]
    q: QRule,
    /// <low>:<high> as fractions of the temporal Nyquist frequency
    #[arg(long, default_value = "0.0:0.1")]
    band: BandpassSpec,
    #[arg(long)]
    drop_noise: bool,
    /// 1 or 3; detected from the first frame when omitted
    #[arg(long, value_parser = parse_channels)]
    channels: Option<usize>,
}

#[derive(Args)]
struct WeightArgs {
    #[arg(long, default_value_t = LossWeights::default().lambda)]
    lambda: f64,
    #[arg(long, default_value_t = LossWeights::default().lambda_f)]
    lambda_f: f64,
    #[arg(long, default_value_t = LossWeights::default().lambda_gd)]
    lambda_gd: f64,
    #[arg(long, default_value_t = LossWeights::default().lambda_ssim)]
    lambda_ssim: f64,
    #[arg(long, default_value_t = LossWeights::default().alpha)]
    alpha: f64,
    #[arg(long, default_value_t = LossWeights::default().tau)]
    tau: f64,
}

impl WeightArgs {
    fn weights(&self) -> Result<LossWeights> {
        let w = LossWeights {
            lambda: self.lambda,
            lambda_f: self.lambda_f,
            lambda_gd: self.lambda_gd,
            lambda_ssim: self.lambda_ssim,
            alpha: self.alpha,
            tau: self.tau,
            ..LossWeights::default()
        };
        w.validate()?;
        Ok(w)
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Degraded inputs; enables the mask F-measure terms.
    #[arg(long)]
    degraded: Option<PathBuf>,
    /// Report path; printed to stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 3, value_parser = parse_channels)]
    channels: usize,
    #[command(flatten)]
    weights: WeightArgs,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Split every video into four quadrant videos.
    #[arg(long)]
    split_quadrants: bool,
    /// Frame directories.
    sources: Vec<PathBuf>,
}

#[derive(Args)]
struct CandidatesArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Videos to process; all when omitted.
    #[arg(long = "video")]
    videos: Vec<String>,
    /// Repeatable; every combination of mode, q and band is one parameter set.
    #[arg(long = "mode", default_values = ["horizontal"])]
    modes: Vec<SliceMode>,
    #[arg(long = "q", default_values = ["energy:0.999"])]
    q_rules: Vec<QRule>,
    #[arg(long = "band", default_values = ["0.0:0.1"])]
    bands: Vec<BandpassSpec>,
    #[arg(long)]
    drop_noise: bool,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Target {
    /// Work on a local dataset directory.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Go through a running service, e.g. http://127.0.0.1:8641.
    #[arg(long)]
    server: Option<String>,
}

#[derive(Args)]
struct TargetArgs {
    #[command(flatten)]
    target: Target,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    target: Target,
    video: String,
    frame: usize,
    #[arg(long, default_value = "")]
    note: String,
    /// Candidate parameter tag; the video's first tag when omitted.
    #[arg(long)]
    params: Option<String>,
}

#[derive(Args)]
struct RejectArgs {
    #[command(flatten)]
    target: Target,
    video: String,
    #[arg(long, default_value = "")]
    note: String,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    target: Target,
    /// Output directory for a local export; `<dataset>/export` by default.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    weights: WeightArgs,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = snowgt_server::DEFAULT_BIND)]
    bind: String,
    /// Static files of the curation UI.
    #[arg(long)]
    ui: Option<PathBuf>,
    #[arg(long)]
    export_dir: Option<PathBuf>,
}

fn parse_channels(s: &str) -> std::result::Result<usize, String> {
    match s {
        "1" => Ok(1),
        "3" => Ok(3),
        _ => Err(format!("channels must be 1 or 3, got {s}")),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| CliError::Write {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Usage(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn block_on<F: std::future::Future>(f: F) -> Result<F::Output> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(CliError::Runtime)?;
    Ok(rt.block_on(f))
}

fn desnow(args: DesnowArgs) -> Result<()> {
    let channels = match args.channels {
        Some(c) => c,
        None => detect_channels(&args.input)?,
    };
    let video = load_frames(&args.input, channels)?;
    let params = DesnowParams {
        mode: args.mode,
        q_rule: args.q,
        band: args.band,
        drop_noise: args.drop_noise,
    };
    let out = desnow_video(&video, &params)?;
    let written = save_frames(&out, &args.output)?;
    eprintln!(
        "desnowed {} frames -> {}",
        written.len(),
        args.output.display()
    );
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let weights = args.weights.weights()?;
    let report = evaluate_dirs(
        &args.pred,
        &args.gt,
        args.degraded.as_deref(),
        args.channels,
        &weights,
    )?;
    let json = report.to_json()?;
    match &args.report {
        Some(path) => {
            write_file(path, &json)?;
            let m = &report.mean;
            eprintln!(
                "{} images: PSNR {} dB, SSIM {:.4} -> {}",
                report.per_image.len(),
                m.psnr,
                m.ssim,
                path.display()
            );
        }
        None => print!("{json}"),
    }
    Ok(())
}

fn ingest(args: IngestArgs) -> Result<()> {
    let mut ds = Dataset::open_or_create(&args.dataset)?;
    let report = ds.ingest(&args.sources, args.split_quadrants)?;
    print_json(&report)?;
    if !report.conflicts.is_empty() {
        return Err(snowgt_core::Error::Conflict(format!(
            "already ingested: {}",
            report.conflicts.join(", ")
        ))
        .into());
    }
    Ok(())
}

fn candidates(args: CandidatesArgs) -> Result<()> {
    let mut ds = Dataset::open(&args.dataset)?;
    let mut sets = Vec::new();
    for &mode in &args.modes {
        for &q_rule in &args.q_rules {
            for &band in &args.bands {
                sets.push(DesnowParams {
                    mode,
                    q_rule,
                    band,
                    drop_noise: args.drop_noise,
                });
            }
        }
    }
    let videos = if args.videos.is_empty() {
        ds.manifest().videos.iter().map(|v| v.id.clone()).collect()
    } else {
        args.videos
    };
    let mut failed = false;
    for video in videos {
        let report = ds.generate_candidates(&video, &sets)?;
        failed |= !report.failures.is_empty();
        eprintln!("{video}: {} candidates", report.candidates);
        for f in &report.failures {
            eprintln!("{video}: {} failed: {}", f.item, f.error);
        }
    }
    if failed {
        return Err(CliError::Usage("some parameter sets failed".into()));
    }
    Ok(())
}

fn list(args: TargetArgs) -> Result<()> {
    let videos = match (&args.target.dataset, &args.target.server) {
        (Some(dir), _) => api::summaries(Dataset::open(dir)?.manifest()),
        (None, Some(url)) => {
            let client = Client::new(url)?;
            block_on(async move { client.videos().await })??
        }
        (None, None) => unreachable!("clap requires a target"),
    };
    print_json(&videos)
}

fn select(args: SelectArgs) -> Result<()> {
    let revision = match (&args.target.dataset, &args.target.server) {
        (Some(dir), _) => {
            let mut ds = Dataset::open(dir)?;
            ds.record_selection(
                &args.video,
                args.frame,
                args.params.as_deref(),
                &args.note,
                &timestamp_now(),
            )?
        }
        (None, Some(url)) => {
            let client = Client::new(url)?;
            let req = SelectionRequest {
                frame: args.frame,
                note: args.note,
                params: args.params,
            };
            let video = args.video.clone();
            block_on(async move { client.select(&video, &req).await })??.manifest_revision
        }
        (None, None) => unreachable!("clap requires a target"),
    };
    eprintln!(
        "selected frame {} of {} (revision {revision})",
        args.frame, args.video
    );
    Ok(())
}

fn reject(args: RejectArgs) -> Result<()> {
    let revision = match (&args.target.dataset, &args.target.server) {
        (Some(dir), _) => Dataset::open(dir)?.reject(&args.video, &args.note, &timestamp_now())?,
        (None, Some(url)) => {
            let client = Client::new(url)?;
            let (video, note) = (args.video.clone(), args.note.clone());
            block_on(async move { client.reject(&video, &note).await })??.manifest_revision
        }
        (None, None) => unreachable!("clap requires a target"),
    };
    eprintln!("rejected {} (revision {revision})", args.video);
    Ok(())
}

fn export(args: ExportArgs) -> Result<()> {
    let ack = match (&args.target.dataset, &args.target.server) {
        (Some(dir), _) => {
            let mut ds = Dataset::open(dir)?;
            let out = args.out.clone().unwrap_or_else(|| ds.default_export_dir());
            let report = ds.export_pairs(&out, &args.weights.weights()?)?;
            for f in &report.failures {
                eprintln!("{}: skipped: {}", f.item, f.error);
            }
            api::ExportAck {
                pairs: report.pairs,
                report_path: report.report_path,
            }
        }
        (None, Some(url)) => {
            if args.out.is_some() {
                return Err(CliError::Usage("--out applies to local exports; the service writes to its own export directory".into()));
            }
            let client = Client::new(url)?;
            block_on(async move { client.export().await })??
        }
        (None, None) => unreachable!("clap requires a target"),
    };
    print_json(&ack)
}

fn serve(args: ServeArgs) -> Result<()> {
    let ds = Dataset::open_or_create(&args.dataset)?;
    let mut state = snowgt_server::AppState::new(ds);
    if let Some(dir) = args.export_dir {
        state = state.with_export_dir(dir);
    }
    let app = snowgt_server::router(state, args.ui.as_deref());
    block_on(async move {
        let listener = snowgt_server::bind(&args.bind).await?;
        if let Ok(addr) = listener.local_addr() {
            eprintln!("serving {} on http://{addr}", args.dataset.display());
        }
        snowgt_server::serve(listener, app, async {
            tokio::signal::ctrl_c().await.ok();
        })
        .await
    })??;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Desnow(a) => desnow(a),
        Command::Synth(c) => synth::run(c),
        Command::Eval(a) => eval(a),
        Command::Ingest(a) => ingest(a),
        Command::Candidates(a) => candidates(a),
        Command::List(a) => list(a),
        Command::Select(a) => select(a),
        Command::Reject(a) => reject(a),
        Command::Export(a) => export(a),
        Command::Serve(a) => serve(a),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    // usage errors exit 1: code 2 is reserved for numeric failure
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

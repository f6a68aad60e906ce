//! Command-line front end: synthetic datasets, the extraction pipeline, ROI
//! tooling, and the local annotator service.

pub mod server;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hudtrace::analysis::{analyze_intervals, AnalysisOptions, DEFAULT_HISTOGRAM_BIN_KMH};
use hudtrace::config::RunConfig;
use hudtrace::export::{method_chart, read_track_csv, write_atomic, write_json, ExportBundle, ExportFormats, KmzOptions};
use hudtrace::geodesy::MethodConstants;
use hudtrace::imaging::PreprocessParams;
use hudtrace::ingest::FrameSource;
use hudtrace::pipeline::{method_comparison, run_pipeline, EXIT_FATAL};
use hudtrace::roi::{render_preview, validate_config, RoiConfig};
use hudtrace::synth::{simulate_flight, write_dataset, FlightSimParams, HudStyle};
use hudtrace::trajectory::FilterParams;
use tokio::sync::Mutex;
use tracing::info;

#[derive(Debug, Parser)]
#[command(name = "hudtrace", version, about = "Extract flight telemetry from FPV HUD footage")]
pub struct Cli {
    /// Log filter (e.g. `debug`, `hudtrace=trace`); overrides RUST_LOG.
    #[arg(long, global = true)]
    pub log: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic flight into frames, truth.csv, roi.toml and run.toml.
    Synth(SynthArgs),
    /// Run extraction, filtering, analysis and export for a run config.
    Pipeline(PipelineArgs),
    /// ROI configuration tools.
    #[command(subcommand)]
    Roi(RoiCommand),
    /// Serve the annotator API (and optionally the built SPA) on localhost.
    ServeAnnotator(ServeArgs),
    /// Compare the distance methods across sampling intervals for a track CSV.
    Compare(CompareArgs),
    /// Write CSV, GeoJSON, KMZ and charts for an existing track CSV.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = FlightSimParams::default().seed)]
    pub seed: u64,
    /// Flight length in seconds (records at 1 Hz).
    #[arg(long, default_value_t = FlightSimParams::default().duration_s)]
    pub duration: u32,
    #[arg(long, default_value_t = 1)]
    pub fps: u32,
    /// Gaussian pixel noise sigma.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 1.0)]
    pub contrast: f64,
    #[arg(long)]
    pub hide_decimal_point: bool,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Override `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Override the sampling intervals, e.g. `1,5,10`.
    #[arg(long, value_delimiter = ',')]
    pub intervals: Option<Vec<u32>>,
    #[arg(long)]
    pub run_id: Option<String>,
    /// Skip the spatial filter.
    #[arg(long)]
    pub no_filter: bool,
}

#[derive(Debug, Subcommand)]
pub enum RoiCommand {
    /// Validate a ROI config and draw its rectangles over one frame.
    Preview(PreviewArgs),
}

/// ROI and frame locations, either from a run config or given directly.
#[derive(Debug, Args)]
pub struct Inputs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub roi: Option<PathBuf>,
    #[arg(long)]
    pub frames: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub fps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedInputs {
    pub roi: PathBuf,
    pub frames: PathBuf,
    pub fps: f64,
    pub preprocess: PreprocessParams,
}

impl Inputs {
    pub fn resolve(&self) -> Result<ResolvedInputs> {
        let cfg = self
            .config
            .as_deref()
            .map(|p| RunConfig::load(p).with_context(|| format!("loading {}", p.display())))
            .transpose()?;
        let pick = |flag: &Option<PathBuf>, from_cfg: Option<&PathBuf>, name: &str| {
            flag.clone()
                .or_else(|| from_cfg.cloned())
                .with_context(|| format!("--{name} or --config is required"))
        };
        Ok(ResolvedInputs {
            roi: pick(&self.roi, cfg.as_ref().map(|c| &c.roi_config), "roi")?,
            frames: pick(&self.frames, cfg.as_ref().map(|c| &c.frames.dir), "frames")?,
            fps: cfg.as_ref().map_or(self.fps, |c| c.frames.fps),
            preprocess: cfg.map(|c| c.preprocess).unwrap_or_default(),
        })
    }
}

#[derive(Debug, Args)]
pub struct PreviewArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    /// Output PNG; defaults to `roi_preview.png` next to the ROI config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long, default_value_t = 8765)]
    pub port: u16,
    /// Built annotator SPA to serve at `/`.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalysisArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [1u32, 5, 10, 15, 20])]
    pub intervals: Vec<u32>,
    #[arg(long)]
    pub no_filter: bool,
    #[arg(long, default_value_t = DEFAULT_HISTOGRAM_BIN_KMH)]
    pub bin_kmh: f64,
}

impl AnalysisArgs {
    fn options(&self) -> AnalysisOptions {
        AnalysisOptions {
            intervals: self.intervals.clone(),
            filter: (!self.no_filter).then(FilterParams::default),
            constants: MethodConstants::default(),
            histogram_bin_kmh: self.bin_kmh,
        }
    }
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// 1 Hz track CSV (e.g. `track_raw.csv` from a pipeline run).
    #[arg(long)]
    pub track: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub track: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "hudtrace")]
    pub run_id: String,
    #[arg(long)]
    pub no_extrude: bool,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Synth(a) => synth(&a).map(|_| 0),
        Command::Pipeline(a) => pipeline(&a),
        Command::Roi(RoiCommand::Preview(a)) => roi_preview(&a),
        Command::ServeAnnotator(a) => serve(&a).map(|_| 0),
        Command::Compare(a) => compare(&a).map(|_| 0),
        Command::Export(a) => export(&a).map(|_| 0),
    }
}

fn workers_or_default(w: Option<usize>) -> usize {
    w.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Writes the dataset and a `run.toml` that points at it; returns the run.toml path.
pub fn synth(a: &SynthArgs) -> Result<PathBuf> {
    let params = FlightSimParams {
        seed: a.seed,
        duration_s: a.duration,
        ..FlightSimParams::default()
    };
    let track = simulate_flight(&params)?;
    let style = HudStyle {
        noise_sigma: a.noise,
        contrast: a.contrast,
        noise_seed: a.seed,
        hide_decimal_point: a.hide_decimal_point,
        ..HudStyle::default()
    };
    let ds = write_dataset(&track, &style, &a.out, a.fps, workers_or_default(a.workers))?;
    let mut cfg = RunConfig::new("frames", a.fps as f64, "roi.toml", "out");
    cfg.run_id = format!("synth-{}", a.seed);
    let run_toml = a.out.join("run.toml");
    write_atomic(&run_toml, cfg.to_toml_string().as_bytes()).with_context(|| format!("writing {}", run_toml.display()))?;
    info!(frames = ds.frame_count, dir = %a.out.display(), "dataset written");
    println!("{}", run_toml.display());
    Ok(run_toml)
}

pub fn pipeline(a: &PipelineArgs) -> Result<i32> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(out) = &a.out {
        cfg.output_dir = out.clone();
    }
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    if let Some(i) = &a.intervals {
        cfg.intervals = i.clone();
    }
    if let Some(id) = &a.run_id {
        cfg.run_id = id.clone();
    }
    if a.no_filter {
        cfg.spatial_filter = false;
    }
    let outcome = run_pipeline(&cfg)?;
    let r = &outcome.report;
    println!(
        "{}: {} of {} planned frames became records; {} frame failures, {} dropped, {} field issues",
        serde_json::to_value(r.status)?.as_str().unwrap_or_default(),
        outcome.track.len(),
        r.frames.frames_planned,
        r.frame_failures.len(),
        r.drops.dropped.len(),
        r.drops.field_issues,
    );
    for i in &r.sampling.intervals {
        println!("  {:>3} s: {:>4} raw, {:>4} clean", i.interval_s, i.raw_count, i.clean_count);
    }
    println!("outputs in {}", cfg.output_dir.display());
    Ok(outcome.status.exit_code())
}

pub fn roi_preview(a: &PreviewArgs) -> Result<i32> {
    let inputs = a.inputs.resolve()?;
    let cfg = RoiConfig::load(&inputs.roi)?;
    let report = validate_config(&cfg);
    println!("{report}");
    if !report.is_valid() {
        return Ok(EXIT_FATAL);
    }
    let frames = FrameSource::from_dir(&inputs.frames, inputs.fps)?;
    let frame = frames.load_frame(a.frame)?;
    let img = render_preview(&frame, &cfg)?;
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| inputs.roi.parent().unwrap_or(Path::new(".")).join("roi_preview.png"));
    write_atomic(&out, &img.to_png()).with_context(|| format!("writing {}", out.display()))?;
    println!("preview written to {}", out.display());
    Ok(0)
}

/// Annotator state; an absent ROI file starts as an empty config at the frame size.
pub fn annotator_state(inputs: &ResolvedInputs) -> Result<server::Shared> {
    let frames = FrameSource::from_dir(&inputs.frames, inputs.fps)?;
    let rois = if inputs.roi.exists() {
        RoiConfig::load(&inputs.roi)?
    } else {
        let f = frames.load_frame(0)?;
        RoiConfig::new(f.width(), f.height())
    };
    Ok(Arc::new(server::AnnotatorState {
        frames,
        params: inputs.preprocess.clone(),
        roi_path: inputs.roi.clone(),
        rois: Mutex::new(rois),
    }))
}

pub fn serve(a: &ServeArgs) -> Result<()> {
    let inputs = a.inputs.resolve()?;
    let state = annotator_state(&inputs)?;
    if let Some(d) = &a.static_dir {
        if !d.is_dir() {
            bail!("static directory {} does not exist", d.display());
        }
    }
    let app = server::router(state, a.static_dir.clone());
    let addr = SocketAddr::from(([127, 0, 0, 1], a.port));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        println!("annotator listening on http://{addr}");
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

pub fn compare(a: &CompareArgs) -> Result<()> {
    let track = read_track_csv(&a.track)?;
    let report = analyze_intervals(&track, &a.analysis.options())?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let table = method_comparison(&report);
    write_json(&table, &a.out.join("methods.json"))?;
    let svg = a.out.join("methods.svg");
    write_atomic(&svg, method_chart(&report)?.as_bytes()).with_context(|| format!("writing {}", svg.display()))?;
    for row in &table {
        let Some(m) = &row.methods else {
            println!("{:>3} s: fewer than two clean points", row.interval_s);
            continue;
        };
        let cells: Vec<String> = m
            .methods
            .iter()
            .map(|s| format!("{} {:.1} km/h", s.method, s.mean_speed_kmh))
            .collect();
        println!("{:>3} s: {}", row.interval_s, cells.join(", "));
    }
    Ok(())
}

pub fn export(a: &ExportArgs) -> Result<Vec<PathBuf>> {
    let track = read_track_csv(&a.track)?;
    let report = analyze_intervals(&track, &a.analysis.options())?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let bundle = ExportBundle {
        out_dir: a.out.clone(),
        formats: ExportFormats::default(),
        kmz: KmzOptions {
            run_id: a.run_id.clone(),
            extrude: !a.no_extrude,
        },
    };
    bundle.validate()?;
    let written = bundle.write(&track, &report)?;
    for p in &written {
        println!("{}", p.display());
    }
    Ok(written)
}

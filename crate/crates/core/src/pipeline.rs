//! End-to-end run: frames → ROI OCR → track → filter → analysis → exports.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use crate::analysis::{analyze_intervals, resample, AnalysisError, AnalysisOptions, MethodReport, SamplingReport};
use crate::config::{ConfigError, RunConfig};
use crate::export::{write_json, write_track_csv, ExportBundle, ExportError, KmzOptions};
use crate::imaging::PreprocessParams;
use crate::ingest::{FrameSource, IngestError, SamplingPlan};
use crate::ocr::{parse_value, OcrError, OcrReading, Recognizer, RecognizerSpec};
use crate::raster::GrayImage;
use crate::roi::{crop_roi, enhance_roi, validate_config, RoiConfig, RoiError, ValidationReport};
use crate::trajectory::{
    assemble_track, two_stage_filter, DropReport, FieldError, FieldReading, FlightTrack, FrameReadings, TrajectoryError,
};

pub const TOOL_NAME: &str = "hudtrace";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Roi(#[from] RoiError),
    #[error("ROI config {path} failed validation:\n{report}")]
    RoiInvalid { path: PathBuf, report: ValidationReport },
    #[error("frame size {frame_width}x{frame_height} differs from the ROI config's {roi_width}x{roi_height}")]
    FrameSize {
        frame_width: u32,
        frame_height: u32,
        roi_width: u32,
        roi_height: u32,
    },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("cannot start recognizer: {0}")]
    Recognizer(#[from] OcrError),
    #[error("no track could be assembled: {0}")]
    NoTrack(#[from] TrajectoryError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Export(#[from] ExportError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Success,
    /// A track was produced but some frames or fields could not be read.
    Partial,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Success => 0,
            RunStatus::Partial => 2,
        }
    }
}

/// Exit code for a fatal error.
pub const EXIT_FATAL: i32 = 1;

/// A planned frame that could not be loaded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameFailure {
    pub frame_index: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSummary {
    pub dir: PathBuf,
    pub fps: f64,
    pub frame_count: usize,
    pub duration_s: f64,
    /// Sampling interval at which frames were read.
    pub read_interval_s: u32,
    pub frames_planned: usize,
}

/// The structured run report (`run_report.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub tool: String,
    pub version: String,
    pub status: RunStatus,
    pub frames: FrameSummary,
    pub frame_failures: Vec<FrameFailure>,
    pub drops: DropReport,
    pub sampling: SamplingReport,
}

/// Everything needed to rerun identically (`manifest.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub run_id: String,
    pub config: RunConfig,
    pub roi_config: RoiConfig,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub report: RunReport,
    /// Assembled track before filtering.
    pub track: FlightTrack,
    /// Baseline-interval track after filtering.
    pub clean_track: FlightTrack,
    pub written: Vec<PathBuf>,
}

/// Reads every ROI of one frame.
pub fn read_fields(frame: &GrayImage, rois: &RoiConfig, params: &PreprocessParams, recognizer: &mut Recognizer, confidence_floor: f64) -> Vec<FieldReading> {
    rois.rois
        .iter()
        .map(|roi| {
            let recognized = crop_roi(frame, roi)
                .map_err(|e| e.to_string())
                .and_then(|crop| enhance_roi(&crop, &roi.kind, params).map_err(|e| e.to_string()))
                .and_then(|bin| recognizer.recognize(&bin, &roi.kind).map_err(|e| e.to_string()));
            let (reading, value) = match recognized {
                Err(reason) => (OcrReading::empty(&roi.label), Err(FieldError::Unreadable { reason })),
                Ok(r) => {
                    let reading = OcrReading {
                        label: roi.label.clone(),
                        raw_text: r.text,
                        confidence: r.confidence,
                    };
                    let value = if r.confidence < confidence_floor {
                        Err(FieldError::LowConfidence {
                            confidence: r.confidence,
                            floor: confidence_floor,
                        })
                    } else {
                        parse_value(&roi.kind, &reading.raw_text, roi.int_digits).map_err(|cause| FieldError::Parse { cause })
                    };
                    (reading, value)
                }
            };
            FieldReading {
                label: roi.label.clone(),
                kind: roi.kind.clone(),
                reading,
                value,
            }
        })
        .collect()
}

/// Runs OCR over the planned frames on `workers` threads, each with its own
/// recognizer. Results keep plan order regardless of the worker count.
pub fn extract_readings(
    source: &FrameSource,
    plan: &SamplingPlan,
    rois: &RoiConfig,
    params: &PreprocessParams,
    spec: &RecognizerSpec,
    workers: usize,
) -> Result<(Vec<FrameReadings>, Vec<FrameFailure>), PipelineError> {
    let jobs: Vec<(usize, u64)> = plan.frame_indices.iter().copied().zip(plan.frame_times.iter().copied()).collect();
    if jobs.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    let workers = workers.clamp(1, jobs.len());
    let chunk = jobs.len().div_ceil(workers);
    type Slot = Result<FrameReadings, FrameFailure>;
    let results: Vec<Result<Vec<Slot>, OcrError>> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || -> Result<Vec<Slot>, OcrError> {
                    let mut recognizer = Recognizer::from_spec(spec)?;
                    let mut out = Vec::with_capacity(part.len());
                    for &(frame_index, t) in part {
                        match source.load_frame(frame_index) {
                            Ok(img) => out.push(Ok(FrameReadings {
                                frame_index,
                                t: t as f64,
                                fields: read_fields(&img, rois, params, &mut recognizer, spec.confidence_floor),
                            })),
                            Err(e) => out.push(Err(FrameFailure {
                                frame_index,
                                error: e.to_string(),
                            })),
                        }
                    }
                    Ok(out)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("OCR worker panicked")).collect()
    });
    let mut frames = Vec::with_capacity(jobs.len());
    let mut failures = Vec::new();
    for part in results {
        for slot in part? {
            match slot {
                Ok(f) => frames.push(f),
                Err(f) => failures.push(f),
            }
        }
    }
    Ok((frames, failures))
}

fn log_problems(frames: &[FrameReadings], failures: &[FrameFailure]) {
    for f in failures {
        warn!(frame = f.frame_index, error = %f.error, "frame not loaded");
    }
    for frame in frames {
        for field in &frame.fields {
            if let Err(e) = &field.value {
                warn!(frame = frame.frame_index, roi = %field.label, text = %field.reading.raw_text, "{e}");
            }
        }
    }
}

/// The baseline track after filtering, as analysed.
fn clean_baseline(track: &FlightTrack, report: &SamplingReport, cfg: &RunConfig) -> Result<FlightTrack, PipelineError> {
    let base = resample(track, report.baseline_interval_s)?;
    Ok(match cfg.spatial_filter {
        true => two_stage_filter(&base, &cfg.filter)?.clean,
        false => base,
    })
}

/// Loads and validates the ROI configuration named by `cfg`.
pub fn load_rois(path: &Path) -> Result<RoiConfig, PipelineError> {
    let rois = RoiConfig::load(path)?;
    let report = validate_config(&rois);
    if !report.is_valid() {
        return Err(PipelineError::RoiInvalid {
            path: path.to_path_buf(),
            report,
        });
    }
    for w in &report.warnings {
        warn!("{w}");
    }
    Ok(rois)
}

/// Runs the whole chain and writes the selected exports, the run report and
/// the manifest into `cfg.output_dir`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutcome, PipelineError> {
    cfg.validate()?;
    let rois = load_rois(&cfg.roi_config)?;
    let source = FrameSource::from_dir(&cfg.frames.dir, cfg.frames.fps)?.with_duration(cfg.frames.duration_s);
    let first = source.load_frame(0)?;
    if (first.width(), first.height()) != (rois.frame_width, rois.frame_height) {
        return Err(PipelineError::FrameSize {
            frame_width: first.width(),
            frame_height: first.height(),
            roi_width: rois.frame_width,
            roi_height: rois.frame_height,
        });
    }
    let read_interval = cfg.read_interval();
    let plan = source.plan(read_interval)?;
    info!(frames = source.frame_count(), planned = plan.frame_indices.len(), interval_s = read_interval, "reading frames");

    let (frames, failures) = extract_readings(&source, &plan, &rois, &cfg.preprocess, &cfg.recognizer, cfg.workers)?;
    log_problems(&frames, &failures);
    let (track, drops) = assemble_track(&frames, &plan)?;
    info!(records = track.len(), dropped = drops.dropped.len(), "track assembled");

    let opts = AnalysisOptions {
        intervals: cfg.intervals.clone(),
        filter: cfg.spatial_filter.then(|| cfg.filter.clone()),
        constants: cfg.constants,
        histogram_bin_kmh: cfg.export.histogram_bin_kmh,
    };
    let sampling = analyze_intervals(&track, &opts)?;
    let clean_track = clean_baseline(&track, &sampling, cfg)?;

    let partial = !failures.is_empty() || !drops.dropped.is_empty() || drops.field_issues > 0;
    let status = if partial { RunStatus::Partial } else { RunStatus::Success };
    let report = RunReport {
        run_id: cfg.run_id.clone(),
        tool: TOOL_NAME.into(),
        version: TOOL_VERSION.into(),
        status,
        frames: FrameSummary {
            dir: cfg.frames.dir.clone(),
            fps: cfg.frames.fps,
            frame_count: source.frame_count(),
            duration_s: source.duration_s(),
            read_interval_s: read_interval,
            frames_planned: plan.frame_indices.len(),
        },
        frame_failures: failures,
        drops,
        sampling,
    };

    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|e| ExportError::io(out, e))?;
    let bundle = ExportBundle {
        out_dir: out.clone(),
        formats: cfg.export.formats(),
        kmz: KmzOptions {
            run_id: cfg.run_id.clone(),
            extrude: cfg.export.extrude,
        },
    };
    let mut written = Vec::new();
    if cfg.export.csv {
        let p = out.join("track_raw.csv");
        write_track_csv(&track, &p)?;
        written.push(p);
    }
    written.extend(bundle.write(&clean_track, &report.sampling)?);
    let report_path = out.join("run_report.json");
    write_json(&report, &report_path)?;
    written.push(report_path);

    let manifest_path = out.join("manifest.json");
    let mut outputs: Vec<String> = written
        .iter()
        .chain(std::iter::once(&manifest_path))
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    outputs.sort();
    let manifest = Manifest {
        tool: TOOL_NAME.into(),
        version: TOOL_VERSION.into(),
        run_id: cfg.run_id.clone(),
        config: cfg.clone(),
        roi_config: rois,
        outputs,
    };
    write_json(&manifest, &manifest_path)?;
    written.push(manifest_path);

    Ok(RunOutcome {
        status,
        report,
        track,
        clean_track,
        written,
    })
}

/// Per-interval method comparison extracted from a sampling report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalMethods {
    pub interval_s: u32,
    pub clean_count: usize,
    pub methods: Option<MethodReport>,
}

pub fn method_comparison(report: &SamplingReport) -> Vec<IntervalMethods> {
    report
        .intervals
        .iter()
        .map(|r| IntervalMethods {
            interval_s: r.interval_s,
            clean_count: r.clean_count,
            methods: r.methods.clone(),
        })
        .collect()
}

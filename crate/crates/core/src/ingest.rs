//! Temporal sampling and frame loading.
//!
//! Video containers are not decoded here. Frames arrive as an image sequence,
//! typically a directory of `frame_%06d.png` (or `.pgm`) files dumped by an
//! external tool, plus the frame rate of the original footage.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{luma, GrayImage};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("sampling interval must be a positive whole number of seconds")]
    InvalidInterval,
    #[error("frame rate must be positive and finite, got {0}")]
    InvalidFps(f64),
    #[error("frame source contains no frames")]
    NoFrames,
    #[error("frame {index} missing: {path}")]
    FrameMissing { index: usize, path: PathBuf },
    #[error("cannot decode frame {path}: {reason}")]
    DecodeError { path: PathBuf, reason: String },
    #[error("cannot read frame directory {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Which timestamps to sample and which frames they map to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub interval_s: u32,
    /// Whole-second sample times `0, interval, 2·interval, … ≤ duration`.
    pub timestamps: Vec<u64>,
    /// Frame indices after clamping and deduplication; empty until frames are selected.
    pub frame_indices: Vec<usize>,
    /// Timestamp of the first sample that mapped to each entry of `frame_indices`.
    pub frame_times: Vec<u64>,
}

/// Builds the sampling timestamps for a clip of `duration_s` seconds.
///
/// Sampling is anchored at t = 0 and inclusive of it, so a 121 s clip sampled
/// every 5 s yields 25 timestamps.
pub fn plan_sampling(duration_s: f64, interval_s: u32) -> Result<SamplingPlan, IngestError> {
    if interval_s == 0 {
        return Err(IngestError::InvalidInterval);
    }
    let duration = if duration_s.is_finite() {
        duration_s.max(0.0)
    } else {
        0.0
    };
    let steps = (duration / interval_s as f64).floor() as u64;
    let timestamps = (0..=steps).map(|k| k * interval_s as u64).collect();
    Ok(SamplingPlan {
        interval_s,
        timestamps,
        frame_indices: Vec::new(),
        frame_times: Vec::new(),
    })
}

/// Frame index for each timestamp: `round(t·fps)` clamped to the clip,
/// deduplicated in order.
pub fn select_frames(plan: &SamplingPlan, fps: f64, frame_count: usize) -> Vec<usize> {
    select_frames_with_times(plan, fps, frame_count)
        .into_iter()
        .map(|(_, idx)| idx)
        .collect()
}

fn select_frames_with_times(plan: &SamplingPlan, fps: f64, frame_count: usize) -> Vec<(u64, usize)> {
    let last = frame_count.saturating_sub(1);
    let mut out: Vec<(u64, usize)> = Vec::with_capacity(plan.timestamps.len());
    for &t in &plan.timestamps {
        let raw = (t as f64 * fps).round();
        let idx = if raw <= 0.0 {
            0
        } else {
            (raw as usize).min(last)
        };
        if out.last().is_none_or(|&(_, prev)| prev != idx) {
            out.push((t, idx));
        }
    }
    out
}

impl SamplingPlan {
    /// Fills `frame_indices` / `frame_times` for a source of the given rate and length.
    pub fn with_frames(mut self, fps: f64, frame_count: usize) -> Self {
        let pairs = select_frames_with_times(&self, fps, frame_count);
        self.frame_times = pairs.iter().map(|&(t, _)| t).collect();
        self.frame_indices = pairs.iter().map(|&(_, i)| i).collect();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FrameSourceKind {
    Directory(PathBuf),
    Files,
}

/// An ordered image sequence plus the frame rate of the footage it came from.
#[derive(Debug, Clone)]
pub struct FrameSource {
    pub kind: FrameSourceKind,
    pub fps: f64,
    files: Vec<PathBuf>,
    duration_override: Option<f64>,
}

impl FrameSource {
    /// Scans `dir` for `frame_<index>.png` / `.pgm` files and orders them by index.
    pub fn from_dir(dir: impl AsRef<Path>, fps: f64) -> Result<Self, IngestError> {
        let dir = dir.as_ref();
        check_fps(fps)?;
        let entries = fs::read_dir(dir).map_err(|source| IngestError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut indexed = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|source| IngestError::Io {
                path: dir.to_path_buf(),
                source,
            })?;
            let path = entry.path();
            if let Some(idx) = frame_index_of(&path) {
                indexed.push((idx, path));
            }
        }
        indexed.sort();
        if indexed.is_empty() {
            return Err(IngestError::NoFrames);
        }
        // Indices must form 0..n; a hole means a frame went missing during extraction.
        for (expected, (idx, _)) in indexed.iter().enumerate() {
            if *idx != expected {
                return Err(IngestError::FrameMissing {
                    index: expected,
                    path: dir.join(frame_file_name(expected, "png")),
                });
            }
        }
        Ok(Self {
            kind: FrameSourceKind::Directory(dir.to_path_buf()),
            fps,
            files: indexed.into_iter().map(|(_, p)| p).collect(),
            duration_override: None,
        })
    }

    /// Uses an explicit, already ordered list of frame files.
    pub fn from_files(files: Vec<PathBuf>, fps: f64) -> Result<Self, IngestError> {
        check_fps(fps)?;
        if files.is_empty() {
            return Err(IngestError::NoFrames);
        }
        Ok(Self {
            kind: FrameSourceKind::Files,
            fps,
            files,
            duration_override: None,
        })
    }

    pub fn with_duration(mut self, duration_s: Option<f64>) -> Self {
        self.duration_override = duration_s;
        self
    }

    pub fn frame_count(&self) -> usize {
        self.files.len()
    }

    /// `(frame_count − 1) / fps` unless overridden.
    pub fn duration_s(&self) -> f64 {
        self.duration_override
            .unwrap_or((self.files.len() - 1) as f64 / self.fps)
    }

    pub fn frame_path(&self, index: usize) -> Option<&Path> {
        self.files.get(index).map(PathBuf::as_path)
    }

    pub fn load_frame(&self, index: usize) -> Result<GrayImage, IngestError> {
        let path = self.files.get(index).ok_or_else(|| IngestError::FrameMissing {
            index,
            path: PathBuf::from(format!("<frame {index} of {}>", self.files.len())),
        })?;
        load_image(path).map_err(|e| match e {
            IngestError::FrameMissing { path, .. } => IngestError::FrameMissing { index, path },
            other => other,
        })
    }

    /// Builds the sampling plan for this source, frames selected.
    pub fn plan(&self, interval_s: u32) -> Result<SamplingPlan, IngestError> {
        Ok(plan_sampling(self.duration_s(), interval_s)?.with_frames(self.fps, self.frame_count()))
    }
}

fn check_fps(fps: f64) -> Result<(), IngestError> {
    if fps.is_finite() && fps > 0.0 {
        Ok(())
    } else {
        Err(IngestError::InvalidFps(fps))
    }
}

/// Canonical frame file name, e.g. `frame_000042.png`.
pub fn frame_file_name(index: usize, ext: &str) -> String {
    format!("frame_{index:06}.{ext}")
}

fn frame_index_of(path: &Path) -> Option<usize> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    if ext != "png" && ext != "pgm" {
        return None;
    }
    let stem = path.file_stem()?.to_str()?;
    let digits = stem.strip_prefix("frame_")?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

/// Reads a PNG or PGM/PPM file as 8-bit gray; colour is reduced with BT.601 luma.
pub fn load_image(path: &Path) -> Result<GrayImage, IngestError> {
    let bytes = fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            IngestError::FrameMissing {
                index: 0,
                path: path.to_path_buf(),
            }
        } else {
            IngestError::Io {
                path: path.to_path_buf(),
                source: e,
            }
        }
    })?;
    decode_gray(&bytes).map_err(|reason| IngestError::DecodeError {
        path: path.to_path_buf(),
        reason,
    })
}

/// Decodes image bytes into 8-bit gray.
pub fn decode_gray(bytes: &[u8]) -> Result<GrayImage, String> {
    let decoded = image::load_from_memory(bytes).map_err(|e| e.to_string())?;
    let (w, h) = (decoded.width(), decoded.height());
    let pixels = match decoded {
        image::DynamicImage::ImageLuma8(buf) => buf.into_raw(),
        image::DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0]).collect(),
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| luma(p.0[0], p.0[1], p.0[2]))
            .collect(),
    };
    GrayImage::from_raw(w, h, pixels).map_err(|e| e.to_string())
}

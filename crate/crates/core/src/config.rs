//! Run configuration (TOML).
//!
//! Relative paths are resolved against the directory of the config file.
//!
//! ```toml
//! run_id = "flight-01"
//! output_dir = "out"
//! intervals = [1, 5, 10, 15, 20]
//! roi_config = "roi.toml"
//!
//! [frames]
//! dir = "frames"
//! fps = 30.0
//!
//! [recognizer]
//! kind = "builtin"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::DEFAULT_HISTOGRAM_BIN_KMH;
use crate::export::{ExportFormats, KmzOptions};
use crate::geodesy::MethodConstants;
use crate::imaging::PreprocessParams;
use crate::ocr::RecognizerSpec;
use crate::trajectory::FilterParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FramesConfig {
    /// Directory of `frame_NNNNNN.png` / `.pgm` files.
    pub dir: PathBuf,
    pub fps: f64,
    /// Clip length; defaults to `(frames - 1) / fps`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportConfig {
    pub csv: bool,
    pub kmz: bool,
    pub geojson: bool,
    pub charts: bool,
    pub extrude: bool,
    pub histogram_bin_kmh: f64,
}

impl Default for ExportConfig {
    fn default() -> Self {
        let f = ExportFormats::default();
        Self {
            csv: f.csv,
            kmz: f.kmz,
            geojson: f.geojson,
            charts: f.charts,
            extrude: KmzOptions::default().extrude,
            histogram_bin_kmh: DEFAULT_HISTOGRAM_BIN_KMH,
        }
    }
}

impl ExportConfig {
    pub fn formats(&self) -> ExportFormats {
        ExportFormats {
            csv: self.csv,
            kmz: self.kmz,
            geojson: self.geojson,
            charts: self.charts,
        }
    }
}

fn default_intervals() -> Vec<u32> {
    vec![1, 5, 10, 15, 20]
}

fn default_true() -> bool {
    true
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_run_id")]
    pub run_id: String,
    pub output_dir: PathBuf,
    pub frames: FramesConfig,
    pub roi_config: PathBuf,
    #[serde(default = "default_intervals")]
    pub intervals: Vec<u32>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub preprocess: PreprocessParams,
    #[serde(default)]
    pub recognizer: RecognizerSpec,
    /// Run the two-stage spatial filter.
    #[serde(default = "default_true")]
    pub spatial_filter: bool,
    #[serde(default)]
    pub filter: FilterParams,
    #[serde(default)]
    pub constants: MethodConstants,
    #[serde(default)]
    pub export: ExportConfig,
}

fn default_run_id() -> String {
    "run".into()
}

impl RunConfig {
    /// Minimal config with defaults for everything but the paths.
    pub fn new(frames_dir: impl Into<PathBuf>, fps: f64, roi_config: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            run_id: default_run_id(),
            output_dir: output_dir.into(),
            frames: FramesConfig {
                dir: frames_dir.into(),
                fps,
                duration_s: None,
            },
            roi_config: roi_config.into(),
            intervals: default_intervals(),
            workers: default_workers(),
            preprocess: PreprocessParams::default(),
            recognizer: RecognizerSpec::default(),
            spatial_filter: true,
            filter: FilterParams::default(),
            constants: MethodConstants::default(),
            export: ExportConfig::default(),
        }
    }

    /// Parses TOML; relative paths stay relative.
    pub fn from_toml_str(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("RunConfig always serialises")
    }

    /// Reads `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text).map_err(|message| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.output_dir, &mut self.frames.dir, &mut self.roi_config] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Checks values and that the referenced inputs exist.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.intervals.is_empty() {
            return bad("intervals must not be empty".into());
        }
        if self.intervals.contains(&0) {
            return bad("intervals must be positive whole seconds".into());
        }
        if !(self.frames.fps.is_finite() && self.frames.fps > 0.0) {
            return bad(format!("frames.fps must be positive, got {}", self.frames.fps));
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.run_id.is_empty() {
            return bad("run_id must not be empty".into());
        }
        if !(self.export.histogram_bin_kmh > 0.0) {
            return bad("export.histogram_bin_kmh must be positive".into());
        }
        if !self.export.formats().any() {
            return bad("at least one export format must be enabled".into());
        }
        self.preprocess.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.recognizer.validate().map_err(ConfigError::Invalid)?;
        self.filter.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !self.frames.dir.is_dir() {
            return bad(format!("frames directory {} does not exist", self.frames.dir.display()));
        }
        if !self.roi_config.is_file() {
            return bad(format!("ROI config {} does not exist", self.roi_config.display()));
        }
        Ok(())
    }

    /// Greatest common divisor of the intervals: the rate at which frames
    /// are read so that every interval is a subsample.
    pub fn read_interval(&self) -> u32 {
        fn gcd(a: u32, b: u32) -> u32 {
            if b == 0 {
                a
            } else {
                gcd(b, a % b)
            }
        }
        self.intervals.iter().copied().fold(0, gcd).max(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_toml_fills_defaults() {
        let cfg = RunConfig::from_toml_str(
            "output_dir = \"out\"\nroi_config = \"roi.toml\"\n[frames]\ndir = \"f\"\nfps = 2.0\n",
        )
        .unwrap();
        assert_eq!(cfg.intervals, [1, 5, 10, 15, 20]);
        assert!(cfg.spatial_filter);
        assert_eq!(cfg.filter, FilterParams::default());
        assert!(cfg.export.kmz);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml_str(
            "output_dir = \"out\"\nroi_config = \"r\"\nbogus = 1\n[frames]\ndir = \"f\"\nfps = 1.0\n",
        )
        .unwrap_err();
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::new("frames", 30.0, "roi.toml", "out");
        cfg.export.geojson = false;
        cfg.recognizer.confidence_floor = 0.8;
        cfg.constants.utm_zone = Some(33);
        assert_eq!(RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
    }

    #[test]
    fn load_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("frames")).unwrap();
        std::fs::write(dir.path().join("roi.toml"), "frame_width = 10\nframe_height = 10\n").unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, RunConfig::new("frames", 1.0, "roi.toml", "/abs/out").to_toml_string()).unwrap();
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!(cfg.frames.dir, dir.path().join("frames"));
        assert_eq!(cfg.output_dir, PathBuf::from("/abs/out"));
        cfg.validate().unwrap();
    }

    #[test]
    fn validation_names_missing_inputs() {
        let cfg = RunConfig::new("/nonexistent/frames", 1.0, "roi.toml", "out");
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("/nonexistent/frames"), "{msg}");
        let mut cfg = RunConfig::new(".", 1.0, "roi.toml", "out");
        cfg.intervals = vec![5, 0];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn read_interval_is_gcd() {
        let mut cfg = RunConfig::new(".", 1.0, "r", "o");
        assert_eq!(cfg.read_interval(), 1);
        cfg.intervals = vec![10, 15, 20];
        assert_eq!(cfg.read_interval(), 5);
        cfg.intervals = vec![20];
        assert_eq!(cfg.read_interval(), 20);
    }
}

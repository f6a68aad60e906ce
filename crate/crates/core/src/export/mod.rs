//! Output writers: telemetry CSV, KMZ, GeoJSON, SVG charts and JSON reports.
//!
//! Every writer goes through [`write_atomic`], so a failed run never leaves
//! a truncated file at the destination.

mod charts;
mod geojson;
mod kml;
mod table;

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::SamplingReport;
use crate::trajectory::FlightTrack;

pub use charts::{method_chart, render_charts, retention_chart, speed_chart, CHART_FILES};
pub use geojson::{geojson_value, write_geojson};
pub use kml::{kml_document, kmz_bytes, write_kmz, KmzOptions};
pub use table::{quantize_record, read_track_csv, track_csv_string, write_track_csv, CSV_HEADER};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("track is empty")]
    Empty,
    #[error("track has {points} point(s), need at least {need}")]
    TooShort { points: usize, need: usize },
    #[error("report has no intervals to render")]
    NothingToRender,
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("zip: {0}")]
    Zip(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("no export format selected")]
    NoFormats,
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl ExportError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Writes `bytes` to a temporary file next to `path`, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<(), ExportError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes).map_err(|e| ExportError::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportFormats {
    pub csv: bool,
    pub kmz: bool,
    pub geojson: bool,
    pub charts: bool,
}

impl Default for ExportFormats {
    fn default() -> Self {
        Self {
            csv: true,
            kmz: true,
            geojson: true,
            charts: true,
        }
    }
}

impl ExportFormats {
    pub fn any(&self) -> bool {
        self.csv || self.kmz || self.geojson || self.charts
    }
}

/// Where and what to write for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExportBundle {
    pub out_dir: PathBuf,
    pub formats: ExportFormats,
    pub kmz: KmzOptions,
}

impl ExportBundle {
    pub fn validate(&self) -> Result<(), ExportError> {
        if !self.formats.any() {
            return Err(ExportError::NoFormats);
        }
        Ok(())
    }

    /// Writes the selected formats for `track` (the cleaned baseline) and
    /// `report`. A KMZ is skipped for tracks shorter than two points; charts
    /// are skipped when the report is empty. Returns the written paths.
    pub fn write(&self, track: &FlightTrack, report: &SamplingReport) -> Result<Vec<PathBuf>, ExportError> {
        self.validate()?;
        std::fs::create_dir_all(&self.out_dir).map_err(|e| ExportError::io(&self.out_dir, e))?;
        let mut written = Vec::new();
        if self.formats.csv {
            let p = self.out_dir.join("track.csv");
            write_track_csv(track, &p)?;
            written.push(p);
        }
        if self.formats.geojson {
            let p = self.out_dir.join("track.geojson");
            write_geojson(track, &p)?;
            written.push(p);
        }
        if self.formats.kmz && track.len() >= 2 {
            let p = self.out_dir.join("track.kmz");
            write_kmz(track, &p, &self.kmz)?;
            written.push(p);
        }
        if self.formats.charts && !report.intervals.is_empty() {
            written.extend(render_charts(report, &self.out_dir)?);
        }
        Ok(written)
    }
}

/// XML text/attribute escaping.
pub(crate) fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_atomic(&p, b"first").unwrap();
        write_atomic(&p, b"second").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"second");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn atomic_write_into_missing_dir_fails_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nope").join("a.txt");
        assert!(write_atomic(&p, b"x").is_err());
        assert!(!p.exists());
    }

    #[test]
    fn escapes_markup() {
        assert_eq!(xml_escape("a<b & \"c\""), "a&lt;b &amp; &quot;c&quot;");
    }

    #[test]
    fn bundle_requires_a_format() {
        let b = ExportBundle {
            out_dir: PathBuf::from("."),
            formats: ExportFormats {
                csv: false,
                kmz: false,
                geojson: false,
                charts: false,
            },
            kmz: KmzOptions::default(),
        };
        assert!(matches!(b.validate(), Err(ExportError::NoFormats)));
    }
}

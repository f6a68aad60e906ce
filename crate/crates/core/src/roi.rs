//! Labeled HUD regions: configuration, validation, cropping, per-class
//! enhancement and overlay previews.
//!
//! A [`RoiConfig`] is stored as TOML:
//!
//! ```toml
//! version = 1
//! frame_width = 640
//! frame_height = 360
//!
//! [[roi]]
//! label = "lat"
//! kind = "latitude"
//! rect = [16, 12, 118, 18]   # x, y, w, h in source-frame pixels
//! int_digits = 2
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{self, EnhanceProfile, ImagingError, PadFill, Polarity, PreprocessParams};
use crate::ocr::font;
use crate::raster::GrayImage;

#[derive(Debug, Error)]
pub enum RoiError {
    #[error("ROI '{label}' rect {rect:?} exceeds the {width}x{height} frame")]
    OutOfBounds {
        label: String,
        rect: [u32; 4],
        width: u32,
        height: u32,
    },
    #[error("ROI config failed validation:\n{0}")]
    ValidationFailed(ValidationReport),
    #[error("cannot read ROI config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed ROI config{}: {message}", path.as_ref().map(|p| format!(" {}", p.display())).unwrap_or_default())]
    Parse { path: Option<PathBuf>, message: String },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

/// What a region displays.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RoiKind {
    Latitude,
    Longitude,
    Altitude,
    Battery,
    AirSpeed,
    VerticalSpeed,
    CapacityUsed,
    Auxiliary(String),
}

impl RoiKind {
    pub fn is_coordinate(&self) -> bool {
        matches!(self, RoiKind::Latitude | RoiKind::Longitude)
    }

    pub fn profile(&self, params: &PreprocessParams) -> EnhanceProfile {
        if self.is_coordinate() {
            params.coordinate_roi
        } else {
            params.auxiliary_roi
        }
    }
}

impl fmt::Display for RoiKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RoiKind::Latitude => f.write_str("latitude"),
            RoiKind::Longitude => f.write_str("longitude"),
            RoiKind::Altitude => f.write_str("altitude"),
            RoiKind::Battery => f.write_str("battery"),
            RoiKind::AirSpeed => f.write_str("airspeed"),
            RoiKind::VerticalSpeed => f.write_str("vertical_speed"),
            RoiKind::CapacityUsed => f.write_str("capacity_used"),
            RoiKind::Auxiliary(name) => write!(f, "aux:{name}"),
        }
    }
}

impl FromStr for RoiKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "latitude" => RoiKind::Latitude,
            "longitude" => RoiKind::Longitude,
            "altitude" => RoiKind::Altitude,
            "battery" => RoiKind::Battery,
            "airspeed" => RoiKind::AirSpeed,
            "vertical_speed" => RoiKind::VerticalSpeed,
            "capacity_used" => RoiKind::CapacityUsed,
            other => match other.strip_prefix("aux:") {
                Some(name) if !name.is_empty() => RoiKind::Auxiliary(name.to_string()),
                _ => {
                    return Err(format!(
                        "unknown ROI kind '{other}' (expected latitude, longitude, altitude, battery, \
                         airspeed, vertical_speed, capacity_used or aux:<name>)"
                    ))
                }
            },
        })
    }
}

impl TryFrom<String> for RoiKind {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<RoiKind> for String {
    fn from(k: RoiKind) -> Self {
        k.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoiSpec {
    pub label: String,
    pub kind: RoiKind,
    /// `[x, y, w, h]` on the original frame.
    pub rect: [u32; 4],
    /// Digits before the decimal point; required for coordinate kinds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub int_digits: Option<u32>,
}

impl RoiSpec {
    pub fn new(label: impl Into<String>, kind: RoiKind, rect: [u32; 4], int_digits: Option<u32>) -> Self {
        Self {
            label: label.into(),
            kind,
            rect,
            int_digits,
        }
    }

    fn fits(&self, width: u32, height: u32) -> bool {
        let [x, y, w, h] = self.rect.map(u64::from);
        x + w <= width as u64 && y + h <= height as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoiConfig {
    #[serde(default = "first_version")]
    pub version: u64,
    pub frame_width: u32,
    pub frame_height: u32,
    #[serde(default, rename = "roi")]
    pub rois: Vec<RoiSpec>,
}

fn first_version() -> u64 {
    1
}

impl RoiConfig {
    pub fn new(frame_width: u32, frame_height: u32) -> Self {
        Self {
            version: 1,
            frame_width,
            frame_height,
            rois: Vec::new(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, RoiError> {
        toml::from_str(text).map_err(|e| RoiError::Parse {
            path: None,
            message: e.to_string(),
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("RoiConfig always serialises")
    }

    pub fn load(path: &Path) -> Result<Self, RoiError> {
        let text = std::fs::read_to_string(path).map_err(|source| RoiError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| RoiError::Parse {
            path: Some(path.to_path_buf()),
            message: e.to_string(),
        })
    }

    /// Writes atomically (temp file + rename).
    pub fn save(&self, path: &Path) -> Result<(), RoiError> {
        crate::export::write_atomic(path, self.to_toml_string().as_bytes()).map_err(|source| RoiError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn find(&self, label: &str) -> Option<&RoiSpec> {
        self.rois.iter().find(|r| r.label == label)
    }

    pub fn of_kind(&self, kind: &RoiKind) -> Option<&RoiSpec> {
        self.rois.iter().find(|r| &r.kind == kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueCode {
    InvalidFrame,
    EmptyLabel,
    EmptyRect,
    OutOfBounds,
    DuplicateLabel,
    DuplicateCoordinateKind,
    MissingIntDigits,
    InvalidIntDigits,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoiIssue {
    /// Position in the config's ROI list; `None` for config-level issues.
    pub index: Option<usize>,
    pub label: Option<String>,
    pub code: IssueCode,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<RoiIssue>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.errors {
            writeln!(f, "error[{}]: {}", serde_json::to_value(e.code).unwrap().as_str().unwrap(), e.message)?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        if self.is_valid() {
            write!(f, "ok")?;
        }
        Ok(())
    }
}

/// Checks bounds, label uniqueness and coordinate settings. Never fails;
/// problems are collected in the report.
pub fn validate_config(cfg: &RoiConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    if cfg.frame_width == 0 || cfg.frame_height == 0 {
        report.errors.push(RoiIssue {
            index: None,
            label: None,
            code: IssueCode::InvalidFrame,
            message: format!("frame dimensions {}x{} must be non-zero", cfg.frame_width, cfg.frame_height),
        });
    }
    let mut issue = |index: usize, spec: &RoiSpec, code: IssueCode, message: String| {
        report.errors.push(RoiIssue {
            index: Some(index),
            label: Some(spec.label.clone()),
            code,
            message,
        });
    };
    for (i, spec) in cfg.rois.iter().enumerate() {
        let [x, y, w, h] = spec.rect;
        if spec.label.trim().is_empty() {
            issue(i, spec, IssueCode::EmptyLabel, format!("ROI #{i} has an empty label"));
        }
        if w == 0 || h == 0 {
            issue(i, spec, IssueCode::EmptyRect, format!("'{}': rect {w}x{h} is empty", spec.label));
        } else if !spec.fits(cfg.frame_width, cfg.frame_height) {
            issue(
                i,
                spec,
                IssueCode::OutOfBounds,
                format!(
                    "'{}': rect ({x}, {y}, {w}, {h}) exceeds the {}x{} frame (x+w = {}, y+h = {})",
                    spec.label,
                    cfg.frame_width,
                    cfg.frame_height,
                    x as u64 + w as u64,
                    y as u64 + h as u64
                ),
            );
        }
        if cfg.rois[..i].iter().any(|r| r.label == spec.label) {
            issue(i, spec, IssueCode::DuplicateLabel, format!("label '{}' is used more than once", spec.label));
        }
        if spec.kind.is_coordinate() {
            if cfg.rois[..i].iter().any(|r| r.kind == spec.kind) {
                issue(
                    i,
                    spec,
                    IssueCode::DuplicateCoordinateKind,
                    format!("'{}': more than one {} ROI", spec.label, spec.kind),
                );
            }
            match spec.int_digits {
                None => issue(
                    i,
                    spec,
                    IssueCode::MissingIntDigits,
                    format!("'{}': {} ROI needs int_digits", spec.label, spec.kind),
                ),
                Some(d) if !(1..=3).contains(&d) => issue(
                    i,
                    spec,
                    IssueCode::InvalidIntDigits,
                    format!("'{}': int_digits must be 1..=3, got {d}", spec.label),
                ),
                Some(_) => {}
            }
        }
    }
    let has = |k: RoiKind| cfg.rois.iter().any(|r| r.kind == k);
    match (has(RoiKind::Latitude), has(RoiKind::Longitude)) {
        (false, false) => report
            .warnings
            .push("no coordinate ROIs: spatial analysis disabled".to_string()),
        (true, false) => report
            .warnings
            .push("no longitude ROI: spatial analysis disabled".to_string()),
        (false, true) => report
            .warnings
            .push("no latitude ROI: spatial analysis disabled".to_string()),
        (true, true) => {}
    }
    for spec in &cfg.rois {
        if !spec.kind.is_coordinate() && spec.int_digits.is_some() {
            report
                .warnings
                .push(format!("'{}': int_digits ignored for {} ROIs", spec.label, spec.kind));
        }
    }
    report
}

pub fn crop_roi(frame: &GrayImage, spec: &RoiSpec) -> Result<GrayImage, RoiError> {
    let [x, y, w, h] = spec.rect;
    frame.sub_image(x, y, w, h).ok_or_else(|| RoiError::OutOfBounds {
        label: spec.label.clone(),
        rect: spec.rect,
        width: frame.width(),
        height: frame.height(),
    })
}

/// Whether a crop's glyphs are brighter than its surroundings.
fn needs_inversion(crop: &GrayImage, polarity: Polarity) -> bool {
    match polarity {
        Polarity::Dark => false,
        Polarity::Bright => true,
        Polarity::Auto => crop.mean() > imaging::border_median(crop) as f64,
    }
}

/// Normalises polarity, then pads, upscales, applies CLAHE and thresholds
/// using the coordinate or auxiliary profile. Output is binary with glyph
/// ink at 0.
pub fn enhance_roi(img: &GrayImage, kind: &RoiKind, params: &PreprocessParams) -> Result<GrayImage, ImagingError> {
    let profile = kind.profile(params);
    let oriented = if needs_inversion(img, params.polarity) {
        imaging::invert(img)
    } else {
        img.clone()
    };
    let padded = imaging::pad_border(&oriented, profile.pad, PadFill::Auto);
    let scaled = imaging::upscale(&padded, profile.scale)?;
    let (tiles, clamped) = imaging::fit_tiles(params.clahe_tiles, &scaled);
    if clamped {
        tracing::debug!(?tiles, "CLAHE tile grid clamped to ROI size");
    }
    let equalized = imaging::clahe(&scaled, profile.clahe_clip, tiles)?;
    imaging::adaptive_threshold(&equalized, params.threshold_block, params.threshold_bias)
}

/// Output dimensions of [`enhance_roi`] for a `w`×`h` crop.
pub fn enhanced_size(w: u32, h: u32, profile: EnhanceProfile) -> (u32, u32) {
    ((w + 2 * profile.pad) * profile.scale, (h + 2 * profile.pad) * profile.scale)
}

/// Outline thickness used by [`render_preview`].
pub const OUTLINE_PX: u32 = 2;

/// Copy of `frame` with each ROI outlined (2 px, inside the rect) and its
/// label written just above it (below when there is no room).
pub fn render_preview(frame: &GrayImage, cfg: &RoiConfig) -> Result<GrayImage, RoiError> {
    let report = validate_config(cfg);
    if !report.is_valid() {
        return Err(RoiError::ValidationFailed(report));
    }
    for spec in &cfg.rois {
        if !spec.fits(frame.width(), frame.height()) {
            return Err(RoiError::OutOfBounds {
                label: spec.label.clone(),
                rect: spec.rect,
                width: frame.width(),
                height: frame.height(),
            });
        }
    }
    let mut out = frame.clone();
    let label_scale = (frame.height() / 360).max(1);
    for spec in &cfg.rois {
        let [x, y, w, h] = spec.rect;
        let on_outline = |px: u32, py: u32| {
            px < x + OUTLINE_PX.min(w)
                || py < y + OUTLINE_PX.min(h)
                || px + OUTLINE_PX.min(w) >= x + w
                || py + OUTLINE_PX.min(h) >= y + h
        };
        let mut sum = 0u64;
        let mut n = 0u64;
        for py in y..y + h {
            for px in x..x + w {
                if on_outline(px, py) {
                    sum += frame.get(px, py) as u64;
                    n += 1;
                }
            }
        }
        let ink = if sum < 128 * n { 255 } else { 0 };
        for py in y..y + h {
            for px in x..x + w {
                if on_outline(px, py) {
                    out.set(px, py, ink);
                }
            }
        }
        let text = spec.label.to_uppercase();
        let (_, th) = font::text_size(text.chars().count(), label_scale);
        let gap = 2;
        let ty = if y >= th + gap {
            y as i64 - (th + gap) as i64
        } else {
            (y + h + gap) as i64
        };
        font::draw_text(&mut out, x as i64, ty, &text, label_scale, ink);
    }
    Ok(out)
}

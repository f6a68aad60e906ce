//! Glyph recognition and value parsing.
//!
//! Recognizers consume binary ROI images (ink 0, paper 255) produced by
//! [`crate::roi::enhance_roi`]. Two engines are available: the built-in
//! template matcher over the embedded font, and an external process spoken
//! to through a line-delimited JSON protocol (see [`external`]).

pub mod builtin;
pub mod external;
pub mod font;
pub mod parse;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use builtin::{recognize_builtin, GlyphTemplateSet};
pub use external::ExternalEngine;
pub use parse::{parse_value, ParseError, ParsedValue, Unit};

use crate::raster::GrayImage;
use crate::roi::RoiKind;

/// Default minimum confidence for a reading to be used.
pub const DEFAULT_CONFIDENCE_FLOOR: f64 = 0.60;

#[derive(Debug, Error)]
pub enum OcrError {
    #[error("no glyphs found")]
    NoGlyphs,
    #[error("engine did not answer within {timeout_ms} ms")]
    EngineTimeout { timeout_ms: u64 },
    #[error("engine protocol error: {0}")]
    Protocol(String),
    #[error("engine exited with status {status:?}: {stderr}")]
    EngineCrashed { status: Option<i32>, stderr: String },
    #[error("cannot start engine: {0}")]
    Spawn(String),
}

/// Text and confidence from one recognizer call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recognition {
    pub text: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrReading {
    pub label: String,
    pub raw_text: String,
    pub confidence: f64,
}

impl OcrReading {
    pub fn empty(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            raw_text: String::new(),
            confidence: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecognizerKind {
    #[default]
    Builtin,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecognizerSpec {
    pub kind: RecognizerKind,
    /// Program and arguments of the external engine.
    pub command: Vec<String>,
    pub timeout_ms: u64,
    pub confidence_floor: f64,
}

impl Default for RecognizerSpec {
    fn default() -> Self {
        Self {
            kind: RecognizerKind::Builtin,
            command: Vec::new(),
            timeout_ms: 10_000,
            confidence_floor: DEFAULT_CONFIDENCE_FLOOR,
        }
    }
}

impl RecognizerSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.confidence_floor) {
            return Err(format!("confidence_floor {} outside [0, 1]", self.confidence_floor));
        }
        if self.kind == RecognizerKind::External {
            if self.command.is_empty() {
                return Err("external recognizer needs a command".into());
            }
            if self.timeout_ms == 0 {
                return Err("external recognizer timeout_ms must be positive".into());
            }
        }
        Ok(())
    }
}

/// A recognizer instance owned by one worker.
pub enum Recognizer {
    Builtin(GlyphTemplateSet),
    External(ExternalEngine),
}

impl Recognizer {
    pub fn from_spec(spec: &RecognizerSpec) -> Result<Self, OcrError> {
        Ok(match spec.kind {
            RecognizerKind::Builtin => Recognizer::Builtin(GlyphTemplateSet::embedded()),
            RecognizerKind::External => Recognizer::External(ExternalEngine::new(spec.command.clone(), spec.timeout_ms)?),
        })
    }

    pub fn recognize(&mut self, img: &GrayImage, kind: &RoiKind) -> Result<Recognition, OcrError> {
        match self {
            Recognizer::Builtin(t) => recognize_builtin(img, t),
            Recognizer::External(e) => e.recognize(img, kind),
        }
    }
}

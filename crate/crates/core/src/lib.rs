//! Telemetry extraction from FPV heads-up-display footage.
//!
//! The crate is organised along the processing chain:
//!
//! 1. [`ingest`] – temporal sampling plans and frame loading from image sequences.
//! 2. [`imaging`] – CLAHE, Gaussian blur, adaptive threshold, Sobel, upscaling, padding.
//! 3. [`roi`] and [`ocr`] – labeled HUD regions, per-kind enhancement, glyph
//!    recognition (built-in template matcher or an external engine) and value parsing.
//! 4. [`trajectory`] – track assembly and the two-stage spatial outlier filter.
//! 5. [`geodesy`] and [`analysis`] – UTM / Haversine / raw-degree distances, speeds,
//!    sampling-rate statistics and cross-method comparison.
//! 6. [`export`] – CSV, KMZ, GeoJSON, SVG charts and the run report.
//!
//! [`synth`] renders ground-truth HUD frames for closed-loop testing and
//! [`pipeline`] wires everything together behind a [`config::RunConfig`].

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod export;
pub mod geodesy;
pub mod imaging;
pub mod ingest;
pub mod ocr;
pub mod pipeline;
pub mod raster;
pub mod roi;
pub mod synth;
pub mod trajectory;

pub use raster::GrayImage;

/// Rounds half away from zero to `decimals` places.
pub(crate) fn round_to(value: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (value * scale).round() / scale
}

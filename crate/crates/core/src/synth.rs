//! Ground-truth flights and rendered HUD frames.
//!
//! A simulated flight is stepped once per second on the sphere, then each
//! record is drawn onto a frame with the same bitmap font the built-in
//! recognizer matches against. At zero noise the extracted telemetry must
//! equal the displayed values exactly.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::export::{write_track_csv, ExportError};
use crate::geodesy::{destination, GeoPoint, MEAN_EARTH_RADIUS_M};
use crate::ingest::frame_file_name;
use crate::ocr::font;
use crate::ocr::parse::{ALTITUDE_RANGE_M, SPEED_RANGE_KMH};
use crate::raster::GrayImage;
use crate::roi::{RoiConfig, RoiError, RoiKind, RoiSpec};
use crate::trajectory::{Battery, BatteryUnit, FlightTrack, TelemetryRecord};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("field {label:?} does not fit: {reason}")]
    Layout { label: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error(transparent)]
    Roi(#[from] RoiError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlightSimParams {
    pub seed: u64,
    pub duration_s: u32,
    pub start_lat: f64,
    pub start_lon: f64,
    pub speed_min_kmh: u32,
    pub speed_max_kmh: u32,
    pub altitude_min_m: i32,
    pub altitude_max_m: i32,
    /// Standard deviation of the per-second heading change.
    pub heading_volatility_deg: f64,
    pub battery_start_pct: f64,
    pub battery_end_pct: f64,
    pub capacity_mah_per_s: f64,
}

impl Default for FlightSimParams {
    fn default() -> Self {
        Self {
            seed: 7,
            duration_s: 121,
            start_lat: 47.0,
            start_lon: 15.0,
            speed_min_kmh: 40,
            speed_max_kmh: 90,
            altitude_min_m: 80,
            altitude_max_m: 400,
            heading_volatility_deg: 8.0,
            battery_start_pct: 100.0,
            battery_end_pct: 62.0,
            capacity_mah_per_s: 8.5,
        }
    }
}

impl FlightSimParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidParams(m.to_string()));
        if self.duration_s < 2 {
            return bad("duration_s must be at least 2");
        }
        if GeoPoint::new(self.start_lat, self.start_lon).is_err() {
            return bad("start is not a valid coordinate");
        }
        let (lo, hi) = SPEED_RANGE_KMH;
        if self.speed_min_kmh > self.speed_max_kmh || (self.speed_max_kmh as f64) > hi || (self.speed_min_kmh as f64) < lo {
            return bad("speed bounds must satisfy 0 <= min <= max <= 500");
        }
        let (lo, hi) = ALTITUDE_RANGE_M;
        if self.altitude_min_m > self.altitude_max_m || (self.altitude_min_m as f64) < lo || (self.altitude_max_m as f64) > hi {
            return bad("altitude bounds must satisfy -500 <= min <= max <= 10000");
        }
        if !(self.heading_volatility_deg >= 0.0) {
            return bad("heading_volatility_deg must be non-negative");
        }
        for v in [self.battery_start_pct, self.battery_end_pct] {
            if !(0.0..=100.0).contains(&v) {
                return bad("battery percentages must lie in [0, 100]");
            }
        }
        if !(self.capacity_mah_per_s >= 0.0) {
            return bad("capacity_mah_per_s must be non-negative");
        }
        Ok(())
    }
}

/// Simulates a 1 Hz flight of `duration_s + 1` records (t = 0..=duration).
///
/// Airspeed is the integer km/h of the segment leaving each record, and the
/// position steps exactly that far along the sphere, so Haversine speeds
/// reproduce it. Altitude is whole metres; vertical speed is the climb to
/// the next record (0 on the last). Deterministic per seed.
pub fn simulate_flight(p: &FlightSimParams) -> Result<FlightTrack, SynthError> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let turn = Normal::new(0.0, p.heading_volatility_deg).expect("validated sigma");
    let accel = Normal::<f64>::new(0.0, 3.0).expect("constant sigma");
    let climb = Normal::<f64>::new(0.0, 1.0).expect("constant sigma");
    let (smin, smax) = (p.speed_min_kmh as i64, p.speed_max_kmh as i64);
    let (amin, amax) = (p.altitude_min_m as i64, p.altitude_max_m as i64);
    let n = p.duration_s as usize + 1;

    let mut heading: f64 = rng.random_range(0.0..360.0);
    let mut speed = rng.random_range(smin..=smax);
    let mut alt = rng.random_range(amin..=amax);
    let mut vz = 0i64;
    let mut pos = GeoPoint {
        lat: p.start_lat,
        lon: p.start_lon,
    };

    let mut states = Vec::with_capacity(n);
    for _ in 0..n {
        states.push((pos, speed, alt));
        pos = destination(pos, heading, speed as f64 / 3.6, MEAN_EARTH_RADIUS_M);
        heading = (heading + turn.sample(&mut rng)).rem_euclid(360.0);
        speed = (speed + accel.sample(&mut rng).round() as i64).clamp(smin, smax);
        vz = (vz + climb.sample(&mut rng).round() as i64).clamp(-5, 5);
        alt = (alt + vz).clamp(amin, amax);
    }

    let span = p.duration_s as f64;
    let records = (0..n)
        .map(|i| {
            let (pos, speed, alt) = states[i];
            let t = i as f64;
            let mut r = TelemetryRecord::new(t, i, pos.lat, pos.lon);
            r.altitude_m = Some(alt as f64);
            r.airspeed_kmh = Some(speed as f64);
            r.vspeed_ms = Some(states.get(i + 1).map_or(0, |next| next.2 - alt) as f64);
            let pct = p.battery_start_pct + (p.battery_end_pct - p.battery_start_pct) * t / span;
            r.battery = Some(Battery {
                value: pct.round(),
                unit: BatteryUnit::Percent,
            });
            r.capacity_mah = Some((p.capacity_mah_per_s * t).round());
            r
        })
        .collect();
    Ok(FlightTrack::new(records).expect("simulated records are ordered and valid"))
}

/// One HUD field: what to show and where its text starts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HudField {
    pub label: String,
    pub kind: RoiKind,
    /// Top-left of the field's ROI.
    pub anchor: [u32; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HudStyle {
    pub width: u32,
    pub height: u32,
    pub scale: u32,
    pub foreground: u8,
    pub background: u8,
    pub noise_sigma: f64,
    pub contrast: f64,
    pub noise_seed: u64,
    /// Draw coordinates without the decimal point (the ROI then carries `int_digits`).
    pub hide_decimal_point: bool,
    #[serde(rename = "field")]
    pub fields: Vec<HudField>,
}

impl Default for HudStyle {
    fn default() -> Self {
        let f = |label: &str, kind: RoiKind, x: u32, y: u32| HudField {
            label: label.into(),
            kind,
            anchor: [x, y],
        };
        Self {
            width: 640,
            height: 360,
            scale: 2,
            foreground: 235,
            background: 40,
            noise_sigma: 0.0,
            contrast: 1.0,
            noise_seed: 0,
            hide_decimal_point: false,
            fields: vec![
                f("lat", RoiKind::Latitude, 12, 296),
                f("lon", RoiKind::Longitude, 12, 322),
                f("alt", RoiKind::Altitude, 520, 12),
                f("speed", RoiKind::AirSpeed, 12, 12),
                f("vspeed", RoiKind::VerticalSpeed, 520, 38),
                f("battery", RoiKind::Battery, 520, 296),
                f("capacity", RoiKind::CapacityUsed, 520, 322),
            ],
        }
    }
}

/// Pixels between a field's ROI edge and its text.
pub const ROI_MARGIN: u32 = 4;

/// Longest text a field of `kind` can show; fixes the ROI width.
pub fn max_field_chars(kind: &RoiKind) -> usize {
    match kind {
        RoiKind::Latitude => "-90.000000".len(),
        RoiKind::Longitude => "-180.000000".len(),
        RoiKind::Altitude => "10000m".len(),
        RoiKind::AirSpeed => "500km/h".len(),
        RoiKind::VerticalSpeed => "-100.0".len(),
        RoiKind::Battery => "100%".len(),
        RoiKind::CapacityUsed => "999999".len(),
        RoiKind::Auxiliary(_) => 8,
    }
}

/// Digits before the decimal point of a coordinate.
fn int_digits(v: f64) -> u32 {
    let whole = v.abs().trunc() as u64;
    whole.to_string().len() as u32
}

/// The string a field shows for `rec`, or `None` if the record lacks it.
pub fn hud_text(rec: &TelemetryRecord, kind: &RoiKind, hide_decimal_point: bool) -> Option<String> {
    let coord = |v: f64| {
        let s = format!("{v:.6}");
        if hide_decimal_point {
            s.replace('.', "")
        } else {
            s
        }
    };
    Some(match kind {
        RoiKind::Latitude => coord(rec.lat),
        RoiKind::Longitude => coord(rec.lon),
        RoiKind::Altitude => format!("{:.0}m", rec.altitude_m?),
        RoiKind::AirSpeed => format!("{:.0}km/h", rec.airspeed_kmh?),
        RoiKind::VerticalSpeed => format!("{:.1}", rec.vspeed_ms?),
        RoiKind::Battery => match rec.battery? {
            Battery {
                value,
                unit: BatteryUnit::Percent,
            } => format!("{value:.0}%"),
            Battery {
                value,
                unit: BatteryUnit::Volts,
            } => format!("{value:.1}V"),
        },
        RoiKind::CapacityUsed => format!("{:.0}", rec.capacity_mah?),
        RoiKind::Auxiliary(name) => format!("{}", rec.aux.get(name)?),
    })
}

impl HudStyle {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidParams(m.to_string()));
        if self.width == 0 || self.height == 0 {
            return bad("frame dimensions must be positive");
        }
        if self.scale == 0 {
            return bad("scale must be positive");
        }
        if self.foreground == self.background {
            return bad("foreground and background must differ");
        }
        if !(self.noise_sigma >= 0.0) || !(self.contrast > 0.0) {
            return bad("noise_sigma must be >= 0 and contrast > 0");
        }
        Ok(())
    }

    /// ROI rectangle of `field`: fixed width for the kind's longest text plus margins.
    pub fn roi_rect(&self, field: &HudField) -> Result<[u32; 4], SynthError> {
        let (tw, th) = font::text_size(max_field_chars(&field.kind), self.scale);
        let rect = [field.anchor[0], field.anchor[1], tw + 2 * ROI_MARGIN, th + 2 * ROI_MARGIN];
        if rect[0] as u64 + rect[2] as u64 > self.width as u64 || rect[1] as u64 + rect[3] as u64 > self.height as u64 {
            return Err(SynthError::Layout {
                label: field.label.clone(),
                reason: format!("rect {rect:?} exceeds {}x{} frame", self.width, self.height),
            });
        }
        Ok(rect)
    }

    /// The ROI configuration matching this layout for a flight shaped like `rec`.
    pub fn roi_config(&self, rec: &TelemetryRecord) -> Result<RoiConfig, SynthError> {
        let mut cfg = RoiConfig::new(self.width, self.height);
        for f in &self.fields {
            let digits = match f.kind {
                RoiKind::Latitude => Some(int_digits(rec.lat)),
                RoiKind::Longitude => Some(int_digits(rec.lon)),
                _ => None,
            };
            cfg.rois.push(RoiSpec::new(f.label.clone(), f.kind.clone(), self.roi_rect(f)?, digits));
        }
        Ok(cfg)
    }
}

/// Draws every field of `rec` and returns the frame with its exact RoiConfig.
/// Noise and contrast from the style are applied, seeded by `noise_seed`
/// plus the record's frame index.
pub fn render_hud(rec: &TelemetryRecord, style: &HudStyle) -> Result<(GrayImage, RoiConfig), SynthError> {
    style.validate()?;
    let cfg = style.roi_config(rec)?;
    let mut img = GrayImage::filled(style.width, style.height, style.background);
    for (f, roi) in style.fields.iter().zip(&cfg.rois) {
        let Some(text) = hud_text(rec, &f.kind, style.hide_decimal_point) else {
            continue;
        };
        if text.chars().count() > max_field_chars(&f.kind) {
            return Err(SynthError::Layout {
                label: f.label.clone(),
                reason: format!("text {text:?} is longer than {} characters", max_field_chars(&f.kind)),
            });
        }
        if let Some(c) = text.chars().find(|c| !font::supports(*c)) {
            return Err(SynthError::Layout {
                label: f.label.clone(),
                reason: format!("font has no glyph for {c:?}"),
            });
        }
        let (x, y) = (roi.rect[0] + ROI_MARGIN, roi.rect[1] + ROI_MARGIN);
        font::draw_text(&mut img, x as i64, y as i64, &text, style.scale, style.foreground);
    }
    if style.noise_sigma > 0.0 || style.contrast != 1.0 {
        img = corrupt(&img, style.noise_sigma, style.contrast, style.noise_seed.wrapping_add(rec.frame_index as u64));
    }
    Ok((img, cfg))
}

/// `clamp(round((p - 128) * contrast + 128 + N(0, sigma)))` per pixel.
/// The identity when `sigma == 0` and `contrast == 1`.
pub fn corrupt(img: &GrayImage, sigma: f64, contrast: f64, seed: u64) -> GrayImage {
    assert!(sigma >= 0.0 && contrast > 0.0, "sigma must be >= 0 and contrast > 0");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).expect("sigma checked");
    let px: Vec<u8> = img
        .pixels()
        .iter()
        .map(|&p| {
            let n = if sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            ((p as f64 - 128.0) * contrast + 128.0 + n).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    GrayImage::from_raw(img.width(), img.height(), px).expect("same dimensions")
}

/// Displaces `k` distinct records by a uniform distance in `[min_m, max_m]`
/// along a uniform bearing. Returns the corrupted track and the displaced
/// record indices in ascending order.
pub fn inject_coordinate_errors(
    track: &FlightTrack,
    k: usize,
    min_m: f64,
    max_m: f64,
    seed: u64,
) -> Result<(FlightTrack, Vec<usize>), SynthError> {
    if k > track.len() {
        return Err(SynthError::InvalidParams(format!("cannot corrupt {k} of {} records", track.len())));
    }
    if !(min_m >= 0.0 && max_m >= min_m) {
        return Err(SynthError::InvalidParams("need 0 <= min_m <= max_m".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, track.len(), k).into_vec();
    picked.sort_unstable();
    let mut records = track.records().to_vec();
    for &i in &picked {
        let bearing = rng.random_range(0.0..360.0);
        let dist = if max_m > min_m { rng.random_range(min_m..=max_m) } else { min_m };
        let moved = destination(records[i].point(), bearing, dist, MEAN_EARTH_RADIUS_M);
        records[i].lat = moved.lat;
        records[i].lon = moved.lon;
    }
    let out = FlightTrack::new(records).map_err(|e| SynthError::InvalidParams(e.to_string()))?;
    Ok((out, picked))
}

/// Files produced by [`write_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub frames_dir: PathBuf,
    pub truth_csv: PathBuf,
    pub roi_config: PathBuf,
    pub frame_count: usize,
    pub fps: u32,
}

/// Renders `track` into `dir`: `frames/frame_NNNNNN.png` at `fps` frames per
/// second (each frame shows the latest record at or before its time),
/// `truth.csv` and `roi.toml`. Truth records are re-stamped with the frame
/// index that shows them. Frames are rendered on `workers` threads.
pub fn write_dataset(track: &FlightTrack, style: &HudStyle, dir: &Path, fps: u32, workers: usize) -> Result<Dataset, SynthError> {
    if fps == 0 {
        return Err(SynthError::InvalidParams("fps must be positive".into()));
    }
    let recs = track.records();
    let first = recs.first().ok_or(ExportError::Empty)?;
    style.validate()?;
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SynthError::Io { path, source }
    };
    let frames_dir = dir.join("frames");
    std::fs::create_dir_all(&frames_dir).map_err(io(&frames_dir))?;

    let t0 = first.t;
    let t_end = recs[recs.len() - 1].t;
    let frame_count = ((t_end - t0) * fps as f64).floor() as usize + 1;
    let record_at = |frame: usize| {
        let t = t0 + frame as f64 / fps as f64;
        recs.partition_point(|r| r.t <= t + 1e-9).saturating_sub(1)
    };

    let workers = workers.max(1).min(frame_count);
    let chunk = frame_count.div_ceil(workers);
    let results: Vec<Result<(), SynthError>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let frames_dir = &frames_dir;
                s.spawn(move || {
                    for frame in w * chunk..((w + 1) * chunk).min(frame_count) {
                        let mut rec = recs[record_at(frame)].clone();
                        rec.frame_index = frame;
                        let (img, _) = render_hud(&rec, style)?;
                        let path = frames_dir.join(frame_file_name(frame, "png"));
                        std::fs::write(&path, img.to_png()).map_err(io(&path))?;
                    }
                    Ok(())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("render worker panicked")).collect()
    });
    results.into_iter().collect::<Result<(), _>>()?;

    let truth: Vec<TelemetryRecord> = recs
        .iter()
        .map(|r| TelemetryRecord {
            frame_index: ((r.t - t0) * fps as f64).round() as usize,
            ..r.clone()
        })
        .collect();
    let truth = FlightTrack::new(truth).expect("re-stamped truth keeps its order");
    let truth_csv = dir.join("truth.csv");
    write_track_csv(&truth, &truth_csv)?;
    let roi_config = dir.join("roi.toml");
    style.roi_config(first)?.save(&roi_config)?;
    Ok(Dataset {
        frames_dir,
        truth_csv,
        roi_config,
        frame_count,
        fps,
    })
}

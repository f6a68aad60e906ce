//! Track assembly from per-frame readings and the two-stage spatial filter.
//!
//! Stage 1 is a rolling median / MAD test on latitude and longitude,
//! repeated on its survivors until nothing more is flagged, that yields a
//! baseline polyline free of gross OCR errors. Stage 2 is a UTM
//! buffer test: every survivor must lie within `buffer_m` of the polyline
//! through the *other* survivors. Offenders are removed worst-first and the
//! test is repeated until all remaining points pass.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::{self, median, GeoPoint};
use crate::ingest::SamplingPlan;
use crate::ocr::{OcrReading, ParseError, ParsedValue, Unit};
use crate::roi::RoiKind;

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("no frame produced both a latitude and a longitude")]
    EmptyTrack,
    #[error("timestamps must strictly increase (record {index}: {t0} then {t1})")]
    TimeOrder { index: usize, t0: f64, t1: f64 },
    #[error("record {index} has invalid coordinates ({lat}, {lon})")]
    InvalidCoordinate { index: usize, lat: f64, lon: f64 },
    #[error("invalid filter parameters: {0}")]
    InvalidParams(String),
}

/// Why a field of a frame has no value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum FieldError {
    /// Recognizer failure (no glyphs, engine error).
    Unreadable { reason: String },
    LowConfidence { confidence: f64, floor: f64 },
    Parse { cause: ParseError },
}

impl FieldError {
    /// Short code used in the CSV status column.
    pub fn code(&self) -> &'static str {
        match self {
            FieldError::Unreadable { .. } => "Unreadable",
            FieldError::LowConfidence { .. } => "LowConfidence",
            FieldError::Parse { cause } => match cause {
                ParseError::Empty => "Empty",
                ParseError::CharInvalid { .. } => "CharInvalid",
                ParseError::RangeInvalid { .. } => "RangeInvalid",
            },
        }
    }
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FieldError::Unreadable { reason } => write!(f, "unreadable: {reason}"),
            FieldError::LowConfidence { confidence, floor } => {
                write!(f, "confidence {confidence:.3} below floor {floor:.2}")
            }
            FieldError::Parse { cause } => write!(f, "{cause}"),
        }
    }
}

/// One ROI's outcome on one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldReading {
    pub label: String,
    pub kind: RoiKind,
    pub reading: OcrReading,
    pub value: Result<ParsedValue, FieldError>,
}

/// All ROI outcomes for one sampled frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReadings {
    pub frame_index: usize,
    pub t: f64,
    pub fields: Vec<FieldReading>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatteryUnit {
    Percent,
    Volts,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    pub value: f64,
    pub unit: BatteryUnit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldIssue {
    pub field: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub t: f64,
    pub frame_index: usize,
    pub lat: f64,
    pub lon: f64,
    pub altitude_m: Option<f64>,
    pub airspeed_kmh: Option<f64>,
    pub vspeed_ms: Option<f64>,
    pub battery: Option<Battery>,
    pub capacity_mah: Option<f64>,
    /// Auxiliary fields by ROI label.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub aux: BTreeMap<String, f64>,
    /// Fields that were configured but could not be read.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub issues: Vec<FieldIssue>,
}

impl TelemetryRecord {
    pub fn new(t: f64, frame_index: usize, lat: f64, lon: f64) -> Self {
        Self {
            t,
            frame_index,
            lat,
            lon,
            altitude_m: None,
            airspeed_kmh: None,
            vspeed_ms: None,
            battery: None,
            capacity_mah: None,
            aux: BTreeMap::new(),
            issues: Vec::new(),
        }
    }

    pub fn point(&self) -> GeoPoint {
        GeoPoint {
            lat: self.lat,
            lon: self.lon,
        }
    }
}

/// Time-ordered WGS84 track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightTrack {
    records: Vec<TelemetryRecord>,
}

impl FlightTrack {
    pub const CRS: &'static str = "EPSG:4326";

    /// Checks strictly increasing time and valid coordinates.
    pub fn new(records: Vec<TelemetryRecord>) -> Result<Self, TrajectoryError> {
        for (i, r) in records.iter().enumerate() {
            if GeoPoint::new(r.lat, r.lon).is_err() || r.t < 0.0 || !r.t.is_finite() {
                return Err(TrajectoryError::InvalidCoordinate {
                    index: i,
                    lat: r.lat,
                    lon: r.lon,
                });
            }
        }
        for (i, w) in records.windows(2).enumerate() {
            if !(w[1].t > w[0].t) {
                return Err(TrajectoryError::TimeOrder {
                    index: i,
                    t0: w[0].t,
                    t1: w[1].t,
                });
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[TelemetryRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<TelemetryRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn points(&self) -> Vec<GeoPoint> {
        self.records.iter().map(TelemetryRecord::point).collect()
    }

    pub fn timed_points(&self) -> Vec<(f64, GeoPoint)> {
        self.records.iter().map(|r| (r.t, r.point())).collect()
    }

    /// Sub-track of the records at `keep` positions (kept in order).
    fn select(&self, keep: &[usize]) -> Self {
        Self {
            records: keep.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum DropReason {
    /// Scheduled by the sampling plan but never read.
    NotProcessed,
    DuplicateFrame,
    NoCoordinateRois,
    Latitude { cause: FieldError },
    Longitude { cause: FieldError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedFrame {
    pub frame_index: usize,
    pub t: f64,
    #[serde(flatten)]
    pub reason: DropReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DropReport {
    pub frames_in: usize,
    pub records_out: usize,
    pub dropped: Vec<DroppedFrame>,
    /// Unreadable non-coordinate fields on frames that did enter the track.
    pub field_issues: usize,
}

fn coordinate_of(frame: &FrameReadings, kind: RoiKind) -> Option<&Result<ParsedValue, FieldError>> {
    frame.fields.iter().find(|f| f.kind == kind).map(|f| &f.value)
}

/// Builds the track: a frame becomes a record iff both latitude and
/// longitude parsed; other fields attach when available.
pub fn assemble_track(frames: &[FrameReadings], plan: &SamplingPlan) -> Result<(FlightTrack, DropReport), TrajectoryError> {
    let mut report = DropReport {
        frames_in: frames.len(),
        ..Default::default()
    };
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for frame in frames {
        let drop = |reason| DroppedFrame {
            frame_index: frame.frame_index,
            t: frame.t,
            reason,
        };
        if !seen.insert(frame.frame_index) {
            report.dropped.push(drop(DropReason::DuplicateFrame));
            continue;
        }
        let (lat, lon) = match (
            coordinate_of(frame, RoiKind::Latitude),
            coordinate_of(frame, RoiKind::Longitude),
        ) {
            (None, _) | (_, None) => {
                report.dropped.push(drop(DropReason::NoCoordinateRois));
                continue;
            }
            (Some(Err(e)), _) => {
                report.dropped.push(drop(DropReason::Latitude { cause: e.clone() }));
                continue;
            }
            (_, Some(Err(e))) => {
                report.dropped.push(drop(DropReason::Longitude { cause: e.clone() }));
                continue;
            }
            (Some(Ok(lat)), Some(Ok(lon))) => (lat.value, lon.value),
        };
        let mut rec = TelemetryRecord::new(frame.t, frame.frame_index, lat, lon);
        for field in &frame.fields {
            let value = match &field.value {
                Ok(v) => *v,
                Err(e) => {
                    rec.issues.push(FieldIssue {
                        field: field.label.clone(),
                        error: e.code().to_string(),
                    });
                    continue;
                }
            };
            match &field.kind {
                RoiKind::Latitude | RoiKind::Longitude => {}
                RoiKind::Altitude => rec.altitude_m = Some(value.value),
                RoiKind::AirSpeed => rec.airspeed_kmh = Some(value.value),
                RoiKind::VerticalSpeed => rec.vspeed_ms = Some(value.value),
                RoiKind::CapacityUsed => rec.capacity_mah = Some(value.value),
                RoiKind::Battery => {
                    rec.battery = Some(Battery {
                        value: value.value,
                        unit: if value.unit == Unit::Volts {
                            BatteryUnit::Volts
                        } else {
                            BatteryUnit::Percent
                        },
                    })
                }
                RoiKind::Auxiliary(_) => {
                    rec.aux.insert(field.label.clone(), value.value);
                }
            }
        }
        report.field_issues += rec.issues.len();
        records.push(rec);
    }
    for (&index, &t) in plan.frame_indices.iter().zip(&plan.frame_times) {
        if !seen.contains(&index) {
            report.dropped.push(DroppedFrame {
                frame_index: index,
                t: t as f64,
                reason: DropReason::NotProcessed,
            });
        }
    }
    if records.is_empty() {
        return Err(TrajectoryError::EmptyTrack);
    }
    records.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.frame_index.cmp(&b.frame_index)));
    // equal timestamps on different frames: keep the first
    let mut deduped: Vec<TelemetryRecord> = Vec::with_capacity(records.len());
    for rec in records {
        if deduped.last().is_some_and(|p| p.t == rec.t) {
            report.dropped.push(DroppedFrame {
                frame_index: rec.frame_index,
                t: rec.t,
                reason: DropReason::DuplicateFrame,
            });
        } else {
            deduped.push(rec);
        }
    }
    report.dropped.sort_by_key(|d| d.frame_index);
    report.records_out = deduped.len();
    Ok((FlightTrack::new(deduped)?, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterParams {
    /// Centered rolling window, in points (odd).
    pub median_window: usize,
    pub mad_multiplier: f64,
    /// Minimum deviation threshold, degrees.
    pub mad_floor_deg: f64,
    pub buffer_m: f64,
    pub utm_zone: Option<u8>,
    /// Re-admit stage-1 rejects that lie within the buffer of the final baseline.
    pub revalidate_rejected: bool,
    /// Repeat the median pass on its survivors until it converges.
    pub iterate_median: bool,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            median_window: 31,
            mad_multiplier: 6.0,
            mad_floor_deg: 0.015,
            buffer_m: 2000.0,
            utm_zone: None,
            revalidate_rejected: false,
            iterate_median: true,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        let bad = |m: String| Err(TrajectoryError::InvalidParams(m));
        if self.median_window < 3 || self.median_window.is_multiple_of(2) {
            return bad(format!("median_window must be odd and >= 3, got {}", self.median_window));
        }
        if !(self.mad_multiplier > 0.0) {
            return bad("mad_multiplier must be positive".into());
        }
        if !(self.mad_floor_deg >= 0.0) {
            return bad("mad_floor_deg must be non-negative".into());
        }
        if !(self.buffer_m >= 0.0) {
            return bad("buffer_m must be non-negative".into());
        }
        if let Some(z) = self.utm_zone {
            if !(1..=60).contains(&z) {
                return bad(format!("utm_zone must be in 1..=60, got {z}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum RemovalReason {
    Median {
        dlat_deg: f64,
        dlon_deg: f64,
        lat_threshold_deg: f64,
        lon_threshold_deg: f64,
    },
    Buffer {
        distance_m: f64,
    },
    /// Too far from the projection zone to be measured.
    Unprojectable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedPoint {
    pub t: f64,
    pub frame_index: usize,
    pub lat: f64,
    pub lon: f64,
    #[serde(flatten)]
    pub reason: RemovalReason,
}

impl RemovedPoint {
    fn new(rec: &TelemetryRecord, reason: RemovalReason) -> Self {
        Self {
            t: rec.t,
            frame_index: rec.frame_index,
            lat: rec.lat,
            lon: rec.lon,
            reason,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub clean: FlightTrack,
    pub removed: Vec<RemovedPoint>,
}

fn mad_test(values: &[f64], i: usize, half: usize, k: f64, floor: f64) -> (f64, f64) {
    let lo = i.saturating_sub(half);
    let hi = (i + half + 1).min(values.len());
    let mut window = values[lo..hi].to_vec();
    let med = median(&mut window);
    let mut dev: Vec<f64> = values[lo..hi].iter().map(|v| (v - med).abs()).collect();
    let mad = median(&mut dev);
    ((values[i] - med).abs(), (k * mad).max(floor))
}

fn median_pass(track: &FlightTrack, p: &FilterParams) -> (Vec<usize>, Vec<RemovedPoint>) {
    let lats: Vec<f64> = track.records.iter().map(|r| r.lat).collect();
    let lons: Vec<f64> = track.records.iter().map(|r| r.lon).collect();
    let half = p.median_window / 2;
    let mut keep = Vec::new();
    let mut removed = Vec::new();
    for (i, rec) in track.records.iter().enumerate() {
        let (dlat, tlat) = mad_test(&lats, i, half, p.mad_multiplier, p.mad_floor_deg);
        let (dlon, tlon) = mad_test(&lons, i, half, p.mad_multiplier, p.mad_floor_deg);
        if dlat > tlat || dlon > tlon {
            removed.push(RemovedPoint::new(
                rec,
                RemovalReason::Median {
                    dlat_deg: dlat,
                    dlon_deg: dlon,
                    lat_threshold_deg: tlat,
                    lon_threshold_deg: tlon,
                },
            ));
        } else {
            keep.push(i);
        }
    }
    (keep, removed)
}

/// Stage 1: rolling median / MAD outlier rejection on each axis.
///
/// With `iterate_median`, the pass is repeated on the survivors until it
/// flags nothing, so windows dominated by outliers (inflated MAD) are
/// cleaned progressively. Removed points are reported in time order.
pub fn median_outlier_filter(track: &FlightTrack, p: &FilterParams) -> FilterOutcome {
    let mut current = track.clone();
    let mut removed = Vec::new();
    loop {
        let (keep, flagged) = median_pass(&current, p);
        if flagged.is_empty() {
            break;
        }
        removed.extend(flagged);
        current = current.select(&keep);
        if !p.iterate_median || current.is_empty() {
            break;
        }
    }
    removed.sort_by(|a, b| a.t.total_cmp(&b.t));
    FilterOutcome { clean: current, removed }
}

/// Minimum Euclidean distance from `pt` to the polyline (projection clamped
/// to each segment). A single vertex gives the radial distance; an empty
/// polyline gives infinity.
pub fn point_to_polyline_distance(pt: [f64; 2], polyline: &[[f64; 2]]) -> f64 {
    match polyline {
        [] => f64::INFINITY,
        [only] => (pt[0] - only[0]).hypot(pt[1] - only[1]),
        _ => polyline
            .windows(2)
            .map(|s| point_to_segment(pt, s[0], s[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

fn point_to_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let (fx, fy) = (a[0] + t * dx, a[1] + t * dy);
    (p[0] - fx).hypot(p[1] - fy)
}

/// UTM coordinates of each record in one shared zone, `None` where the
/// projection is out of range.
fn project_records(records: &[&TelemetryRecord], zone: Option<u8>) -> Vec<Option<[f64; 2]>> {
    let points: Vec<GeoPoint> = records.iter().map(|r| r.point()).collect();
    if points.is_empty() {
        return Vec::new();
    }
    let (zone, hemisphere) = geodesy::zone_for_points(&points, zone);
    points
        .iter()
        .map(|&p| geodesy::utm_forward_in(p, zone, hemisphere).ok().map(|q| q.xy()))
        .collect()
}

/// Distance of `candidate` to the polyline of `baseline`, skipping the
/// baseline vertex that is the candidate itself (same frame).
fn leave_one_out_distance(candidate: usize, cand_frames: &[usize], cand_xy: &[Option<[f64; 2]>], base_frames: &[usize], base_xy: &[Option<[f64; 2]>]) -> Option<f64> {
    let pt = cand_xy[candidate]?;
    let line: Vec<[f64; 2]> = base_frames
        .iter()
        .zip(base_xy)
        .filter(|(f, _)| **f != cand_frames[candidate])
        .filter_map(|(_, xy)| *xy)
        .collect();
    if line.is_empty() {
        return Some(0.0);
    }
    Some(point_to_polyline_distance(pt, &line))
}

/// Single-pass buffer test of `candidates` against the `baseline` polyline,
/// both projected to a common UTM zone (median longitude of the union unless
/// overridden). A candidate that is itself a baseline vertex is measured
/// against the polyline without that vertex. Boundary is inclusive.
pub fn utm_buffer_filter(candidates: &FlightTrack, baseline: &FlightTrack, p: &FilterParams) -> FilterOutcome {
    let all: Vec<&TelemetryRecord> = baseline.records.iter().chain(&candidates.records).collect();
    let xy = project_records(&all, p.utm_zone);
    let (base_xy, cand_xy) = xy.split_at(baseline.len());
    let base_frames: Vec<usize> = baseline.records.iter().map(|r| r.frame_index).collect();
    let cand_frames: Vec<usize> = candidates.records.iter().map(|r| r.frame_index).collect();
    let mut keep = Vec::new();
    let mut removed = Vec::new();
    for (i, rec) in candidates.records.iter().enumerate() {
        match leave_one_out_distance(i, &cand_frames, cand_xy, &base_frames, base_xy) {
            Some(d) if d <= p.buffer_m => keep.push(i),
            Some(d) => removed.push(RemovedPoint::new(rec, RemovalReason::Buffer { distance_m: d })),
            None => removed.push(RemovedPoint::new(rec, RemovalReason::Unprojectable)),
        }
    }
    FilterOutcome {
        clean: candidates.select(&keep),
        removed,
    }
}

/// Result of [`two_stage_filter`].
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageOutcome {
    pub clean: FlightTrack,
    pub stage1_removed: Vec<RemovedPoint>,
    pub stage2_removed: Vec<RemovedPoint>,
    /// Stage-1 rejects re-admitted by `revalidate_rejected`.
    pub readmitted: usize,
}

impl TwoStageOutcome {
    pub fn removed_frames(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .stage1_removed
            .iter()
            .chain(&self.stage2_removed)
            .map(|r| r.frame_index)
            .collect();
        v.sort_unstable();
        v
    }
}

/// Median / MAD baseline followed by the iterative leave-one-out buffer test.
pub fn two_stage_filter(track: &FlightTrack, p: &FilterParams) -> Result<TwoStageOutcome, TrajectoryError> {
    p.validate()?;
    let stage1 = median_outlier_filter(track, p);
    let survivors = stage1.clean;

    let refs: Vec<&TelemetryRecord> = survivors.records.iter().collect();
    let xy = project_records(&refs, p.utm_zone);
    let frames: Vec<usize> = survivors.records.iter().map(|r| r.frame_index).collect();
    let mut alive: Vec<usize> = Vec::new();
    let mut stage2_removed = Vec::new();
    for (i, rec) in survivors.records.iter().enumerate() {
        if xy[i].is_some() {
            alive.push(i);
        } else {
            stage2_removed.push((i, RemovedPoint::new(rec, RemovalReason::Unprojectable)));
        }
    }
    loop {
        let line_frames: Vec<usize> = alive.iter().map(|&i| frames[i]).collect();
        let line_xy: Vec<Option<[f64; 2]>> = alive.iter().map(|&i| xy[i]).collect();
        let worst = (0..alive.len())
            .map(|k| {
                let d = leave_one_out_distance(k, &line_frames, &line_xy, &line_frames, &line_xy)
                    .expect("alive points are projectable");
                (k, d)
            })
            .filter(|&(_, d)| d > p.buffer_m)
            .max_by(|a, b| a.1.total_cmp(&b.1));
        let Some((k, d)) = worst else { break };
        let i = alive.remove(k);
        stage2_removed.push((i, RemovedPoint::new(&survivors.records[i], RemovalReason::Buffer { distance_m: d })));
    }
    stage2_removed.sort_by_key(|(i, _)| *i);
    let mut clean = survivors.select(&alive);
    let mut stage1_removed = stage1.removed;
    let mut readmitted = 0;

    if p.revalidate_rejected && !stage1_removed.is_empty() && !clean.is_empty() {
        let rejected: Vec<&TelemetryRecord> = stage1_removed
            .iter()
            .map(|r| {
                track
                    .records
                    .iter()
                    .find(|rec| rec.frame_index == r.frame_index && rec.t == r.t)
                    .expect("removed points come from the track")
            })
            .collect();
        let all: Vec<&TelemetryRecord> = clean.records.iter().chain(rejected.iter().copied()).collect();
        let all_xy = project_records(&all, p.utm_zone);
        let line: Vec<[f64; 2]> = all_xy[..clean.len()].iter().filter_map(|x| *x).collect();
        let mut back = Vec::new();
        stage1_removed = stage1_removed
            .into_iter()
            .zip(&all_xy[clean.len()..])
            .filter_map(|(removed, xy)| match xy {
                Some(pt) if point_to_polyline_distance(*pt, &line) <= p.buffer_m => {
                    back.push(removed.frame_index);
                    None
                }
                _ => Some(removed),
            })
            .collect();
        readmitted = back.len();
        let mut records = clean.records;
        records.extend(rejected.into_iter().filter(|r| back.contains(&r.frame_index)).cloned());
        records.sort_by(|a, b| a.t.total_cmp(&b.t));
        clean = FlightTrack { records };
    }

    Ok(TwoStageOutcome {
        clean,
        stage1_removed,
        stage2_removed: stage2_removed.into_iter().map(|(_, r)| r).collect(),
        readmitted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesy::{destination, utm_forward, MEAN_EARTH_RADIUS_M};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn track_from(points: &[(f64, f64)]) -> FlightTrack {
        FlightTrack::new(
            points
                .iter()
                .enumerate()
                .map(|(i, &(lat, lon))| TelemetryRecord::new(i as f64, i, lat, lon))
                .collect(),
        )
        .unwrap()
    }

    fn frames_of(t: &FlightTrack) -> Vec<usize> {
        t.records().iter().map(|r| r.frame_index).collect()
    }

    #[test]
    fn polyline_distance_examples() {
        let seg = [[-1.0, 0.0], [1.0, 0.0]];
        assert_eq!(point_to_polyline_distance([0.0, 1.0], &seg), 1.0);
        assert_eq!(point_to_polyline_distance([3.0, 0.0], &[[0.0, 0.0], [1.0, 0.0]]), 2.0);
        assert_eq!(point_to_polyline_distance([3.0, 4.0], &[[0.0, 0.0]]), 5.0);
        assert_eq!(point_to_polyline_distance([0.0, 0.0], &[]), f64::INFINITY);
    }

    #[test]
    fn polyline_distance_matches_dense_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let line: Vec<[f64; 2]> = (0..4)
                .map(|_| [rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0)])
                .collect();
            let pt = [rng.random_range(-150.0..150.0), rng.random_range(-150.0..150.0)];
            let n = 100_000 / 3;
            let mut brute = f64::INFINITY;
            for s in line.windows(2) {
                for k in 0..=n {
                    let t = k as f64 / n as f64;
                    let q = [s[0][0] + t * (s[1][0] - s[0][0]), s[0][1] + t * (s[1][1] - s[0][1])];
                    brute = brute.min((pt[0] - q[0]).hypot(pt[1] - q[1]));
                }
            }
            let exact = point_to_polyline_distance(pt, &line);
            assert!(exact <= brute + 1e-9);
            assert!((brute - exact) / exact.max(1e-9) < 1e-6 || brute - exact < 1e-6, "{exact} vs {brute}");
        }
    }

    #[test]
    fn linear_track_keeps_everything() {
        let pts: Vec<_> = (0..10).map(|i| (47.0 + i as f64 * 0.0008, 15.0 + i as f64 * 0.0005)).collect();
        let out = median_outlier_filter(&track_from(&pts), &FilterParams::default());
        assert!(out.removed.is_empty());
        assert_eq!(out.clean.len(), 10);
    }

    #[test]
    fn displaced_point_is_removed() {
        let mut pts: Vec<_> = (0..10).map(|i| (47.0 + i as f64 * 0.0008, 15.0)).collect();
        pts[4].0 += 1.0;
        let out = median_outlier_filter(&track_from(&pts), &FilterParams::default());
        assert_eq!(out.removed.len(), 1);
        assert_eq!(out.removed[0].frame_index, 4);
    }

    fn straight_baseline() -> FlightTrack {
        // due north along the zone-33 central meridian
        let start = GeoPoint { lat: 47.0, lon: 15.0 };
        let pts: Vec<_> = (0..11)
            .map(|i| {
                let p = destination(start, 0.0, i as f64 * 500.0, MEAN_EARTH_RADIUS_M);
                (p.lat, p.lon)
            })
            .collect();
        track_from(&pts)
    }

    /// Point whose UTM position is `offset_m` east of baseline vertex 5.
    fn east_of_middle(baseline: &FlightTrack, offset_m: f64) -> FlightTrack {
        let mid = utm_forward(baseline.records()[5].point(), 33).unwrap();
        // invert the projection numerically along the parallel
        let target = mid.easting + offset_m;
        let (mut lo, mut hi) = (15.0, 16.0);
        for _ in 0..200 {
            let m = (lo + hi) / 2.0;
            let e = utm_forward(GeoPoint { lat: baseline.records()[5].lat, lon: m }, 33).unwrap().easting;
            if e < target {
                lo = m
            } else {
                hi = m
            }
        }
        let rec = TelemetryRecord::new(100.0, 100, baseline.records()[5].lat, (lo + hi) / 2.0);
        FlightTrack::new(vec![rec]).unwrap()
    }

    #[test]
    fn buffer_examples() {
        let base = straight_baseline();
        let p = FilterParams {
            utm_zone: Some(33),
            ..Default::default()
        };
        let on_vertex = FlightTrack::new(vec![TelemetryRecord::new(50.0, 50, base.records()[3].lat, 15.0)]).unwrap();
        assert_eq!(utm_buffer_filter(&on_vertex, &base, &p).clean.len(), 1);
        assert_eq!(utm_buffer_filter(&east_of_middle(&base, 3000.0), &base, &p).removed.len(), 1);
        assert_eq!(utm_buffer_filter(&east_of_middle(&base, 1999.999), &base, &p).clean.len(), 1);
        assert_eq!(utm_buffer_filter(&east_of_middle(&base, 2000.01), &base, &p).clean.len(), 0);
    }

    #[test]
    fn inclusive_boundary_exact() {
        let base = straight_baseline();
        let cand = east_of_middle(&base, 2500.0);
        let d = match &utm_buffer_filter(&cand, &base, &FilterParams { buffer_m: 0.0, ..Default::default() }).removed[0].reason {
            RemovalReason::Buffer { distance_m } => *distance_m,
            other => panic!("{other:?}"),
        };
        let p = FilterParams { buffer_m: d, ..Default::default() };
        assert_eq!(utm_buffer_filter(&cand, &base, &p).clean.len(), 1);
    }

    #[test]
    fn buffer_extremes() {
        let base = straight_baseline();
        let cand = east_of_middle(&base, 40_000.0);
        let huge = FilterParams {
            buffer_m: f64::MAX,
            ..Default::default()
        };
        assert!(utm_buffer_filter(&cand, &base, &huge).removed.is_empty());
        let zero = FilterParams {
            buffer_m: 0.0,
            ..Default::default()
        };
        // baseline vertices sit on the chord of their neighbours (straight line)
        let out = utm_buffer_filter(&base, &base, &zero);
        assert!(out.clean.len() >= 9, "kept {}", out.clean.len());
    }

    #[test]
    fn single_point_baseline_is_radial() {
        let base = FlightTrack::new(vec![TelemetryRecord::new(0.0, 0, 47.0, 15.0)]).unwrap();
        let near = FlightTrack::new(vec![TelemetryRecord::new(1.0, 1, 47.01, 15.0)]).unwrap();
        let out = utm_buffer_filter(&near, &base, &FilterParams::default());
        assert_eq!(out.clean.len(), 1);
        let far = FlightTrack::new(vec![TelemetryRecord::new(1.0, 1, 47.03, 15.0)]).unwrap();
        assert_eq!(utm_buffer_filter(&far, &base, &FilterParams::default()).clean.len(), 0);
    }

    /// Smooth ~67 km/h track with `n` points at 1 s spacing.
    fn smooth_track(seed: u64, n: usize) -> Vec<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = GeoPoint { lat: 47.0, lon: 15.0 };
        let mut heading: f64 = rng.random_range(0.0..360.0);
        (0..n)
            .map(|_| {
                let out = (p.lat, p.lon);
                heading += rng.random_range(-4.0..4.0);
                p = destination(p, heading, 18.6, MEAN_EARTH_RADIUS_M);
                out
            })
            .collect()
    }

    fn corrupt(points: &mut [(f64, f64)], seed: u64, k: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut idx: Vec<usize> = (0..points.len()).collect();
        for i in 0..k {
            let j = rng.random_range(i..idx.len());
            idx.swap(i, j);
        }
        let mut chosen = idx[..k].to_vec();
        chosen.sort_unstable();
        for &i in &chosen {
            let g = GeoPoint { lat: points[i].0, lon: points[i].1 };
            let q = destination(g, rng.random_range(0.0..360.0), rng.random_range(2500.0..50_000.0), MEAN_EARTH_RADIUS_M);
            points[i] = (q.lat, q.lon);
        }
        chosen
    }

    #[test]
    fn two_stage_removes_exactly_injected() {
        for seed in 0..5 {
            let mut pts = smooth_track(seed, 122);
            let bad = corrupt(&mut pts, seed, 40);
            let out = two_stage_filter(&track_from(&pts), &FilterParams::default()).unwrap();
            assert_eq!(out.removed_frames(), bad, "seed {seed}");
            assert_eq!(out.clean.len(), 82);
        }
    }

    #[test]
    fn iterating_stage_one_recovers_masked_outlier() {
        // points 6 and 8 inflate the MAD around point 7 (MAD 0.0284°,
        // threshold 0.17°); once they are gone point 7 fails at 0.0192°
        let mut pts: Vec<(f64, f64)> = (0..15).map(|i| (46.5 + 0.0008 * i as f64, 15.0)).collect();
        pts[6].0 += 1.0;
        pts[7].0 += 0.03;
        pts[8].0 -= 1.0;
        let once = FilterParams {
            median_window: 5,
            iterate_median: false,
            ..Default::default()
        };
        let removed = |p: &FilterParams| -> Vec<usize> {
            median_outlier_filter(&track_from(&pts), p)
                .removed
                .iter()
                .map(|r| r.frame_index)
                .collect()
        };
        assert_eq!(removed(&once), [6, 8]);
        assert_eq!(removed(&FilterParams { iterate_median: true, ..once }), [6, 7, 8]);
    }

    #[test]
    fn revalidation_readmits_nearby_rejects() {
        // a point displaced 0.025° in latitude (about 2.8 km) fails stage 1
        // and stays out; with a 5 km buffer it is re-admitted
        let mut pts = smooth_track(3, 40);
        pts[20].0 += 0.025;
        let p = FilterParams {
            revalidate_rejected: true,
            buffer_m: 5000.0,
            ..Default::default()
        };
        let out = two_stage_filter(&track_from(&pts), &p).unwrap();
        assert_eq!(out.readmitted, 1);
        assert_eq!(out.clean.len(), 40);
        let strict = two_stage_filter(&track_from(&pts), &FilterParams::default()).unwrap();
        assert_eq!(strict.clean.len(), 39);
    }

    fn reading(kind: RoiKind, value: Result<f64, FieldError>) -> FieldReading {
        FieldReading {
            label: kind.to_string(),
            kind,
            reading: OcrReading::empty("x"),
            value: value.map(|v| ParsedValue { value: v, unit: Unit::Unitless }),
        }
    }

    fn plan_for(n: usize) -> SamplingPlan {
        SamplingPlan {
            interval_s: 1,
            timestamps: (0..n as u64).collect(),
            frame_indices: (0..n).collect(),
            frame_times: (0..n as u64).collect(),
        }
    }

    #[test]
    fn assembly_drops_and_duplicates() {
        let unreadable = FieldError::Unreadable { reason: "no glyphs".into() };
        let frames = vec![
            FrameReadings {
                frame_index: 0,
                t: 0.0,
                fields: vec![
                    reading(RoiKind::Latitude, Ok(47.0)),
                    reading(RoiKind::Longitude, Ok(15.0)),
                    reading(RoiKind::Altitude, Err(unreadable.clone())),
                ],
            },
            FrameReadings {
                frame_index: 1,
                t: 1.0,
                fields: vec![
                    reading(RoiKind::Latitude, Ok(47.0)),
                    reading(RoiKind::Longitude, Err(unreadable.clone())),
                ],
            },
            FrameReadings {
                frame_index: 0,
                t: 0.0,
                fields: vec![reading(RoiKind::Latitude, Ok(1.0)), reading(RoiKind::Longitude, Ok(1.0))],
            },
        ];
        let (track, report) = assemble_track(&frames, &plan_for(3)).unwrap();
        assert_eq!(track.len(), 1);
        assert_eq!(track.records()[0].lat, 47.0);
        assert_eq!(track.records()[0].issues[0].error, "Unreadable");
        let reasons: Vec<_> = report.dropped.iter().map(|d| (d.frame_index, d.reason.clone())).collect();
        assert_eq!(
            reasons,
            vec![
                (0, DropReason::DuplicateFrame),
                (1, DropReason::Longitude { cause: unreadable }),
                (2, DropReason::NotProcessed),
            ]
        );
        assert_eq!(report.field_issues, 1);
    }

    #[test]
    fn all_parseable_frames_enter() {
        let frames: Vec<_> = (0..122)
            .map(|i| FrameReadings {
                frame_index: i * 30,
                t: i as f64,
                fields: vec![
                    reading(RoiKind::Latitude, Ok(47.0 + i as f64 * 1e-4)),
                    reading(RoiKind::Longitude, Ok(15.0)),
                ],
            })
            .collect();
        let mut plan = plan_for(122);
        plan.frame_indices = (0..122).map(|i| i * 30).collect();
        let (track, report) = assemble_track(&frames, &plan).unwrap();
        assert_eq!(track.len(), 122);
        assert!(report.dropped.is_empty());
        assert_eq!(assemble_track(&[], &plan).unwrap_err(), TrajectoryError::EmptyTrack);
    }

    proptest! {
        #[test]
        fn filters_partition_input(seed in any::<u64>(), k in 0usize..30) {
            let mut pts = smooth_track(seed, 60);
            corrupt(&mut pts, seed, k);
            let track = track_from(&pts);
            let out = two_stage_filter(&track, &FilterParams::default()).unwrap();
            let mut all: Vec<usize> = frames_of(&out.clean);
            prop_assert!(all.windows(2).all(|w| w[0] < w[1]));
            all.extend(out.removed_frames());
            all.sort_unstable();
            prop_assert_eq!(all, (0..60).collect::<Vec<_>>());
        }

        #[test]
        fn median_filter_is_shift_invariant(seed in any::<u64>(), k in 0usize..15, dlat in -5.0f64..5.0, dlon in -5.0f64..5.0) {
            let mut pts = smooth_track(seed, 50);
            corrupt(&mut pts, seed, k);
            // shift by multiples of 2^-10 degrees so the translation is exact in f64
            let (dlat, dlon) = ((dlat * 1024.0).round() / 1024.0, (dlon * 1024.0).round() / 1024.0);
            let shifted: Vec<_> = pts.iter().map(|&(a, b)| (a + dlat, b + dlon)).collect();
            let p = FilterParams::default();
            let a: Vec<usize> = median_outlier_filter(&track_from(&pts), &p).removed.iter().map(|r| r.frame_index).collect();
            let b: Vec<usize> = median_outlier_filter(&track_from(&shifted), &p).removed.iter().map(|r| r.frame_index).collect();
            prop_assert_eq!(a, b);
        }
    }
}

//! Sampling-rate experiments, statistics and cross-method comparison.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::{self, DistanceMethod, GeodesyError, MethodConstants};
use crate::round_to;
use crate::trajectory::{two_stage_filter, FilterParams, FlightTrack, RemovedPoint, TrajectoryError};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("empty input")]
    EmptyInput,
    #[error("resampling at {interval_s} s left no records")]
    EmptyTrack { interval_s: u32 },
    #[error("the two series share no timestamps")]
    NoAlignment,
    #[error("no record carries an altitude")]
    NoAltitudeData,
    #[error("invalid interval {0}")]
    InvalidInterval(u32),
    #[error("clean count {clean} exceeds raw count {raw}")]
    CountMismatch { raw: usize, clean: usize },
    #[error(transparent)]
    Geodesy(#[from] GeodesyError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

/// Records whose timestamp is a whole multiple of `interval_s`.
pub fn resample(track: &FlightTrack, interval_s: u32) -> Result<FlightTrack, AnalysisError> {
    if interval_s == 0 {
        return Err(AnalysisError::InvalidInterval(interval_s));
    }
    let keep: Vec<_> = track
        .records()
        .iter()
        .filter(|r| r.t.fract() == 0.0 && (r.t as u64).is_multiple_of(interval_s as u64))
        .cloned()
        .collect();
    if keep.is_empty() {
        return Err(AnalysisError::EmptyTrack { interval_s });
    }
    Ok(FlightTrack::new(keep)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Retention {
    pub retention_pct: f64,
    pub removal_pct: f64,
}

/// Retention `100·clean/raw` rounded to 0.1, and its complement.
pub fn retention_stats(raw_n: usize, clean_n: usize) -> Result<Retention, AnalysisError> {
    if raw_n == 0 {
        return Err(AnalysisError::EmptyInput);
    }
    if clean_n > raw_n {
        return Err(AnalysisError::CountMismatch {
            raw: raw_n,
            clean: clean_n,
        });
    }
    let retention_pct = round_to(100.0 * clean_n as f64 / raw_n as f64, 1);
    Ok(Retention {
        retention_pct,
        removal_pct: round_to(100.0 - retention_pct, 1),
    })
}

/// `100·(1 − n/n_base)` rounded to 0.1.
pub fn reduction_vs_baseline(n: usize, n_base: usize) -> Result<f64, AnalysisError> {
    if n_base == 0 {
        return Err(AnalysisError::EmptyInput);
    }
    Ok(round_to(100.0 * (1.0 - n as f64 / n_base as f64), 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmseResult {
    pub rmse: f64,
    /// Population standard deviation of the aligned differences.
    pub sigma: f64,
    pub n: usize,
}

/// RMSE between two `(t, value)` series over their common timestamps.
pub fn rmse(a: &[(f64, f64)], b: &[(f64, f64)]) -> Result<RmseResult, AnalysisError> {
    let diffs: Vec<f64> = a
        .iter()
        .filter_map(|&(t, va)| b.iter().find(|&&(tb, _)| tb == t).map(|&(_, vb)| va - vb))
        .collect();
    if diffs.is_empty() {
        return Err(AnalysisError::NoAlignment);
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    Ok(RmseResult {
        rmse: (diffs.iter().map(|d| d * d).sum::<f64>() / n).sqrt(),
        sigma: (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt(),
        n: diffs.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    /// `counts[i]` covers `[i·w, (i+1)·w)`.
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedStats {
    pub mean: f64,
    pub max: f64,
    pub min: f64,
    pub sigma: f64,
    pub histogram: Histogram,
}

pub const DEFAULT_HISTOGRAM_BIN_KMH: f64 = 5.0;

pub fn speed_stats(speeds: &[f64], bin_width: f64) -> Result<SpeedStats, AnalysisError> {
    if speeds.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    let n = speeds.len() as f64;
    let mean = speeds.iter().sum::<f64>() / n;
    let max = speeds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = speeds.iter().copied().fold(f64::INFINITY, f64::min);
    let sigma = (speeds.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt();
    let bin = |v: f64| (v.max(0.0) / bin_width).floor() as usize;
    let mut counts = vec![0; bin(max) + 1];
    for &s in speeds {
        counts[bin(s)] += 1;
    }
    Ok(SpeedStats {
        mean,
        max,
        min,
        sigma,
        histogram: Histogram { bin_width, counts },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AltitudeStats {
    pub peak_m: f64,
    pub mean_m: f64,
    /// Population σ as a percentage of the mean.
    pub cv_pct: f64,
    pub samples: usize,
    pub missing: usize,
}

pub fn altitude_stats(track: &FlightTrack) -> Result<AltitudeStats, AnalysisError> {
    let alts: Vec<f64> = track.records().iter().filter_map(|r| r.altitude_m).collect();
    if alts.is_empty() {
        return Err(AnalysisError::NoAltitudeData);
    }
    let n = alts.len() as f64;
    let mean = alts.iter().sum::<f64>() / n;
    let sigma = (alts.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(AltitudeStats {
        peak_m: alts.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean_m: mean,
        cv_pct: if mean == 0.0 { 0.0 } else { 100.0 * sigma / mean.abs() },
        samples: alts.len(),
        missing: track.len() - alts.len(),
    })
}

/// Mean distance between consecutive points.
pub fn point_spacing_stats(track: &FlightTrack, method: DistanceMethod) -> Result<f64, AnalysisError> {
    let steps = geodesy::step_distances(&track.points(), method)?;
    Ok(steps.iter().sum::<f64>() / steps.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub total_distance_km: f64,
    /// Arithmetic mean of segment speeds.
    pub mean_speed_kmh: f64,
    pub max_speed_kmh: f64,
    /// Total distance over total time.
    pub distance_over_time_kmh: f64,
    pub speed: SpeedStats,
    /// Signed percentage difference of total distance against UTM.
    pub distance_diff_vs_utm_pct: f64,
    pub mean_speed_diff_vs_utm_kmh: f64,
    /// `(t, km/h)` per segment, stamped at the segment end.
    #[serde(default)]
    pub segment_speeds: Vec<(f64, f64)>,
}

/// Per-method comparison of one track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub methods: Vec<MethodSummary>,
    /// `pairwise_rmse_kmh[i][j]`: RMSE between segment speeds of methods i and j.
    pub pairwise_rmse_kmh: Vec<Vec<f64>>,
}

impl MethodReport {
    pub fn get(&self, method: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }
}

/// Distances and speeds of `track` under all three methods (UTM first).
pub fn method_report(track: &FlightTrack, constants: &MethodConstants, bin_width: f64) -> Result<MethodReport, AnalysisError> {
    let timed = track.timed_points();
    let points = track.points();
    let duration = timed.last().map(|p| p.0).unwrap_or(0.0) - timed.first().map(|p| p.0).unwrap_or(0.0);
    let mut methods = Vec::new();
    for m in constants.methods() {
        let distance = geodesy::path_length(&points, m)?;
        let speeds = geodesy::segment_speeds(&timed, m)?;
        let values: Vec<f64> = speeds.iter().map(|s| s.1).collect();
        let stats = speed_stats(&values, bin_width)?;
        methods.push(MethodSummary {
            method: m.name().to_string(),
            total_distance_km: distance / 1000.0,
            mean_speed_kmh: stats.mean,
            max_speed_kmh: stats.max,
            distance_over_time_kmh: 3.6 * distance / duration,
            speed: stats,
            distance_diff_vs_utm_pct: 0.0,
            mean_speed_diff_vs_utm_kmh: 0.0,
            segment_speeds: speeds,
        });
    }
    let (utm_d, utm_v) = (methods[0].total_distance_km, methods[0].mean_speed_kmh);
    for m in &mut methods {
        m.distance_diff_vs_utm_pct = if utm_d == 0.0 {
            0.0
        } else {
            100.0 * (m.total_distance_km - utm_d) / utm_d
        };
        m.mean_speed_diff_vs_utm_kmh = m.mean_speed_kmh - utm_v;
    }
    let k = methods.len();
    let mut matrix = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let r = rmse(&methods[i].segment_speeds, &methods[j].segment_speeds)?.rmse;
            matrix[i][j] = r;
            matrix[j][i] = r;
        }
    }
    Ok(MethodReport {
        methods,
        pairwise_rmse_kmh: matrix,
    })
}

/// Full per-interval analysis of one sampling rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport {
    pub interval_s: u32,
    /// Records before filtering.
    pub raw_count: usize,
    pub clean_count: usize,
    pub retention_pct: f64,
    pub removal_pct: f64,
    /// Clean-count reduction against the baseline interval.
    pub reduction_vs_baseline_pct: f64,
    /// Mean UTM distance between consecutive clean points.
    pub mean_spacing_m: Option<f64>,
    /// UTM path length of the unfiltered and the cleaned track.
    pub raw_path_length_m: Option<f64>,
    pub clean_path_length_m: Option<f64>,
    pub methods: Option<MethodReport>,
    pub altitude: Option<AltitudeStats>,
    /// Mean-speed RMSE against the baseline interval, per method (UTM, Haversine, raw).
    pub rmse_vs_baseline_kmh: Vec<Option<RmseResult>>,
    pub removed: Vec<RemovedPoint>,
    pub readmitted: usize,
}

impl IntervalReport {
    /// Segment speeds of method `method` (0 = UTM); `None` below two clean points.
    fn speeds(&self, method: usize) -> Option<&[(f64, f64)]> {
        self.methods.as_ref().map(|m| m.methods[method].segment_speeds.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingReport {
    pub baseline_interval_s: u32,
    pub constants: MethodConstants,
    pub filter: Option<FilterParams>,
    pub histogram_bin_kmh: f64,
    pub intervals: Vec<IntervalReport>,
}

impl SamplingReport {
    pub fn interval(&self, s: u32) -> Option<&IntervalReport> {
        self.intervals.iter().find(|r| r.interval_s == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOptions {
    pub intervals: Vec<u32>,
    /// `None` skips spatial filtering.
    pub filter: Option<FilterParams>,
    pub constants: MethodConstants,
    pub histogram_bin_kmh: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            intervals: vec![1, 5, 10, 15, 20],
            filter: Some(FilterParams::default()),
            constants: MethodConstants::default(),
            histogram_bin_kmh: DEFAULT_HISTOGRAM_BIN_KMH,
        }
    }
}

fn analyse_interval(track: &FlightTrack, interval_s: u32, opts: &AnalysisOptions) -> Result<IntervalReport, AnalysisError> {
    let raw = resample(track, interval_s)?;
    let (clean, removed, readmitted) = match &opts.filter {
        Some(p) => {
            let out = two_stage_filter(&raw, p)?;
            let removed = out.stage1_removed.into_iter().chain(out.stage2_removed).collect();
            (out.clean, removed, out.readmitted)
        }
        None => (raw.clone(), Vec::new(), 0),
    };
    let retention = retention_stats(raw.len(), clean.len())?;
    let utm = opts.constants.methods()[0];
    let length = |t: &FlightTrack| geodesy::path_length(&t.points(), utm).ok();
    let methods = if clean.len() >= 2 {
        Some(method_report(&clean, &opts.constants, opts.histogram_bin_kmh)?)
    } else {
        None
    };
    Ok(IntervalReport {
        interval_s,
        raw_count: raw.len(),
        clean_count: clean.len(),
        retention_pct: retention.retention_pct,
        removal_pct: retention.removal_pct,
        reduction_vs_baseline_pct: 0.0,
        mean_spacing_m: point_spacing_stats(&clean, utm).ok(),
        raw_path_length_m: length(&raw),
        clean_path_length_m: length(&clean),
        methods,
        altitude: altitude_stats(&clean).ok(),
        rmse_vs_baseline_kmh: Vec::new(),
        removed,
        readmitted,
    })
}

/// Resamples a 1 Hz track at each interval, filters, and compares against
/// the smallest interval as baseline. Intervals are processed in parallel
/// and reported in ascending order.
pub fn analyze_intervals(track: &FlightTrack, opts: &AnalysisOptions) -> Result<SamplingReport, AnalysisError> {
    let mut intervals = opts.intervals.clone();
    intervals.sort_unstable();
    intervals.dedup();
    let Some(&baseline_interval_s) = intervals.first() else {
        return Err(AnalysisError::EmptyInput);
    };
    let results: Vec<Result<IntervalReport, AnalysisError>> = std::thread::scope(|s| {
        let handles: Vec<_> = intervals
            .iter()
            .map(|&i| s.spawn(move || analyse_interval(track, i, opts)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("analysis thread panicked")).collect()
    });
    let mut reports = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let base_clean = reports[0].clean_count;
    let base_speeds: Vec<Option<Vec<(f64, f64)>>> = (0..3).map(|m| reports[0].speeds(m).map(<[_]>::to_vec)).collect();
    for r in &mut reports {
        r.reduction_vs_baseline_pct = reduction_vs_baseline(r.clean_count, base_clean)?;
        r.rmse_vs_baseline_kmh = (0..3)
            .map(|m| match (r.speeds(m), &base_speeds[m]) {
                (Some(a), Some(b)) => rmse(a, b).ok(),
                _ => None,
            })
            .collect();
    }
    Ok(SamplingReport {
        baseline_interval_s,
        constants: opts.constants,
        filter: opts.filter.clone(),
        histogram_bin_kmh: opts.histogram_bin_kmh,
        intervals: reports,
    })
}

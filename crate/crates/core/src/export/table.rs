//! Telemetry table (CSV).
//!
//! Fixed columns, then one `aux:<label>` column per auxiliary field present
//! anywhere in the track. Precision: 6 decimals for degrees, 1 for metres,
//! km/h, m/s and battery, 0 for mAh. `t_s` is written in shortest
//! round-trip form.

use std::collections::BTreeSet;
use std::path::Path;

use super::{write_atomic, ExportError};
use crate::trajectory::{Battery, BatteryUnit, FieldIssue, FlightTrack, TelemetryRecord};

pub const CSV_HEADER: [&str; 10] = [
    "t_s",
    "frame",
    "lat",
    "lon",
    "alt_m",
    "airspeed_kmh",
    "vspeed_ms",
    "battery",
    "capacity_mah",
    "status",
];

const AUX_PREFIX: &str = "aux:";

fn opt(v: Option<f64>, decimals: usize) -> String {
    v.map(|x| format!("{x:.decimals$}")).unwrap_or_default()
}

fn battery_cell(b: Option<Battery>) -> String {
    match b {
        Some(Battery { value, unit: BatteryUnit::Percent }) => format!("{value:.1}%"),
        Some(Battery { value, unit: BatteryUnit::Volts }) => format!("{value:.1}V"),
        None => String::new(),
    }
}

fn status_cell(issues: &[FieldIssue]) -> String {
    if issues.is_empty() {
        return "ok".into();
    }
    issues.iter().map(|i| format!("{}={}", i.field, i.error)).collect::<Vec<_>>().join(";")
}

fn aux_labels(track: &FlightTrack) -> BTreeSet<String> {
    track.records().iter().flat_map(|r| r.aux.keys().cloned()).collect()
}

fn row(r: &TelemetryRecord, aux: &BTreeSet<String>) -> Vec<String> {
    let mut cells = vec![
        format!("{}", r.t),
        r.frame_index.to_string(),
        format!("{:.6}", r.lat),
        format!("{:.6}", r.lon),
        opt(r.altitude_m, 1),
        opt(r.airspeed_kmh, 1),
        opt(r.vspeed_ms, 1),
        battery_cell(r.battery),
        opt(r.capacity_mah, 0),
        status_cell(&r.issues),
    ];
    cells.extend(aux.iter().map(|k| r.aux.get(k).map(|v| format!("{v}")).unwrap_or_default()));
    cells
}

/// The CSV document for `track`.
pub fn track_csv_string(track: &FlightTrack) -> Result<String, ExportError> {
    if track.is_empty() {
        return Err(ExportError::Empty);
    }
    let aux = aux_labels(track);
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = CSV_HEADER
        .iter()
        .map(|s| s.to_string())
        .chain(aux.iter().map(|k| format!("{AUX_PREFIX}{k}")))
        .collect();
    let to_err = |e: csv::Error| ExportError::Csv(e.to_string());
    w.write_record(&header).map_err(to_err)?;
    for r in track.records() {
        w.write_record(row(r, &aux)).map_err(to_err)?;
    }
    let bytes = w.into_inner().map_err(|e| ExportError::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_track_csv(track: &FlightTrack, path: &Path) -> Result<(), ExportError> {
    let doc = track_csv_string(track)?;
    write_atomic(path, doc.as_bytes()).map_err(|e| ExportError::io(path, e))
}

/// `r` as it reads back after a CSV round trip.
pub fn quantize_record(r: &TelemetryRecord) -> TelemetryRecord {
    let q = |v: f64, d: usize| format!("{v:.d$}").parse::<f64>().expect("formatted float parses");
    TelemetryRecord {
        lat: q(r.lat, 6),
        lon: q(r.lon, 6),
        altitude_m: r.altitude_m.map(|v| q(v, 1)),
        airspeed_kmh: r.airspeed_kmh.map(|v| q(v, 1)),
        vspeed_ms: r.vspeed_ms.map(|v| q(v, 1)),
        battery: r.battery.map(|b| Battery { value: q(b.value, 1), ..b }),
        capacity_mah: r.capacity_mah.map(|v| q(v, 0)),
        ..r.clone()
    }
}

fn parse_battery(s: &str) -> Result<Battery, String> {
    let (num, unit) = if let Some(n) = s.strip_suffix('%') {
        (n, BatteryUnit::Percent)
    } else if let Some(n) = s.strip_suffix('V') {
        (n, BatteryUnit::Volts)
    } else {
        return Err(format!("battery {s:?} lacks a % or V suffix"));
    };
    let value = num.parse().map_err(|_| format!("bad battery value {s:?}"))?;
    Ok(Battery { value, unit })
}

fn parse_status(s: &str) -> Result<Vec<FieldIssue>, String> {
    if s == "ok" {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|item| {
            let (field, error) = item.rsplit_once('=').ok_or_else(|| format!("bad status item {item:?}"))?;
            Ok(FieldIssue {
                field: field.to_string(),
                error: error.to_string(),
            })
        })
        .collect()
}

/// Reads a track written by [`write_track_csv`].
pub fn read_track_csv(path: &Path) -> Result<FlightTrack, ExportError> {
    let bytes = std::fs::read(path).map_err(|e| ExportError::io(path, e))?;
    let parse_err = |line: u64, message: String| ExportError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::Reader::from_reader(bytes.as_slice());
    let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if header.len() < CSV_HEADER.len() || header.iter().zip(CSV_HEADER).any(|(a, b)| a != b) {
        return Err(parse_err(1, format!("expected header starting {}", CSV_HEADER.join(","))));
    }
    let mut aux = Vec::new();
    for h in header.iter().skip(CSV_HEADER.len()) {
        let label = h.strip_prefix(AUX_PREFIX).ok_or_else(|| parse_err(1, format!("unknown column {h:?}")))?;
        aux.push(label.to_string());
    }

    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<Option<f64>, ExportError> {
            let s = &rec[i];
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>()
                .map(Some)
                .map_err(|_| parse_err(line, format!("column {}: bad number {s:?}", header.get(i).unwrap_or("?"))))
        };
        let required = |i: usize| num(i)?.ok_or_else(|| parse_err(line, format!("column {} is empty", CSV_HEADER[i])));
        let frame = rec[1]
            .parse::<usize>()
            .map_err(|_| parse_err(line, format!("bad frame index {:?}", &rec[1])))?;
        let mut r = TelemetryRecord::new(required(0)?, frame, required(2)?, required(3)?);
        r.altitude_m = num(4)?;
        r.airspeed_kmh = num(5)?;
        r.vspeed_ms = num(6)?;
        if !rec[7].is_empty() {
            r.battery = Some(parse_battery(&rec[7]).map_err(|m| parse_err(line, m))?);
        }
        r.capacity_mah = num(8)?;
        r.issues = parse_status(&rec[9]).map_err(|m| parse_err(line, m))?;
        for (j, label) in aux.iter().enumerate() {
            if let Some(v) = num(CSV_HEADER.len() + j)? {
                r.aux.insert(label.clone(), v);
            }
        }
        records.push(r);
    }
    FlightTrack::new(records).map_err(|e| parse_err(0, e.to_string()))
}

//! GeoJSON FeatureCollection: the path as a LineString, then one Point per record.

use std::path::Path;

use serde_json::{json, Map, Value};

use super::{write_atomic, ExportError};
use crate::trajectory::{BatteryUnit, FlightTrack, TelemetryRecord};

/// `[lon, lat]`, or `[lon, lat, alt]` when the altitude is known.
fn position(r: &TelemetryRecord) -> Value {
    match r.altitude_m {
        Some(a) => json!([r.lon, r.lat, a]),
        None => json!([r.lon, r.lat]),
    }
}

fn properties(r: &TelemetryRecord) -> Value {
    let mut p = Map::new();
    p.insert("t_s".into(), json!(r.t));
    p.insert("frame".into(), json!(r.frame_index));
    let mut put = |k: &str, v: Option<f64>| {
        if let Some(v) = v {
            p.insert(k.into(), json!(v));
        }
    };
    put("alt_m", r.altitude_m);
    put("airspeed_kmh", r.airspeed_kmh);
    put("vspeed_ms", r.vspeed_ms);
    put("capacity_mah", r.capacity_mah);
    if let Some(b) = r.battery {
        let key = match b.unit {
            BatteryUnit::Percent => "battery_pct",
            BatteryUnit::Volts => "battery_v",
        };
        p.insert(key.into(), json!(b.value));
    }
    for (k, v) in &r.aux {
        p.insert(format!("aux:{k}"), json!(v));
    }
    if !r.issues.is_empty() {
        let issues: Map<String, Value> = r.issues.iter().map(|i| (i.field.clone(), json!(i.error))).collect();
        p.insert("issues".into(), Value::Object(issues));
    }
    Value::Object(p)
}

pub fn geojson_value(track: &FlightTrack) -> Result<Value, ExportError> {
    if track.is_empty() {
        return Err(ExportError::Empty);
    }
    let recs = track.records();
    let mut features = Vec::with_capacity(recs.len() + 1);
    features.push(json!({
        "type": "Feature",
        "geometry": {
            "type": "LineString",
            "coordinates": recs.iter().map(position).collect::<Vec<_>>(),
        },
        "properties": {
            "kind": "path",
            "points": recs.len(),
            "t_start_s": recs[0].t,
            "t_end_s": recs[recs.len() - 1].t,
        },
    }));
    for r in recs {
        features.push(json!({
            "type": "Feature",
            "geometry": { "type": "Point", "coordinates": position(r) },
            "properties": properties(r),
        }));
    }
    Ok(json!({ "type": "FeatureCollection", "features": features }))
}

pub fn write_geojson(track: &FlightTrack, path: &Path) -> Result<(), ExportError> {
    let mut bytes = serde_json::to_vec(&geojson_value(track)?)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes).map_err(|e| ExportError::io(path, e))
}

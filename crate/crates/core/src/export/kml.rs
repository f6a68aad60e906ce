//! KML flight path packed as KMZ.

use std::fmt::Write as _;
use std::io::{Cursor, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, DateTime, ZipWriter};

use super::{write_atomic, xml_escape, ExportError};
use crate::trajectory::FlightTrack;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KmzOptions {
    /// Document name.
    pub run_id: String,
    /// Drop vertical lines from each vertex to the ground.
    pub extrude: bool,
}

impl Default for KmzOptions {
    fn default() -> Self {
        Self {
            run_id: "hudtrace".into(),
            extrude: true,
        }
    }
}

/// Altitudes for every record: missing values are interpolated linearly in
/// time between known neighbours and held at the ends. `None` when the
/// track carries no altitude at all.
fn filled_altitudes(track: &FlightTrack) -> Option<Vec<f64>> {
    let recs = track.records();
    let known: Vec<(f64, f64)> = recs.iter().filter_map(|r| r.altitude_m.map(|a| (r.t, a))).collect();
    if known.is_empty() {
        return None;
    }
    let fill = |t: f64| {
        let i = known.partition_point(|k| k.0 < t);
        match (i.checked_sub(1).map(|j| known[j]), known.get(i)) {
            (Some((t0, a0)), Some(&(t1, a1))) => a0 + (a1 - a0) * (t - t0) / (t1 - t0),
            (Some((_, a0)), None) => a0,
            (None, Some(&(_, a1))) => a1,
            (None, None) => unreachable!("known is non-empty"),
        }
    };
    let out = recs.iter().map(|r| r.altitude_m.unwrap_or_else(|| fill(r.t))).collect();
    Some(out)
}

/// The KML document: one Placemark holding the track as a LineString of
/// `lon,lat,alt` triples.
pub fn kml_document(track: &FlightTrack, opts: &KmzOptions) -> Result<String, ExportError> {
    if track.len() < 2 {
        return Err(ExportError::TooShort {
            points: track.len(),
            need: 2,
        });
    }
    let (alts, mode) = match filled_altitudes(track) {
        Some(a) => (a, "absolute"),
        None => (vec![0.0; track.len()], "clampToGround"),
    };
    let name = xml_escape(&opts.run_id);
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    s.push_str("<kml xmlns=\"http://www.opengis.net/kml/2.2\">\n<Document>\n");
    let _ = writeln!(s, "<name>{name}</name>");
    s.push_str("<Style id=\"track\"><LineStyle><color>ff0080ff</color><width>3</width></LineStyle>");
    s.push_str("<PolyStyle><color>400080ff</color></PolyStyle></Style>\n");
    s.push_str("<Placemark>\n");
    let _ = writeln!(s, "<name>{name} flight path</name>");
    s.push_str("<styleUrl>#track</styleUrl>\n<LineString>\n");
    if opts.extrude {
        s.push_str("<extrude>1</extrude>\n");
    }
    let _ = writeln!(s, "<altitudeMode>{mode}</altitudeMode>");
    s.push_str("<coordinates>\n");
    for (r, alt) in track.records().iter().zip(alts) {
        let _ = writeln!(s, "{:.6},{:.6},{:.1}", r.lon, r.lat, alt);
    }
    s.push_str("</coordinates>\n</LineString>\n</Placemark>\n</Document>\n</kml>\n");
    Ok(s)
}

/// Zip archive holding only `doc.kml`, with a fixed timestamp so identical
/// tracks give identical bytes.
pub fn kmz_bytes(track: &FlightTrack, opts: &KmzOptions) -> Result<Vec<u8>, ExportError> {
    let doc = kml_document(track, opts)?;
    let zerr = |e: zip::result::ZipError| ExportError::Zip(e.to_string());
    let mut zw = ZipWriter::new(Cursor::new(Vec::new()));
    let options = SimpleFileOptions::default()
        .compression_method(CompressionMethod::Deflated)
        .last_modified_time(DateTime::default());
    zw.start_file("doc.kml", options).map_err(zerr)?;
    zw.write_all(doc.as_bytes()).map_err(|e| ExportError::Zip(e.to_string()))?;
    Ok(zw.finish().map_err(zerr)?.into_inner())
}

pub fn write_kmz(track: &FlightTrack, path: &Path, opts: &KmzOptions) -> Result<(), ExportError> {
    let bytes = kmz_bytes(track, opts)?;
    write_atomic(path, &bytes).map_err(|e| ExportError::io(path, e))
}

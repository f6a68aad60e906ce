use std::path::Path;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use hudtrace::roi::{RoiConfig, RoiKind, RoiSpec};
use hudtrace::synth::{simulate_flight, write_dataset, FlightSimParams, HudStyle};
use hudtrace_cli::{annotator_state, server, ResolvedInputs};
use serde_json::Value;
use tower::ServiceExt;

fn dataset(dir: &Path) -> ResolvedInputs {
    let track = simulate_flight(&FlightSimParams {
        duration_s: 3,
        ..FlightSimParams::default()
    })
    .unwrap();
    let ds = write_dataset(&track, &HudStyle::default(), dir, 1, 2).unwrap();
    ResolvedInputs {
        roi: ds.roi_config,
        frames: ds.frames_dir,
        fps: 1.0,
        preprocess: Default::default(),
    }
}

fn app(inputs: &ResolvedInputs) -> Router {
    server::router(annotator_state(inputs).unwrap(), None)
}

async fn send(app: &Router, method: Method, uri: &str, body: Option<&Value>) -> (StatusCode, Option<String>, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(serde_json::to_vec(v).unwrap())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let ctype = resp
        .headers()
        .get(header::CONTENT_TYPE)
        .map(|v| v.to_str().unwrap().to_owned());
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, ctype, bytes)
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

const PNG_MAGIC: &[u8] = b"\x89PNG";

#[tokio::test]
async fn lists_and_serves_frames() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dataset(dir.path()));
    let (s, _, body) = send(&app, Method::GET, "/api/frames", None).await;
    assert_eq!(s, StatusCode::OK);
    let v = json(&body);
    assert_eq!(v["count"], 4);
    assert_eq!(v["indices"], serde_json::json!([0, 1, 2, 3]));

    let (s, ctype, body) = send(&app, Method::GET, "/api/frames/2.png", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(ctype.as_deref(), Some("image/png"));
    assert!(body.starts_with(PNG_MAGIC));

    for uri in ["/api/frames/9.png", "/api/frames/two.png", "/api/frames/1.jpg"] {
        assert_eq!(send(&app, Method::GET, uri, None).await.0, StatusCode::NOT_FOUND, "{uri}");
    }
}

#[tokio::test]
async fn preview_and_enhanced_crops() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dataset(dir.path()));
    let (s, ctype, body) = send(&app, Method::GET, "/api/preview/0.png", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(ctype.as_deref(), Some("image/png"));
    assert!(body.starts_with(PNG_MAGIC));

    let (s, _, body) = send(&app, Method::GET, "/api/enhanced/alt/1.png", None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(body.starts_with(PNG_MAGIC));
    let (s, _, body) = send(&app, Method::GET, "/api/enhanced/nope/1.png", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert!(json(&body)["error"].as_str().unwrap().contains("nope"));
}

#[tokio::test]
async fn put_validates_versions_and_persists() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = dataset(dir.path());
    let app = app(&inputs);
    let (s, _, body) = send(&app, Method::GET, "/api/roi-config", None).await;
    assert_eq!(s, StatusCode::OK);
    let mut cfg: RoiConfig = serde_json::from_slice(&body).unwrap();
    assert_eq!(cfg.version, 1);

    // invalid: out of bounds plus a duplicate label
    let mut bad = cfg.clone();
    bad.rois.push(RoiSpec::new("alt", RoiKind::Altitude, [600, 300, 100, 100], None));
    let (s, _, body) = send(&app, Method::PUT, "/api/roi-config", Some(&serde_json::to_value(&bad).unwrap())).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let codes: Vec<String> = json(&body)["errors"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["code"].as_str().unwrap().to_owned())
        .collect();
    assert!(codes.contains(&"out_of_bounds".into()), "{codes:?}");
    assert!(codes.contains(&"duplicate_label".into()), "{codes:?}");
    assert_eq!(RoiConfig::load(&inputs.roi).unwrap().version, 1, "rejected PUT must not save");

    // valid edit
    cfg.rois.retain(|r| r.label != "capacity");
    let (s, _, body) = send(&app, Method::PUT, "/api/roi-config", Some(&serde_json::to_value(&cfg).unwrap())).await;
    assert_eq!(s, StatusCode::OK);
    let saved: RoiConfig = serde_json::from_slice(&body).unwrap();
    assert_eq!(saved.version, 2);
    let on_disk = RoiConfig::load(&inputs.roi).unwrap();
    assert_eq!(on_disk, saved);
    assert!(on_disk.find("capacity").is_none());

    // replaying the same (now stale) document conflicts
    let (s, _, body) = send(&app, Method::PUT, "/api/roi-config", Some(&serde_json::to_value(&cfg).unwrap())).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(json(&body)["current_version"], 2);

    let (_, _, body) = send(&app, Method::GET, "/api/roi-config", None).await;
    assert_eq!(serde_json::from_slice::<RoiConfig>(&body).unwrap(), saved);
}

#[tokio::test]
async fn malformed_body_is_a_client_error() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dataset(dir.path()));
    let (s, _, _) = send(&app, Method::PUT, "/api/roi-config", Some(&serde_json::json!({ "version": 1 }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn missing_roi_file_starts_empty_at_frame_size() {
    let dir = tempfile::tempdir().unwrap();
    let mut inputs = dataset(dir.path());
    inputs.roi = dir.path().join("new_roi.toml");
    let app = app(&inputs);
    let (_, _, body) = send(&app, Method::GET, "/api/roi-config", None).await;
    let cfg: RoiConfig = serde_json::from_slice(&body).unwrap();
    assert_eq!((cfg.frame_width, cfg.frame_height), (640, 360));
    assert!(cfg.rois.is_empty());
    let mut edit = cfg.clone();
    edit.rois.push(RoiSpec::new("alt", RoiKind::Altitude, [520, 12, 80, 24], None));
    let (s, _, _) = send(&app, Method::PUT, "/api/roi-config", Some(&serde_json::to_value(&edit).unwrap())).await;
    assert_eq!(s, StatusCode::OK);
    assert!(inputs.roi.is_file());
}

#[tokio::test]
async fn static_dir_is_served_as_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = dataset(dir.path());
    let web = dir.path().join("web");
    std::fs::create_dir(&web).unwrap();
    std::fs::write(web.join("index.html"), "<html>annotator</html>").unwrap();
    let app = server::router(annotator_state(&inputs).unwrap(), Some(web));
    let (s, _, body) = send(&app, Method::GET, "/index.html", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body, b"<html>annotator</html>");
    assert_eq!(send(&app, Method::GET, "/api/frames", None).await.0, StatusCode::OK);
}

#[tokio::test]
async fn three_roi_round_trip_and_enhanced_sizes() {
    use hudtrace::imaging::EnhanceProfile;
    use hudtrace::ingest::decode_gray;
    use hudtrace::roi::enhanced_size;

    let dir = tempfile::tempdir().unwrap();
    let mut inputs = dataset(dir.path());
    inputs.roi = dir.path().join("drawn.toml");
    let app = app(&inputs);
    let mut cfg = RoiConfig::new(640, 360);
    cfg.rois = vec![
        RoiSpec::new("lat", RoiKind::Latitude, [12, 296, 130, 22], Some(2)),
        RoiSpec::new("lon", RoiKind::Longitude, [12, 322, 130, 22], Some(2)),
        RoiSpec::new("rssi", RoiKind::Auxiliary("rssi".into()), [300, 12, 60, 22], None),
    ];
    let (s, _, _) = send(&app, Method::PUT, "/api/roi-config", Some(&serde_json::to_value(&cfg).unwrap())).await;
    assert_eq!(s, StatusCode::OK);

    // a fresh server reading the saved file returns the same document
    let reloaded = self::app(&inputs);
    let (_, _, body) = send(&reloaded, Method::GET, "/api/roi-config", None).await;
    let got: RoiConfig = serde_json::from_slice(&body).unwrap();
    assert_eq!(got, RoiConfig { version: 2, ..cfg });

    for (label, w, h, profile) in [("lat", 130, 22, EnhanceProfile::COORDINATE), ("rssi", 60, 22, EnhanceProfile::AUXILIARY)] {
        let (_, _, body) = send(&reloaded, Method::GET, &format!("/api/enhanced/{label}/0.png"), None).await;
        let img = decode_gray(&body).unwrap();
        let want = enhanced_size(w, h, profile);
        assert_eq!((img.width(), img.height()), want, "{label}");
    }
    // (130 + 30) * 6 and (60 + 10) * 2
    assert_eq!(enhanced_size(130, 22, EnhanceProfile::COORDINATE), (960, 312));
    assert_eq!(enhanced_size(60, 22, EnhanceProfile::AUXILIARY), (140, 64));
}

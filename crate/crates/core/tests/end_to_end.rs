//! Synthetic footage through the full pipeline.

use hudtrace::config::RunConfig;
use hudtrace::export::{quantize_record, read_track_csv};
use hudtrace::pipeline::{run_pipeline, RunStatus};
use hudtrace::synth::{simulate_flight, write_dataset, FlightSimParams, HudStyle};

#[test]
fn zero_noise_flight_is_recovered_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let track = simulate_flight(&FlightSimParams::default()).unwrap();
    let ds = write_dataset(&track, &HudStyle::default(), dir.path(), 1, 4).unwrap();
    let cfg = RunConfig::new(&ds.frames_dir, 1.0, &ds.roi_config, dir.path().join("out"));
    let out = run_pipeline(&cfg).unwrap();
    assert_eq!(out.status, RunStatus::Success, "{:#?}", out.report.drops);
    let truth = read_track_csv(&ds.truth_csv).unwrap();
    assert_eq!(out.track.len(), truth.len());
    for (a, b) in out.track.records().iter().zip(truth.records()) {
        assert_eq!(&quantize_record(a), b);
    }
    let counts: Vec<usize> = out.report.sampling.intervals.iter().map(|r| r.raw_count).collect();
    assert_eq!(counts, [122, 25, 13, 9, 7]);
}

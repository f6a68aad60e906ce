//! Static SVG charts of a [`SamplingReport`].
//!
//! Every chart is two side-by-side panels. Each panel carries `data-ymax`
//! (axis top) and `data-datamax` (largest plotted value) so tests and
//! scripts can check scaling without parsing geometry. Output depends only
//! on the report, so identical reports give identical bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{write_atomic, xml_escape, ExportError};
use crate::analysis::SamplingReport;

pub const CHART_FILES: [&str; 3] = ["retention.svg", "speed.svg", "methods.svg"];

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 380.0;
const PANEL_W: f64 = 340.0;
const PANEL_H: f64 = 250.0;
const PANEL_TOP: f64 = 60.0;
const PANEL_LEFT: [f64; 2] = [70.0, 500.0];
const PALETTE: [&str; 7] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2"];

/// Smallest of {1, 2, 2.5, 5} × 10^k that is ≥ `v`; 1 for non-positive input.
fn nice_ceiling(v: f64) -> f64 {
    if !(v > 0.0) || !v.is_finite() {
        return 1.0;
    }
    let mag = 10f64.powf(v.log10().floor());
    for m in [1.0, 2.0, 2.5, 5.0, 10.0] {
        if m * mag >= v * (1.0 - 1e-12) {
            return m * mag;
        }
    }
    10.0 * mag
}

/// Tick label: up to two decimals, trailing zeros dropped.
fn label(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

struct Panel {
    left: f64,
    ymax: f64,
}

impl Panel {
    fn y(&self, v: f64) -> f64 {
        PANEL_TOP + PANEL_H * (1.0 - v / self.ymax)
    }
}

struct Svg {
    out: String,
}

impl Svg {
    fn new(title: &str) -> Self {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"11\">"
        );
        let _ = writeln!(out, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
            WIDTH / 2.0,
            xml_escape(title)
        );
        Self { out }
    }

    /// Opens a panel group with frame, y ticks and titles; returns its scale.
    fn panel(&mut self, idx: usize, id: &str, title: &str, y_label: &str, data_max: f64) -> Panel {
        let p = Panel {
            left: PANEL_LEFT[idx],
            ymax: nice_ceiling(data_max),
        };
        let o = &mut self.out;
        let _ = writeln!(
            o,
            "<g class=\"panel\" id=\"{id}\" data-ymax=\"{}\" data-datamax=\"{}\">",
            p.ymax, data_max
        );
        let _ = writeln!(
            o,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"13\">{}</text>",
            p.left + PANEL_W / 2.0,
            PANEL_TOP - 12.0,
            xml_escape(title)
        );
        let _ = writeln!(
            o,
            "<rect x=\"{:.2}\" y=\"{PANEL_TOP:.2}\" width=\"{PANEL_W:.2}\" height=\"{PANEL_H:.2}\" fill=\"none\" stroke=\"#444\"/>",
            p.left
        );
        for k in 0..=4 {
            let v = p.ymax * k as f64 / 4.0;
            let y = p.y(v);
            let _ = writeln!(
                o,
                "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#ddd\"/><text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
                p.left,
                p.left + PANEL_W,
                p.left - 4.0,
                y + 4.0,
                label(v)
            );
        }
        let _ = writeln!(
            o,
            "<text transform=\"translate({:.2},{:.2}) rotate(-90)\" text-anchor=\"middle\">{}</text>",
            p.left - 44.0,
            PANEL_TOP + PANEL_H / 2.0,
            xml_escape(y_label)
        );
        p
    }

    fn x_label(&mut self, x: f64, text: &str) {
        let _ = writeln!(
            self.out,
            "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            PANEL_TOP + PANEL_H + 16.0,
            xml_escape(text)
        );
    }

    fn x_title(&mut self, p: &Panel, text: &str) {
        let _ = writeln!(
            self.out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            p.left + PANEL_W / 2.0,
            PANEL_TOP + PANEL_H + 34.0,
            xml_escape(text)
        );
    }

    /// Bars for one x slot: `values` side by side, coloured by series.
    fn bar_group(&mut self, p: &Panel, slot: usize, slots: usize, key: &str, values: &[(usize, f64)], series: usize) {
        let slot_w = PANEL_W / slots as f64;
        let bar_w = slot_w * 0.8 / series as f64;
        let x0 = p.left + slot_w * slot as f64 + slot_w * 0.1;
        let _ = writeln!(self.out, "<g class=\"bar-group\" data-key=\"{}\">", xml_escape(key));
        for &(s, v) in values {
            let y = p.y(v);
            let _ = writeln!(
                self.out,
                "<rect x=\"{:.2}\" y=\"{y:.2}\" width=\"{bar_w:.2}\" height=\"{:.2}\" fill=\"{}\" data-value=\"{v}\"/>",
                x0 + bar_w * s as f64,
                PANEL_TOP + PANEL_H - y,
                PALETTE[s % PALETTE.len()]
            );
        }
        self.out.push_str("</g>\n");
        self.x_label(x0 + slot_w * 0.4, key);
    }

    fn polyline(&mut self, pts: &[(f64, f64)], colour: &str, markers: bool) {
        if pts.is_empty() {
            return;
        }
        let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            self.out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{colour}\" stroke-width=\"1.5\"/>",
            coords.join(" ")
        );
        if markers {
            for (x, y) in pts {
                let _ = writeln!(self.out, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"{colour}\"/>");
            }
        }
    }

    fn legend(&mut self, p: &Panel, entries: &[String]) {
        for (i, e) in entries.iter().enumerate() {
            let x = p.left + 8.0 + (i % 4) as f64 * 82.0;
            let y = PANEL_TOP + PANEL_H + 50.0 + (i / 4) as f64 * 14.0;
            let _ = writeln!(
                self.out,
                "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"{:.2}\" y=\"{y:.2}\">{}</text>",
                y - 9.0,
                PALETTE[i % PALETTE.len()],
                x + 14.0,
                xml_escape(e)
            );
        }
    }

    fn end_panel(&mut self) {
        self.out.push_str("</g>\n");
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().filter(|v| v.is_finite()).fold(0.0, f64::max)
}

fn slot_x(slot: usize, slots: usize, left: f64) -> f64 {
    let w = PANEL_W / slots as f64;
    left + w * (slot as f64 + 0.5)
}

fn check(report: &SamplingReport) -> Result<(), ExportError> {
    if report.intervals.is_empty() {
        return Err(ExportError::NothingToRender);
    }
    Ok(())
}

/// Raw against cleaned point counts per interval, and the removal-rate trend.
pub fn retention_chart(report: &SamplingReport) -> Result<String, ExportError> {
    check(report)?;
    let iv = &report.intervals;
    let n = iv.len();
    let mut svg = Svg::new("Point retention by sampling interval");

    let counts = max_of(iv.iter().flat_map(|r| [r.raw_count as f64, r.clean_count as f64]));
    let p = svg.panel(0, "counts", "Raw vs cleaned points", "points", counts);
    for (i, r) in iv.iter().enumerate() {
        let key = format!("{} s", r.interval_s);
        svg.bar_group(&p, i, n, &key, &[(0, r.raw_count as f64), (1, r.clean_count as f64)], 2);
    }
    svg.x_title(&p, "sampling interval");
    svg.legend(&p, &["raw".into(), "cleaned".into()]);
    svg.end_panel();

    let removal = max_of(iv.iter().map(|r| r.removal_pct));
    let p = svg.panel(1, "removal", "Removed by the spatial filter", "removed (%)", removal);
    let pts: Vec<(f64, f64)> = iv
        .iter()
        .enumerate()
        .map(|(i, r)| (slot_x(i, n, p.left), p.y(r.removal_pct)))
        .collect();
    for (i, r) in iv.iter().enumerate() {
        svg.x_label(slot_x(i, n, p.left), &format!("{} s", r.interval_s));
    }
    svg.polyline(&pts, PALETTE[3], true);
    svg.x_title(&p, "sampling interval");
    svg.end_panel();
    Ok(svg.finish())
}

/// UTM segment-speed profiles per interval, and mean-speed RMSE against the baseline.
pub fn speed_chart(report: &SamplingReport) -> Result<String, ExportError> {
    check(report)?;
    let iv = &report.intervals;
    let n = iv.len();
    let mut svg = Svg::new("Speed by sampling interval");

    let profiles: Vec<&[(f64, f64)]> = iv
        .iter()
        .map(|r| r.methods.as_ref().map_or(&[][..], |m| m.methods[0].segment_speeds.as_slice()))
        .collect();
    let vmax = max_of(profiles.iter().flat_map(|s| s.iter().map(|p| p.1)));
    let t0 = profiles.iter().flat_map(|s| s.first().map(|p| p.0)).fold(f64::INFINITY, f64::min);
    let t1 = max_of(profiles.iter().flat_map(|s| s.last().map(|p| p.0)));
    let t0 = if t0.is_finite() { t0 } else { 0.0 };
    let span = if t1 > t0 { t1 - t0 } else { 1.0 };

    let p = svg.panel(0, "profiles", "UTM segment speed", "speed (km/h)", vmax);
    for (i, s) in profiles.iter().enumerate() {
        let pts: Vec<(f64, f64)> = s
            .iter()
            .map(|&(t, v)| (p.left + PANEL_W * (t - t0) / span, p.y(v)))
            .collect();
        svg.polyline(&pts, PALETTE[i % PALETTE.len()], false);
    }
    svg.x_label(p.left, &label(t0));
    svg.x_label(p.left + PANEL_W, &label(t0 + span));
    svg.x_title(&p, "time (s)");
    let names: Vec<String> = iv.iter().map(|r| format!("{} s", r.interval_s)).collect();
    svg.legend(&p, &names);
    svg.end_panel();

    let rmse: Vec<Option<f64>> = iv
        .iter()
        .map(|r| r.rmse_vs_baseline_kmh.first().copied().flatten().map(|x| x.rmse))
        .collect();
    let p = svg.panel(
        1,
        "rmse",
        "Speed RMSE vs baseline (UTM)",
        "RMSE (km/h)",
        max_of(rmse.iter().flatten().copied()),
    );
    for (i, r) in iv.iter().enumerate() {
        let key = format!("{} s", r.interval_s);
        let vals: Vec<(usize, f64)> = rmse[i].map(|v| (0, v)).into_iter().collect();
        svg.bar_group(&p, i, n, &key, &vals, 1);
    }
    svg.x_title(&p, "sampling interval");
    svg.end_panel();
    Ok(svg.finish())
}

/// Total distance and mean speed per interval under each distance method.
pub fn method_chart(report: &SamplingReport) -> Result<String, ExportError> {
    check(report)?;
    let iv = &report.intervals;
    let n = iv.len();
    let mut svg = Svg::new("Distance methods compared");
    let names: Vec<String> = iv
        .iter()
        .find_map(|r| r.methods.as_ref())
        .map(|m| m.methods.iter().map(|s| s.method.clone()).collect())
        .unwrap_or_default();
    let series = names.len().max(1);

    for (idx, (id, title, unit)) in [
        ("distance", "Total distance", "distance (km)"),
        ("speed", "Mean segment speed", "speed (km/h)"),
    ]
    .into_iter()
    .enumerate()
    {
        let value = |r: &crate::analysis::IntervalReport| -> Vec<(usize, f64)> {
            r.methods.as_ref().map_or_else(Vec::new, |m| {
                m.methods
                    .iter()
                    .enumerate()
                    .map(|(s, ms)| (s, if idx == 0 { ms.total_distance_km } else { ms.mean_speed_kmh }))
                    .collect()
            })
        };
        let data_max = max_of(iv.iter().flat_map(|r| value(r).into_iter().map(|v| v.1)));
        let p = svg.panel(idx, id, title, unit, data_max);
        for (i, r) in iv.iter().enumerate() {
            svg.bar_group(&p, i, n, &format!("{} s", r.interval_s), &value(r), series);
        }
        svg.x_title(&p, "sampling interval");
        svg.legend(&p, &names);
        svg.end_panel();
    }
    Ok(svg.finish())
}

/// Writes the three charts into `dir` as [`CHART_FILES`].
pub fn render_charts(report: &SamplingReport, dir: &Path) -> Result<Vec<PathBuf>, ExportError> {
    let docs = [retention_chart(report)?, speed_chart(report)?, method_chart(report)?];
    let mut paths = Vec::new();
    for (name, doc) in CHART_FILES.iter().zip(docs) {
        let p = dir.join(name);
        write_atomic(&p, doc.as_bytes()).map_err(|e| ExportError::io(&p, e))?;
        paths.push(p);
    }
    Ok(paths)
}

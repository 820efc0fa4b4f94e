//! Deterministic SVG line charts from a trace: one loss chart overlaying the
//! averager, the raw weights, the reference averagers and the oracle
//! optimum, and one length chart with the sawtooth of the long average
//! against the oracle's optimal length and the theoretical bound.
//!
//! The SVG is emitted directly (no plotting dependency) so regeneration from
//! the same trace is byte-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use crate::trace::RunTrace;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 520.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 180.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

struct Series {
    name: String,
    points: Vec<(f64, f64)>,
}

/// Smallest loss drawn on the log axis; exact zeros are clamped here.
const LOSS_FLOOR: f64 = 1e-12;

/// Write `loss.svg` and `lengths.svg` for the trace into `out_dir`.
pub fn emit_plots(trace: &RunTrace, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if trace.records.is_empty() {
        bail!("cannot plot an empty trace");
    }
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating plot dir {}", out_dir.display()))?;
    let loss_path = out_dir.join("loss.svg");
    std::fs::write(&loss_path, loss_chart(trace))?;
    let lengths_path = out_dir.join("lengths.svg");
    std::fs::write(&lengths_path, lengths_chart(trace))?;
    Ok(vec![loss_path, lengths_path])
}

fn loss_chart(trace: &RunTrace) -> String {
    let steps: Vec<f64> = trace.records.iter().map(|r| r.record.step as f64).collect();
    let mut series = Vec::new();
    let tta_name = trace.config.two_tailed().name();
    series.push(Series {
        name: tta_name,
        points: steps
            .iter()
            .zip(&trace.records)
            .map(|(&x, r)| (x, log_loss(r.record.reported_loss())))
            .collect(),
    });
    if trace.records.iter().any(|r| r.record.f_raw.is_some()) {
        series.push(Series {
            name: "raw".into(),
            points: steps
                .iter()
                .zip(&trace.records)
                .filter_map(|(&x, r)| r.record.f_raw.map(|v| (x, log_loss(v))))
                .collect(),
        });
    }
    for name in trace.records[0].baselines.keys() {
        series.push(Series {
            name: name.clone(),
            points: steps
                .iter()
                .zip(&trace.records)
                .filter_map(|(&x, r)| r.baselines.get(name).map(|v| (x, log_loss(*v))))
                .collect(),
        });
    }
    if trace.has_oracle() {
        series.push(Series {
            name: "optimal tail".into(),
            points: steps
                .iter()
                .zip(&trace.records)
                .map(|(&x, r)| (x, log_loss(r.oracle.expect("has_oracle").opt_loss)))
                .collect(),
        });
    }
    render_chart(
        "loss over optimization steps",
        "step",
        "log10(loss)",
        &series,
    )
}

fn lengths_chart(trace: &RunTrace) -> String {
    let eval_period = trace.eval_period();
    let steps: Vec<f64> = trace.records.iter().map(|r| r.record.step as f64).collect();
    let mut series = vec![
        Series {
            name: "long average".into(),
            points: steps
                .iter()
                .zip(&trace.records)
                .map(|(&x, r)| (x, r.record.len_long as f64))
                .collect(),
        },
        Series {
            name: "short average".into(),
            points: steps
                .iter()
                .zip(&trace.records)
                .map(|(&x, r)| (x, r.record.len_short as f64))
                .collect(),
        },
    ];
    if trace.has_oracle() {
        series.push(Series {
            name: "optimal length".into(),
            points: steps
                .iter()
                .zip(&trace.records)
                .map(|(&x, r)| (x, r.oracle.expect("has_oracle").opt_len as f64))
                .collect(),
        });
        series.push(Series {
            name: "2*optimal + E".into(),
            points: steps
                .iter()
                .zip(&trace.records)
                .map(|(&x, r)| {
                    (
                        x,
                        (2 * r.oracle.expect("has_oracle").opt_len + eval_period) as f64,
                    )
                })
                .collect(),
        });
    }
    render_chart(
        "averaging lengths over optimization steps",
        "step",
        "length",
        &series,
    )
}

fn log_loss(value: f64) -> f64 {
    value.max(LOSS_FLOOR).log10()
}

fn bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if x_min == x_max {
        x_max = x_min + 1.0;
    }
    if y_min == y_max {
        y_max = y_min + 1.0;
    }
    (x_min, x_max, y_min, y_max)
}

fn render_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (x_min, x_max, y_min, y_max) = bounds(series);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = move |x: f64| MARGIN_LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = move |y: f64| MARGIN_TOP + plot_h - (y - y_min) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" font-family="monospace" font-size="16">{title}</text>"#,
        MARGIN_LEFT
    );

    // axes
    let _ = writeln!(
        svg,
        r#"<line x1="{l}" y1="{t}" x2="{l}" y2="{b}" stroke="black"/><line x1="{l}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>"#,
        l = MARGIN_LEFT,
        t = MARGIN_TOP,
        b = MARGIN_TOP + plot_h,
        r = MARGIN_LEFT + plot_w,
    );
    for k in 0..=4 {
        let fx = x_min + (x_max - x_min) * k as f64 / 4.0;
        let fy = y_min + (y_max - y_min) * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{}" font-family="monospace" font-size="11" text-anchor="middle">{}</text>"#,
            sx(fx),
            MARGIN_TOP + plot_h + 18.0,
            format_tick(fx)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.2}" font-family="monospace" font-size="11" text-anchor="end">{}</text>"#,
            MARGIN_LEFT - 6.0,
            sy(fy) + 4.0,
            format_tick(fy)
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{l}" y1="{y:.2}" x2="{r}" y2="{y:.2}" stroke="#dddddd"/>"##,
            l = MARGIN_LEFT,
            r = MARGIN_LEFT + plot_w,
            y = sy(fy),
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{}" font-family="monospace" font-size="12" text-anchor="middle">{x_label}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" font-family="monospace" font-size="12" transform="rotate(-90 16 {mid:.2})" text-anchor="middle">{y_label}</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        mid = MARGIN_TOP + plot_h / 2.0
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut points = String::new();
        for &(x, y) in &s.points {
            let _ = write!(points, "{:.2},{:.2} ", sx(x), sy(y));
        }
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            points.trim_end()
        );
        let ly = MARGIN_TOP + 16.0 * i as f64 + 8.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{x0:.2}" y1="{ly:.2}" x2="{x1:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{tx:.2}" y="{ty:.2}" font-family="monospace" font-size="11">{name}</text>"#,
            x0 = WIDTH - MARGIN_RIGHT + 10.0,
            x1 = WIDTH - MARGIN_RIGHT + 30.0,
            tx = WIDTH - MARGIN_RIGHT + 36.0,
            ty = ly + 4.0,
            name = s.name,
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn format_tick(value: f64) -> String {
    if value == 0.0 {
        "0".to_string()
    } else if value.abs() >= 1000.0 || value.abs() < 0.01 {
        format!("{value:.2e}")
    } else {
        format!("{value:.2}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::runner::run_experiment;

    fn small_trace(oracle: bool) -> RunTrace {
        let config = RunConfig::from_json(
            &serde_json::json!({
                "problem": {
                    "kind": "noisy_quadratic",
                    "dimension": 2,
                    "learning_rate": 0.1,
                    "noise_scale": 0.01,
                    "seed": 5,
                    "steps": 120
                },
                "eval_period": 10,
                "algorithms": ["tta_core", "polyak"],
                "oracle_enabled": oracle
            })
            .to_string(),
        )
        .unwrap();
        run_experiment(&config).unwrap().trace
    }

    #[test]
    fn emits_both_charts() {
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_plots(&small_trace(true), dir.path()).unwrap();
        assert_eq!(paths.len(), 2);
        for path in &paths {
            let text = std::fs::read_to_string(path).unwrap();
            assert!(text.starts_with("<svg"));
            assert!(text.ends_with("</svg>\n"));
            assert!(text.contains("polyline"));
        }
        let loss = std::fs::read_to_string(&paths[0]).unwrap();
        assert!(loss.contains("optimal tail"));
        assert!(loss.contains("polyak"));
        let lengths = std::fs::read_to_string(&paths[1]).unwrap();
        assert!(lengths.contains("2*optimal + E"));
    }

    #[test]
    fn regeneration_is_byte_identical() {
        let trace = small_trace(true);
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        emit_plots(&trace, dir_a.path()).unwrap();
        emit_plots(&trace, dir_b.path()).unwrap();
        for name in ["loss.svg", "lengths.svg"] {
            let a = std::fs::read(dir_a.path().join(name)).unwrap();
            let b = std::fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn refuses_empty_trace() {
        let mut trace = small_trace(false);
        trace.records.clear();
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_plots(&trace, dir.path()).is_err());
    }
}

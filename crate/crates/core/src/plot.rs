//! Minimal SVG line plot of a pulse train with arrival markers.

use std::fmt::Write as _;

use crate::tdtransform::{Arrival, TimeResponse};

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 40.0;

/// Plot `tr` over `[0, t_end]`. Each pixel column keeps its minimum and
/// maximum sample so narrow pulses survive the decimation.
pub fn time_response_svg(
    tr: &TimeResponse,
    arrivals: &[Arrival],
    t_end: f64,
    title: &str,
) -> String {
    let t_end = if t_end > 0.0 {
        t_end
    } else {
        tr.time(tr.len().max(1))
    };
    let n_end = ((t_end / tr.dt).ceil() as usize).min(tr.len());
    let samples = &tr.values[..n_end];
    let peak = samples.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let peak = if peak > 0.0 { peak } else { 1.0 };

    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let x = |t: f64| MARGIN + plot_w * t / t_end;
    let y = |v: f64| MARGIN + plot_h * (0.5 - 0.5 * v / peak);

    let columns = plot_w as usize;
    let mut points = String::new();
    for c in 0..columns {
        let lo = c * n_end / columns;
        let hi = ((c + 1) * n_end / columns).max(lo + 1).min(n_end);
        if lo >= hi {
            continue;
        }
        let chunk = &samples[lo..hi];
        let (min, max) = chunk
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                (a.min(v), b.max(v))
            });
        let t = tr.time(lo);
        let _ = write!(
            points,
            "{:.2},{:.2} {:.2},{:.2} ",
            x(t),
            y(max),
            x(t),
            y(min)
        );
    }

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{MARGIN}" y="20">{}</text>"#, escape(title));
    let _ = writeln!(
        svg,
        r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#999"/>"##,
        x(0.0),
        y(0.0),
        x(t_end),
        y(0.0)
    );
    let ticks = t_end.ceil() as usize;
    for k in 0..=ticks {
        let t = k as f64;
        if t > t_end {
            break;
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{k}</text>"#,
            x(t),
            HEIGHT - MARGIN + 16.0
        );
    }
    let _ = writeln!(
        svg,
        r##"<polyline fill="none" stroke="#1f4e9c" stroke-width="0.8" points="{}"/>"##,
        points.trim_end()
    );
    for a in arrivals.iter().filter(|a| a.time <= t_end) {
        let _ = writeln!(
            svg,
            r##"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="#c0392b"/>"##,
            x(a.time),
            y(a.amplitude)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

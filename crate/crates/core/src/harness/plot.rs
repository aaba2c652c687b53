//! Minimal static SVG charts. Every plotted statistic is also stored in a
//! `data-value` attribute with full precision so it can be checked against
//! the companion CSV.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 70.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

/// Linear map from data range to the vertical pixel range.
struct YScale {
    lo: f64,
    hi: f64,
}

impl YScale {
    fn new(values: impl Iterator<Item = f64>, include_zero: bool) -> Self {
        let (mut lo, mut hi) = values
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                (a.min(v), b.max(v))
            });
        if !lo.is_finite() {
            lo = 0.0;
            hi = 1.0;
        }
        if include_zero {
            lo = lo.min(0.0);
            hi = hi.max(0.0);
        }
        if hi - lo < 1e-12 {
            let pad = lo.abs().max(1.0) * 0.1;
            lo -= pad;
            hi += pad;
        }
        let pad = (hi - lo) * 0.05;
        Self {
            lo: lo - pad,
            hi: hi + pad,
        }
    }

    fn px(&self, v: f64) -> f64 {
        let plot = HEIGHT - TOP - BOTTOM;
        TOP + plot * (1.0 - (v - self.lo) / (self.hi - self.lo))
    }
}

fn open(out: &mut String, title: &str, y_label: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(
        out,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = write!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = write!(
        out,
        r#"<text transform="translate(16 {}) rotate(-90)" text-anchor="middle">{}</text>"#,
        (TOP + HEIGHT - BOTTOM) / 2.0,
        escape(y_label)
    );
}

fn axes(out: &mut String, y: &YScale) {
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let _ = write!(
        out,
        r#"<line x1="{x0}" y1="{TOP}" x2="{x0}" y2="{}" stroke="black"/>"#,
        HEIGHT - BOTTOM
    );
    let _ = write!(
        out,
        r#"<line x1="{x0}" y1="{b}" x2="{x1}" y2="{b}" stroke="black"/>"#,
        b = HEIGHT - BOTTOM
    );
    for k in 0..=4 {
        let v = y.lo + (y.hi - y.lo) * k as f64 / 4.0;
        let py = y.px(v);
        let _ = write!(
            out,
            r##"<line x1="{}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
            x0 - 4.0,
            x0 - 6.0,
            py + 4.0,
            tick(v)
        );
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn x_label(out: &mut String, x: f64, text: &str) {
    let _ = write!(
        out,
        r#"<text transform="translate({x:.2} {:.2}) rotate(30)" text-anchor="start">{}</text>"#,
        HEIGHT - BOTTOM + 14.0,
        escape(text)
    );
}

/// One bar per `(label, value)`.
pub fn bar_chart(title: &str, y_label: &str, bars: &[(String, f64)]) -> String {
    let mut out = String::new();
    open(&mut out, title, y_label);
    let y = YScale::new(bars.iter().map(|b| b.1), true);
    axes(&mut out, &y);
    let slot = (WIDTH - LEFT - RIGHT) / bars.len().max(1) as f64;
    let zero = y.px(0.0);
    for (i, (label, v)) in bars.iter().enumerate() {
        let x = LEFT + slot * (i as f64 + 0.15);
        let top = y.px(*v);
        let _ = write!(
            out,
            r#"<rect class="bar" data-label="{}" data-value="{v}" x="{x:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
            escape(label),
            top.min(zero),
            slot * 0.7,
            (top - zero).abs(),
            color(i)
        );
        x_label(&mut out, x + slot * 0.2, label);
    }
    out.push_str("</svg>\n");
    out
}

/// A named curve with a central value and a band per x-position.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub median: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Curves over equally spaced categorical x-positions, each with a shaded
/// band between `lower` and `upper`.
pub fn line_chart(
    title: &str,
    x_title: &str,
    y_label: &str,
    xs: &[f64],
    series: &[Series],
) -> String {
    let mut out = String::new();
    open(&mut out, title, y_label);
    let y = YScale::new(
        series
            .iter()
            .flat_map(|s| s.median.iter().chain(&s.lower).chain(&s.upper).copied()),
        false,
    );
    axes(&mut out, &y);
    let step = (WIDTH - LEFT - RIGHT - 120.0) / (xs.len().max(2) - 1) as f64;
    let px = |i: usize| LEFT + 20.0 + step * i as f64;
    for (i, x) in xs.iter().enumerate() {
        let _ = write!(
            out,
            r#"<text class="x-position" data-value="{x}" x="{:.2}" y="{:.2}" text-anchor="middle">{x}</text>"#,
            px(i),
            HEIGHT - BOTTOM + 16.0
        );
    }
    let _ = write!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (LEFT + WIDTH - RIGHT - 120.0) / 2.0,
        HEIGHT - 20.0,
        escape(x_title)
    );
    for (k, s) in series.iter().enumerate() {
        let c = color(k);
        let band: Vec<String> = (0..xs.len())
            .map(|i| format!("{:.2},{:.2}", px(i), y.px(s.upper[i])))
            .chain(
                (0..xs.len())
                    .rev()
                    .map(|i| format!("{:.2},{:.2}", px(i), y.px(s.lower[i]))),
            )
            .collect();
        let _ = write!(
            out,
            r#"<polygon class="band" points="{}" fill="{c}" fill-opacity="0.2" stroke="none"/>"#,
            band.join(" ")
        );
        let line: Vec<String> = (0..xs.len())
            .map(|i| format!("{:.2},{:.2}", px(i), y.px(s.median[i])))
            .collect();
        let _ = write!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#,
            line.join(" ")
        );
        for (i, x) in xs.iter().enumerate() {
            let _ = write!(
                out,
                r#"<circle class="median" data-series="{}" data-x="{x}" data-value="{}" cx="{:.2}" cy="{:.2}" r="3" fill="{c}"/>"#,
                escape(&s.name),
                s.median[i],
                px(i),
                y.px(s.median[i])
            );
        }
        let ly = TOP + 16.0 * k as f64;
        let _ = write!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="12" height="12" fill="{c}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            WIDTH - 110.0,
            ly,
            WIDTH - 94.0,
            ly + 10.0,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Five-number summary `[min, q25, median, q75, max]` per group.
pub fn box_plot(title: &str, y_label: &str, boxes: &[(String, [f64; 5])]) -> String {
    let mut out = String::new();
    open(&mut out, title, y_label);
    let y = YScale::new(boxes.iter().flat_map(|b| b.1), false);
    axes(&mut out, &y);
    let slot = (WIDTH - LEFT - RIGHT) / boxes.len().max(1) as f64;
    for (i, (label, q)) in boxes.iter().enumerate() {
        let c = color(i);
        let mid = LEFT + slot * (i as f64 + 0.5);
        let half = slot * 0.25;
        let _ = write!(
            out,
            r#"<line x1="{mid:.2}" y1="{:.2}" x2="{mid:.2}" y2="{:.2}" stroke="{c}"/>"#,
            y.px(q[0]),
            y.px(q[4])
        );
        let _ = write!(
            out,
            r#"<rect class="box" data-label="{}" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{c}" fill-opacity="0.3" stroke="{c}"/>"#,
            escape(label),
            mid - half,
            y.px(q[3]),
            2.0 * half,
            (y.px(q[1]) - y.px(q[3])).abs()
        );
        let _ = write!(
            out,
            r#"<line class="median" data-label="{}" data-value="{}" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
            escape(label),
            q[2],
            mid - half,
            y.px(q[2]),
            mid + half,
            y.px(q[2])
        );
        x_label(&mut out, mid - half, label);
    }
    out.push_str("</svg>\n");
    out
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

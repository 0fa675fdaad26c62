//! Minimal SVG figures: line charts and 2D trajectory overlays.

use std::fmt::Write as _;

use crate::domains::maze::MazeSpec;
use crate::trajectory::Trajectory;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit(points: impl Iterator<Item = (f64, f64)>) -> Self {
        let (mut x, mut y) = ((f64::INFINITY, f64::NEG_INFINITY), (f64::INFINITY, f64::NEG_INFINITY));
        for (px, py) in points.filter(|p| p.0.is_finite() && p.1.is_finite()) {
            x = (x.0.min(px), x.1.max(px));
            y = (y.0.min(py), y.1.max(py));
        }
        let pad = |r: (f64, f64)| {
            if !r.0.is_finite() {
                (0.0, 1.0)
            } else if r.0 == r.1 {
                (r.0 - 0.5, r.1 + 0.5)
            } else {
                r
            }
        };
        Self { x: pad(x), y: pad(y) }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    s
}

fn polyline(s: &mut String, frame: &Frame, pts: &[(f64, f64)], color: &str, width: f64, opacity: f64) {
    let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y))).collect();
    let _ = writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="{width}" stroke-opacity="{opacity}"/>"#,
        coords.join(" ")
    );
}

/// Line chart with axes, tick labels at the data extremes, and a legend.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let frame = Frame::fit(series.iter().flat_map(|s| s.points.iter().copied()));
    let mut s = header(title);
    let (x0, y0, x1, y1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN, MARGIN);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    let label = r#"font-family="sans-serif" font-size="11""#;
    let _ = writeln!(s, r#"<text x="{x0}" y="{}" {label}>{:.3}</text>"#, y0 + 15.0, frame.x.0);
    let _ = writeln!(s, r#"<text x="{x1}" y="{}" text-anchor="end" {label}>{:.3}</text>"#, y0 + 15.0, frame.x.1);
    let _ = writeln!(s, r#"<text x="{}" y="{y0}" text-anchor="end" {label}>{:.3}</text>"#, x0 - 4.0, frame.y.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end" {label}>{:.3}</text>"#, x0 - 4.0, y1 + 4.0, frame.y.1);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" {label}>{}</text>"#, WIDTH / 2.0, HEIGHT - 12.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})" {label}>{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        polyline(&mut s, &frame, &ser.points, color, 2.0, 1.0);
        for &(x, y) in &ser.points {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, frame.px(x), frame.py(y));
        }
        let ly = MARGIN + 14.0 * i as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{ly}" fill="{color}" {label}>{}</text>"#, x1 - 90.0, escape(&ser.name));
    }
    s.push_str("</svg>\n");
    s
}

/// Overlay of the first two state dimensions of `samples` (thin) and an
/// optional reference trajectory (thick), on top of a maze when given.
pub fn trajectory_overlay(title: &str, samples: &[Trajectory], reference: Option<&Trajectory>, maze: Option<&MazeSpec>) -> String {
    let xy = |t: &Trajectory| -> Vec<(f64, f64)> { t.states().map(|s| (s[0], s.get(1).copied().unwrap_or(0.0))).collect() };
    let mut all: Vec<(f64, f64)> = samples.iter().chain(reference).flat_map(xy).collect();
    if let Some(m) = maze {
        all.push((0.0, 0.0));
        all.push((m.cols() as f64 * m.cell_size, m.rows() as f64 * m.cell_size));
    }
    let frame = Frame::fit(all.into_iter());
    let mut s = header(title);
    if let Some(m) = maze {
        let cs = m.cell_size;
        for r in 0..m.rows() {
            for c in 0..m.cols() {
                if m.is_occupied((r, c)) {
                    let (xa, xb) = (frame.px(c as f64 * cs), frame.px((c + 1) as f64 * cs));
                    let (ya, yb) = (frame.py(r as f64 * cs), frame.py((r + 1) as f64 * cs));
                    let _ = writeln!(
                        s,
                        r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#444"/>"##,
                        xa.min(xb),
                        ya.min(yb),
                        (xb - xa).abs(),
                        (yb - ya).abs()
                    );
                }
            }
        }
    }
    for t in samples {
        polyline(&mut s, &frame, &xy(t), PALETTE[0], 1.0, 0.5);
    }
    if let Some(r) = reference {
        polyline(&mut s, &frame, &xy(r), PALETTE[1], 2.5, 1.0);
    }
    s.push_str("</svg>\n");
    s
}

//! Minimal SVG scatter plots.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Scatter of `(x, y)` points with a dashed horizontal reference line.
pub fn ratio_scatter(points: &[(f64, f64)], reference: f64, y_label: &str) -> String {
    let x_max = points.iter().map(|p| p.0).fold(1.0, f64::max);
    let y_max = points.iter().map(|p| p.1).fold(reference, f64::max) * 1.1;
    let sx = |x: f64| MARGIN + (WIDTH - 2.0 * MARGIN) * x / x_max;
    let sy = |y: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * y / y_max;

    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#);
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, y0, x1, y1) = (sx(0.0), sy(0.0), sx(x_max), sy(y_max));
    let _ = writeln!(out, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}" stroke="black"/>"#);
    let _ = writeln!(out, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}" stroke="black"/>"#);
    let yr = sy(reference);
    let _ = writeln!(out, r#"<line x1="{x0:.2}" y1="{yr:.2}" x2="{x1:.2}" y2="{yr:.2}" stroke="red" stroke-dasharray="6 4"/>"#);
    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" font-size="12" fill="red">{reference:.4}</text>"#, x1 - 40.0, yr - 4.0);
    for &(x, y) in points {
        let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="steelblue"/>"#, sx(x), sy(y));
    }
    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">n</text>"#, 0.5 * (x0 + x1), HEIGHT - 15.0);
    let _ = writeln!(out, r#"<text x="15" y="{:.2}" font-size="12" transform="rotate(-90 15 {:.2})" text-anchor="middle">{}</text>"#, 0.5 * (y0 + y1), 0.5 * (y0 + y1), escape(y_label));
    let _ = writeln!(out, r#"<text x="{x0:.2}" y="{:.2}" font-size="10">0</text>"#, y0 + 14.0);
    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{x_max}</text>"#, x1, y0 + 14.0);
    out.push_str("</svg>\n");
    out
}

//! Minimal SVG line charts.

use std::fmt::Write as _;

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 260.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 48.0;

pub struct Panel<'a> {
    pub title: &'a str,
    pub y_label: &'a str,
    pub points: Vec<(f64, f64)>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e-2 && v.abs() < 1e4 {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.1e}")
    }
}

/// Panels side by side, sharing the x values. The x axis is log₂ when every
/// x is positive and they span at least a factor of 4.
pub fn line_chart(title: &str, x_label: &str, series_name: &str, panels: &[Panel<'_>]) -> String {
    let width = PANEL_W * panels.len() as f64;
    let height = PANEL_H + 24.0;
    let mut s = String::new();
    writeln!(
        s,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="16" text-anchor="middle" font-size="13">{}</text>"#,
        width / 2.0,
        esc(title)
    )
    .unwrap();
    for (p, panel) in panels.iter().enumerate() {
        let ox = p as f64 * PANEL_W;
        let oy = 24.0;
        let xs: Vec<f64> = panel.points.iter().map(|q| q.0).collect();
        let log = xs.iter().all(|&x| x > 0.0)
            && xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                >= 4.0 * xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let tx = |x: f64| if log { x.log2() } else { x };
        let (x0, x1) = xs
            .iter()
            .map(|&x| tx(x))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        let (x0, x1) = if x1 > x0 { (x0, x1) } else { (x0 - 1.0, x0 + 1.0) };
        let y_max = panel
            .points
            .iter()
            .map(|q| q.1)
            .filter(|v| v.is_finite())
            .fold(0.0f64, f64::max);
        let y_max = if y_max > 0.0 { y_max * 1.05 } else { 1.0 };
        let (px0, px1) = (ox + MARGIN_L, ox + PANEL_W - MARGIN_R);
        let (py0, py1) = (oy + PANEL_H - MARGIN_B, oy + MARGIN_T);
        let sx = |x: f64| px0 + (tx(x) - x0) / (x1 - x0) * (px1 - px0);
        let sy = |y: f64| py0 + y / y_max * (py1 - py0);

        writeln!(
            s,
            r#"<g>
<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>
<line x1="{px0}" y1="{py0}" x2="{px1}" y2="{py0}" stroke="black"/>
<line x1="{px0}" y1="{py0}" x2="{px0}" y2="{py1}" stroke="black"/>"#,
            (px0 + px1) / 2.0,
            oy + 20.0,
            esc(panel.title)
        )
        .unwrap();
        for &x in &xs {
            let gx = sx(x);
            writeln!(
                s,
                r#"<line x1="{gx}" y1="{py0}" x2="{gx}" y2="{}" stroke="black"/><text x="{gx}" y="{}" text-anchor="middle">{}</text>"#,
                py0 + 4.0,
                py0 + 16.0,
                tick_label(x)
            )
            .unwrap();
        }
        for i in 0..=4 {
            let y = y_max * i as f64 / 4.0;
            let gy = sy(y);
            writeln!(
                s,
                r##"<line x1="{}" y1="{gy}" x2="{px0}" y2="{gy}" stroke="black"/><line x1="{px0}" y1="{gy}" x2="{px1}" y2="{gy}" stroke="#dddddd"/><text x="{}" y="{}" text-anchor="end">{}</text>"##,
                px0 - 4.0,
                px0 - 6.0,
                gy + 4.0,
                tick_label(y)
            )
            .unwrap();
        }
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>
<text x="{}" y="{}" text-anchor="middle" transform="rotate(-90 {} {})">{}</text>"#,
            (px0 + px1) / 2.0,
            py0 + 34.0,
            esc(x_label),
            ox + 14.0,
            (py0 + py1) / 2.0,
            ox + 14.0,
            (py0 + py1) / 2.0,
            esc(panel.y_label)
        )
        .unwrap();
        let pts: Vec<String> = panel
            .points
            .iter()
            .filter(|q| q.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        writeln!(
            s,
            r##"<polyline fill="none" stroke="#1f77b4" stroke-width="2" points="{}"><title>{}</title></polyline>"##,
            pts.join(" "),
            esc(series_name)
        )
        .unwrap();
        for &(x, y) in panel.points.iter().filter(|q| q.1.is_finite()) {
            writeln!(
                s,
                r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#1f77b4"/>"##,
                sx(x),
                sy(y)
            )
            .unwrap();
        }
        writeln!(
            s,
            r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#1f77b4" stroke-width="2"/><text x="{}" y="{}">{}</text>
</g>"##,
            px1 - 90.0,
            py1 + 4.0,
            px1 - 70.0,
            py1 + 4.0,
            px1 - 66.0,
            py1 + 8.0,
            esc(series_name)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

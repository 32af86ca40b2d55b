//! Minimal static SVG charts: axes, tick labels, series and a legend.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    Line,
    Circle,
    Cross,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub mark: Mark,
    /// Index into the palette.
    pub color: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Dashed vertical reference lines.
    pub vlines: Vec<f64>,
    /// Fixed y range; otherwise fitted to the data.
    pub y_range: Option<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick_label(v: f64, span: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if span < 1e-2 || v.abs() >= 1e4 {
        format!("{v:.1e}")
    } else if span < 1.0 {
        format!("{v:.3}")
    } else {
        format!("{v:.1}")
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

impl Chart {
    pub fn render(&self) -> String {
        let (x0, x1) = range(self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).chain(self.vlines.iter().copied()));
        let (y0, y1) = self
            .y_range
            .unwrap_or_else(|| range(self.series.iter().flat_map(|s| s.points.iter().map(|p| p.1))));
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for k in 0..=4 {
            let t = k as f64 / 4.0;
            let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
            let (px, py) = (sx(xv), sy(yv));
            let _ = writeln!(
                out,
                r#"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}" stroke="black"/><text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#,
                TOP + ph,
                TOP + ph + 5.0,
                TOP + ph + 18.0,
                tick_label(xv, x1 - x0)
            );
            let _ = writeln!(
                out,
                r#"<line x1="{}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 5.0,
                LEFT - 8.0,
                py + 4.0,
                tick_label(yv, y1 - y0)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 10.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        for &v in &self.vlines {
            let _ = writeln!(
                out,
                r#"<line x1="{0:.2}" y1="{TOP}" x2="{0:.2}" y2="{1}" stroke="gray" stroke-dasharray="4 3"/>"#,
                sx(v),
                TOP + ph
            );
        }

        for s in &self.series {
            let color = PALETTE[s.color % PALETTE.len()];
            match s.mark {
                Mark::Line => {
                    let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                    let _ = writeln!(
                        out,
                        r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                        pts.join(" ")
                    );
                }
                Mark::Circle => {
                    for &(x, y) in &s.points {
                        let _ = writeln!(
                            out,
                            r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}" fill-opacity="0.6"/>"#,
                            sx(x),
                            sy(y)
                        );
                    }
                }
                Mark::Cross => {
                    for &(x, y) in &s.points {
                        let (cx, cy) = (sx(x), sy(y));
                        let _ = writeln!(
                            out,
                            r#"<path d="M{:.2} {:.2}L{:.2} {:.2}M{:.2} {:.2}L{:.2} {:.2}" stroke="{color}"/>"#,
                            cx - 3.0,
                            cy - 3.0,
                            cx + 3.0,
                            cy + 3.0,
                            cx - 3.0,
                            cy + 3.0,
                            cx + 3.0,
                            cy - 3.0
                        );
                    }
                }
            }
        }

        for (i, s) in self.series.iter().enumerate() {
            let y = TOP + 10.0 + 18.0 * i as f64;
            let x = WIDTH - RIGHT + 12.0;
            let color = PALETTE[s.color % PALETTE.len()];
            let _ = match s.mark {
                Mark::Line => writeln!(
                    out,
                    r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/>"#,
                    x + 16.0
                ),
                Mark::Circle => writeln!(out, r#"<circle cx="{}" cy="{y}" r="3" fill="{color}"/>"#, x + 8.0),
                Mark::Cross => writeln!(
                    out,
                    r#"<path d="M{} {}L{} {}M{} {}L{} {}" stroke="{color}"/>"#,
                    x + 5.0,
                    y - 3.0,
                    x + 11.0,
                    y + 3.0,
                    x + 5.0,
                    y + 3.0,
                    x + 11.0,
                    y - 3.0
                ),
            };
            let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, x + 22.0, y + 4.0, escape(&s.label));
        }
        out.push_str("</svg>\n");
        out
    }
}

/// Gaussian kernel density estimate on `points` grid values spanning the
/// sample, with Silverman's bandwidth.
pub fn density(sample: &[f64], points: usize) -> Vec<(f64, f64)> {
    let n = sample.len();
    if n == 0 || points < 2 {
        return Vec::new();
    }
    let mean = sample.iter().sum::<f64>() / n as f64;
    let var = sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
    let mut h = 1.06 * var.sqrt() * (n as f64).powf(-0.2);
    if h <= 0.0 || !h.is_finite() {
        h = mean.abs().max(1e-12) * 0.01;
    }
    let lo = sample.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = sample.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let norm = 1.0 / (n as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    (0..points)
        .map(|k| {
            let x = lo + (hi - lo) * k as f64 / (points - 1) as f64;
            let y: f64 = sample.iter().map(|v| (-0.5 * ((x - v) / h).powi(2)).exp()).sum();
            (x, y * norm)
        })
        .collect()
}

//! Self-contained SVG figures: relative PD against log2 z, and relative PD
//! against excess loss with each point labelled by its log2 z.

use std::fmt::Write as _;

use crate::harness::SweepRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureKind {
    PdVsLogz,
    PdVsLoss,
}

impl FigureKind {
    pub fn file_name(self) -> &'static str {
        match self {
            FigureKind::PdVsLogz => "pd_vs_logz.svg",
            FigureKind::PdVsLoss => "pd_vs_loss.svg",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureSpec {
    pub kind: FigureKind,
    pub series: Vec<Series>,
    pub log_x: bool,
    pub log_y: bool,
    pub x_label: String,
    pub y_label: String,
}

/// Groups sweep rows by variant, in first-appearance order, with points in
/// ascending log2 z.
fn grouped(rows: &[SweepRow]) -> Vec<(String, Vec<&SweepRow>)> {
    let mut out: Vec<(String, Vec<&SweepRow>)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(v, _)| *v == r.variant) {
            Some((_, rs)) => rs.push(r),
            None => out.push((r.variant.clone(), vec![r])),
        }
    }
    for (_, rs) in &mut out {
        rs.sort_by_key(|r| r.log2_z);
    }
    out
}

pub fn figure(kind: FigureKind, rows: &[SweepRow]) -> FigureSpec {
    let series = grouped(rows)
        .into_iter()
        .map(|(label, rs)| Series {
            label,
            points: rs
                .into_iter()
                .map(|r| match kind {
                    FigureKind::PdVsLogz => Point {
                        x: r.log2_z as f64,
                        y: r.mean_pd,
                        note: None,
                    },
                    FigureKind::PdVsLoss => Point {
                        x: r.mean_loss,
                        y: r.mean_pd,
                        note: Some(r.log2_z.to_string()),
                    },
                })
                .collect(),
        })
        .collect();
    let x_label = match kind {
        FigureKind::PdVsLogz => "log2 z",
        FigureKind::PdVsLoss => "excess loss L (nats)",
    };
    FigureSpec {
        kind,
        series,
        log_x: false,
        log_y: true,
        x_label: x_label.into(),
        y_label: "relative PD".into(),
    }
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const MARKERS: usize = 4;

#[derive(Debug, Clone)]
struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
    ticks: Vec<f64>,
}

impl Axis {
    fn linear(values: &[f64]) -> Axis {
        let (mut lo, mut hi) = bounds(values.iter().copied()).unwrap_or((0.0, 1.0));
        if hi - lo < 1e-12 * hi.abs().max(1.0) {
            lo -= 0.5 * lo.abs().max(1.0);
            hi += 0.5 * hi.abs().max(1.0);
        }
        let step = nice_step((hi - lo) / 5.0);
        let lo = (lo / step).floor() * step;
        let hi = (hi / step).ceil() * step;
        let n = ((hi - lo) / step).round() as usize;
        let ticks = (0..=n).map(|i| lo + i as f64 * step).collect();
        Axis { lo, hi, log: false, ticks }
    }

    /// Decade-aligned log axis. The floor sits one decade below the smallest
    /// positive value when nonpositive values have to be shown there.
    fn log(values: &[f64]) -> Axis {
        let pos = bounds(values.iter().copied().filter(|v| *v > 0.0));
        let (mut lo, hi) = match pos {
            Some((a, b)) => (a.log10().floor() as i32, b.log10().ceil() as i32),
            None => (-1, 0),
        };
        if values.iter().any(|v| *v <= 0.0) && pos.is_some() {
            lo -= 1;
        }
        let hi = hi.max(lo + 1);
        Axis {
            lo: lo as f64,
            hi: hi as f64,
            log: true,
            ticks: (lo..=hi).map(|e| 10f64.powi(e)).collect(),
        }
    }

    fn floor(&self) -> f64 {
        if self.log {
            10f64.powf(self.lo)
        } else {
            self.lo
        }
    }

    fn frac(&self, v: f64) -> f64 {
        let t = if self.log {
            if v > 0.0 {
                v.log10()
            } else {
                self.lo
            }
        } else {
            v
        };
        ((t - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }

    fn tick_label(&self, v: f64) -> String {
        if self.log {
            format!("1e{}", v.log10().round() as i32)
        } else {
            let s = format!("{v:.6}");
            let s = s.trim_end_matches('0').trim_end_matches('.');
            if s == "-0" { "0".into() } else { s.to_string() }
        }
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values
        .filter(|v| v.is_finite())
        .fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((a, b)) => Some((a.min(v), b.max(v))),
        })
}

fn nice_step(raw: f64) -> f64 {
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let m = if f <= 1.0 {
        1.0
    } else if f <= 2.0 {
        2.0
    } else if f <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn marker(out: &mut String, shape: usize, x: f64, y: f64, color: &str) {
    let _ = match shape % MARKERS {
        0 => writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{color}"/>"#),
        1 => writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="8" height="8" fill="{color}"/>"#,
            x - 4.0,
            y - 4.0
        ),
        2 => writeln!(
            out,
            r#"<path d="M{x:.2} {:.2}L{:.2} {:.2}L{:.2} {:.2}Z" fill="{color}"/>"#,
            y - 5.0,
            x + 5.0,
            y + 4.0,
            x - 5.0,
            y + 4.0
        ),
        _ => writeln!(
            out,
            r#"<path d="M{x:.2} {:.2}L{:.2} {y:.2}L{x:.2} {:.2}L{:.2} {y:.2}Z" fill="{color}"/>"#,
            y - 5.0,
            x + 5.0,
            y + 5.0,
            x - 5.0
        ),
    };
}

/// Renders `fig` as a standalone SVG document. Identical input gives
/// byte-identical output.
pub fn render_svg(fig: &FigureSpec, config_hash: Option<&str>) -> String {
    let xs: Vec<f64> = fig.series.iter().flat_map(|s| s.points.iter().map(|p| p.x)).collect();
    let ys: Vec<f64> = fig.series.iter().flat_map(|s| s.points.iter().map(|p| p.y)).collect();
    let xa = if fig.log_x { Axis::log(&xs) } else { Axis::linear(&xs) };
    let ya = if fig.log_y { Axis::log(&ys) } else { Axis::linear(&ys) };
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |v: f64| LEFT + xa.frac(v) * pw;
    let py = |v: f64| TOP + (1.0 - ya.frac(v)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    if let Some(h) = config_hash {
        let _ = writeln!(s, "<!-- config {} -->", escape(h));
    }
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );

    for &t in &xa.ticks {
        let x = px(t);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#dddddd"/>"##,
            TOP + ph
        );
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + ph + 18.0,
            xa.tick_label(t)
        );
    }
    for &t in &ya.ticks {
        let y = py(t);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            LEFT + pw
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            y + 4.0,
            ya.tick_label(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 18.0,
        escape(&fig.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(20 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + ph / 2.0,
        escape(&fig.y_label)
    );

    let floor = ya.floor();
    for (i, series) in fig.series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<(f64, f64)> = series
            .points
            .iter()
            .map(|p| (px(p.x), py(if fig.log_y && p.y <= 0.0 { floor } else { p.y })))
            .collect();
        if pts.len() > 1 {
            let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                path.join(" ")
            );
        }
        for (p, &(x, y)) in series.points.iter().zip(&pts) {
            marker(&mut s, i, x, y, color);
            if let Some(note) = &p.note {
                let _ = writeln!(
                    s,
                    r#"<text x="{:.2}" y="{:.2}" font-size="10" fill="{color}">{}</text>"#,
                    x + 6.0,
                    y - 6.0,
                    escape(note)
                );
            }
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 16.0;
        marker(&mut s, i, lx, ly, color);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 10.0,
            ly + 4.0,
            escape(&series.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Both figures for a sweep, as `(file name, svg)` pairs.
pub fn render_figures(rows: &[SweepRow], config_hash: Option<&str>) -> Vec<(&'static str, String)> {
    [FigureKind::PdVsLogz, FigureKind::PdVsLoss]
        .into_iter()
        .map(|k| (k.file_name(), render_svg(&figure(k, rows), config_hash)))
        .collect()
}

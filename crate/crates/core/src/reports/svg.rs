//! Static SVG charts: grouped bars, lines with gaps, and 4-class heatmaps.
//!
//! Charts only print values that also appear in the CSV they are drawn
//! from, formatted the same way; axes carry no invented tick numbers.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fmt_value;

#[derive(Debug, Error, PartialEq)]
pub enum ChartError {
    #[error("chart '{0}' has no data")]
    Empty(String),
    #[error("series '{series}' has {found} values for {expected} categories")]
    Misaligned {
        series: String,
        expected: usize,
        found: usize,
    },
    #[error("heatmap needs one level per cell")]
    MissingLevels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChartKind {
    Bars,
    Lines,
    Heatmap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueFormat {
    Integer,
    #[default]
    Real,
}

impl ValueFormat {
    pub fn format(self, v: f64) -> String {
        match self {
            ValueFormat::Integer => format!("{}", v.round() as i64),
            ValueFormat::Real => fmt_value(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    /// One value per category; `None` is a gap.
    pub values: Vec<Option<f64>>,
    /// Half-width of an error bar per category (lines only).
    pub errors: Option<Vec<Option<f64>>>,
}

impl Series {
    pub fn new(name: impl Into<String>, values: Vec<Option<f64>>) -> Self {
        Series {
            name: name.into(),
            values,
            errors: None,
        }
    }
}

/// A chart to draw. For heatmaps `categories` are the columns, each series is
/// a row, and `levels` gives the class (0 to 3) of every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartSpec {
    pub kind: ChartKind,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub categories: Vec<String>,
    pub series: Vec<Series>,
    pub levels: Option<Vec<Vec<u8>>>,
    pub format: ValueFormat,
    /// Heatmap legend: the three class edges, descending.
    pub legend: Option<[f64; 3]>,
}

impl ChartSpec {
    pub fn new(kind: ChartKind, title: impl Into<String>) -> Self {
        ChartSpec {
            kind,
            title: title.into(),
            x_label: String::new(),
            y_label: String::new(),
            categories: Vec::new(),
            series: Vec::new(),
            levels: None,
            format: ValueFormat::Real,
            legend: None,
        }
    }
}

pub const PALETTE: [&str; 8] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666",
];
/// Light green (closest) to red (farthest).
pub const LEVEL_FILLS: [&str; 4] = ["#c7e9c0", "#fdd49e", "#fc8d59", "#d7301f"];

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 80.0;

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c if (c as u32) < 0x20 && c != '\t' && c != '\n' && c != '\r' => {}
            c => out.push(c),
        }
    }
    out
}

fn validate(spec: &ChartSpec) -> Result<(), ChartError> {
    let has_value = spec
        .series
        .iter()
        .any(|s| s.values.iter().any(Option::is_some));
    if spec.categories.is_empty() || spec.series.is_empty() || !has_value {
        return Err(ChartError::Empty(spec.title.clone()));
    }
    for s in &spec.series {
        if s.values.len() != spec.categories.len() {
            return Err(ChartError::Misaligned {
                series: s.name.clone(),
                expected: spec.categories.len(),
                found: s.values.len(),
            });
        }
    }
    if spec.kind == ChartKind::Heatmap {
        let ok = spec.levels.as_ref().is_some_and(|l| {
            l.len() == spec.series.len() && l.iter().all(|r| r.len() == spec.categories.len())
        });
        if !ok {
            return Err(ChartError::MissingLevels);
        }
    }
    Ok(())
}

fn header(out: &mut String, spec: &ChartSpec) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        out,
        r##"<rect class="background" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##
    );
    let _ = writeln!(
        out,
        r#"<text class="title" x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(&spec.title)
    );
    if !spec.x_label.is_empty() {
        let _ = writeln!(
            out,
            r#"<text class="axis-label" x="{}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + (WIDTH - LEFT - RIGHT) / 2.0,
            HEIGHT - 12.0,
            escape(&spec.x_label)
        );
    }
    if !spec.y_label.is_empty() {
        let _ = writeln!(
            out,
            r#"<text class="axis-label" x="18" y="{y}" text-anchor="middle" transform="rotate(-90 18 {y})">{}</text>"#,
            escape(&spec.y_label),
            y = TOP + (HEIGHT - TOP - BOTTOM) / 2.0
        );
    }
}

fn legend(out: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = TOP + 18.0 * i as f64;
        let x = WIDTH - RIGHT + 16.0;
        let _ = writeln!(
            out,
            r#"<rect class="legend" x="{x}" y="{}" width="12" height="12" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            y,
            PALETTE[i % PALETTE.len()],
            x + 18.0,
            y + 10.0,
            escape(name)
        );
    }
}

/// Value range over the data, widened to include `floor` when given.
fn value_range(spec: &ChartSpec, floor: Option<f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in &spec.series {
        for (i, v) in s.values.iter().enumerate() {
            let Some(v) = *v else { continue };
            let e = s.errors.as_ref().and_then(|e| e[i]).unwrap_or(0.0);
            lo = lo.min(v - e);
            hi = hi.max(v + e);
        }
    }
    if let Some(f) = floor {
        lo = lo.min(f);
        hi = hi.max(f);
    }
    if hi - lo <= 0.0 {
        hi = lo + 1.0;
    }
    (lo, hi)
}

fn y_extremes(out: &mut String, spec: &ChartSpec, y: impl Fn(f64) -> f64) {
    let values = spec
        .series
        .iter()
        .flat_map(|s| s.values.iter().flatten().copied());
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| {
        (l.min(v), h.max(v))
    });
    for v in if lo == hi { vec![hi] } else { vec![lo, hi] } {
        let _ = writeln!(
            out,
            r##"<line class="gridline" x1="{LEFT}" x2="{}" y1="{py}" y2="{py}" stroke="#dddddd"/><text class="tick" x="{}" y="{}" text-anchor="end">{}</text>"##,
            WIDTH - RIGHT,
            LEFT - 6.0,
            y(v) + 4.0,
            spec.format.format(v),
            py = y(v)
        );
    }
}

fn category_labels(out: &mut String, spec: &ChartSpec, x: impl Fn(usize) -> f64) {
    let rotate = spec.categories.len() > 8;
    for (i, c) in spec.categories.iter().enumerate() {
        let (px, py) = (x(i), HEIGHT - BOTTOM + 16.0);
        if rotate {
            let _ = writeln!(
                out,
                r#"<text class="category" x="{px}" y="{py}" text-anchor="end" transform="rotate(-40 {px} {py})">{}</text>"#,
                escape(c)
            );
        } else {
            let _ = writeln!(
                out,
                r#"<text class="category" x="{px}" y="{py}" text-anchor="middle">{}</text>"#,
                escape(c)
            );
        }
    }
}

fn bars(out: &mut String, spec: &ChartSpec) {
    let (lo, hi) = value_range(spec, Some(0.0));
    let plot_h = HEIGHT - TOP - BOTTOM;
    let y = |v: f64| TOP + plot_h * (hi - v) / (hi - lo);
    let slot = (WIDTH - LEFT - RIGHT) / spec.categories.len() as f64;
    let bar_w = slot * 0.8 / spec.series.len() as f64;
    y_extremes(out, spec, y);
    let _ = writeln!(
        out,
        r##"<line class="axis" x1="{LEFT}" x2="{}" y1="{z}" y2="{z}" stroke="#333333"/>"##,
        WIDTH - RIGHT,
        z = y(0.0)
    );
    for (si, s) in spec.series.iter().enumerate() {
        for (ci, v) in s.values.iter().enumerate() {
            let Some(v) = *v else { continue };
            let x0 = LEFT + slot * ci as f64 + slot * 0.1 + bar_w * si as f64;
            let (top, bottom) = if v >= 0.0 {
                (y(v), y(0.0))
            } else {
                (y(0.0), y(v))
            };
            let _ = writeln!(
                out,
                r#"<rect class="bar series-{si}" x="{x0:.2}" y="{top:.2}" width="{bar_w:.2}" height="{:.2}" fill="{}"><title>{}: {}</title></rect>"#,
                bottom - top,
                PALETTE[si % PALETTE.len()],
                escape(&format!("{} / {}", s.name, spec.categories[ci])),
                spec.format.format(v)
            );
        }
    }
    category_labels(out, spec, |i| LEFT + slot * (i as f64 + 0.5));
    if spec.series.len() > 1 {
        legend(
            out,
            &spec
                .series
                .iter()
                .map(|s| s.name.as_str())
                .collect::<Vec<_>>(),
        );
    }
}

fn lines(out: &mut String, spec: &ChartSpec) {
    let (lo, hi) = value_range(spec, None);
    let plot_h = HEIGHT - TOP - BOTTOM;
    let pad = (hi - lo) * 0.05;
    let (lo, hi) = (lo - pad, hi + pad);
    let y = |v: f64| TOP + plot_h * (hi - v) / (hi - lo);
    let n = spec.categories.len();
    let step = if n > 1 {
        (WIDTH - LEFT - RIGHT) / (n - 1) as f64
    } else {
        0.0
    };
    let x = |i: usize| {
        if n > 1 {
            LEFT + step * i as f64
        } else {
            LEFT + (WIDTH - LEFT - RIGHT) / 2.0
        }
    };
    y_extremes(out, spec, y);
    for (si, s) in spec.series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        // A gap ends the current segment.
        let mut segment: Vec<(f64, f64)> = Vec::new();
        let flush = |seg: &mut Vec<(f64, f64)>, out: &mut String| {
            if seg.len() > 1 {
                let pts: Vec<String> = seg.iter().map(|(a, b)| format!("{a:.2},{b:.2}")).collect();
                let _ = writeln!(
                    out,
                    r#"<polyline class="line series-{si}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                    pts.join(" ")
                );
            }
            seg.clear();
        };
        for (ci, v) in s.values.iter().enumerate() {
            match *v {
                Some(v) => segment.push((x(ci), y(v))),
                None => flush(&mut segment, out),
            }
        }
        flush(&mut segment, out);
        for (ci, v) in s.values.iter().enumerate() {
            let Some(v) = *v else { continue };
            if let Some(e) = s.errors.as_ref().and_then(|e| e[ci]) {
                let _ = writeln!(
                    out,
                    r#"<line class="error-bar series-{si}" x1="{px:.2}" x2="{px:.2}" y1="{:.2}" y2="{:.2}" stroke="{color}"><title>{}</title></line>"#,
                    y(v + e),
                    y(v - e),
                    spec.format.format(e),
                    px = x(ci)
                );
            }
            let _ = writeln!(
                out,
                r#"<circle class="point series-{si}" cx="{:.2}" cy="{:.2}" r="3" fill="{color}"><title>{}: {}</title></circle>"#,
                x(ci),
                y(v),
                escape(&format!("{} / {}", s.name, spec.categories[ci])),
                spec.format.format(v)
            );
        }
    }
    category_labels(out, spec, x);
    legend(
        out,
        &spec
            .series
            .iter()
            .map(|s| s.name.as_str())
            .collect::<Vec<_>>(),
    );
}

fn heatmap(out: &mut String, spec: &ChartSpec) {
    let levels = spec.levels.as_ref().expect("validated");
    let rows = spec.series.len();
    let cols = spec.categories.len();
    let side = ((WIDTH - LEFT - RIGHT) / cols as f64).min((HEIGHT - TOP - BOTTOM) / rows as f64);
    for (r, s) in spec.series.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text class="row-label" x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            TOP + side * (r as f64 + 0.5) + 4.0,
            escape(&s.name)
        );
        for (c, v) in s.values.iter().enumerate() {
            let Some(v) = *v else { continue };
            let level = levels[r][c].min(3) as usize;
            let (x0, y0) = (LEFT + side * c as f64, TOP + side * r as f64);
            let _ = writeln!(
                out,
                r##"<rect class="cell level-{level}" x="{x0:.2}" y="{y0:.2}" width="{side:.2}" height="{side:.2}" fill="{}" stroke="#ffffff"/><text class="cell-value" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                LEVEL_FILLS[level],
                x0 + side / 2.0,
                y0 + side / 2.0 + 4.0,
                spec.format.format(v)
            );
        }
    }
    for (c, name) in spec.categories.iter().enumerate() {
        let (px, py) = (
            LEFT + side * (c as f64 + 0.5),
            TOP + side * rows as f64 + 16.0,
        );
        let _ = writeln!(
            out,
            r#"<text class="category" x="{px:.2}" y="{py:.2}" text-anchor="end" transform="rotate(-40 {px:.2} {py:.2})">{}</text>"#,
            escape(name)
        );
    }
    if let Some(edges) = spec.legend {
        let labels = [
            format!(">= {}", fmt_value(edges[0])),
            format!(">= {}", fmt_value(edges[1])),
            format!(">= {}", fmt_value(edges[2])),
            format!("< {}", fmt_value(edges[2])),
        ];
        for (k, label) in labels.iter().enumerate() {
            let y = TOP + 18.0 * k as f64;
            let x = WIDTH - RIGHT + 16.0;
            let _ = writeln!(
                out,
                r#"<rect class="legend level-{k}" x="{x}" y="{y}" width="12" height="12" fill="{}"/><text x="{}" y="{}">{}</text>"#,
                LEVEL_FILLS[k],
                x + 18.0,
                y + 10.0,
                escape(label)
            );
        }
    }
}

/// Renders a standalone SVG document.
pub fn render_chart(spec: &ChartSpec) -> Result<String, ChartError> {
    validate(spec)?;
    let mut out = String::new();
    header(&mut out, spec);
    match spec.kind {
        ChartKind::Bars => bars(&mut out, spec),
        ChartKind::Lines => lines(&mut out, spec),
        ChartKind::Heatmap => heatmap(&mut out, spec),
    }
    out.push_str("</svg>\n");
    Ok(out)
}

//! Minimal static SVG charts: axes, polylines, points, vertical markers and
//! shaded bands, laid out as a grid of panels.

use std::fmt::Write;

pub const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 16.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 42.0;

#[derive(Debug, Clone)]
enum Layer {
    Band { x0: f64, x1: f64, fill: String, label: Option<String> },
    Line { points: Vec<Option<(f64, f64)>>, color: String, dashed: bool, label: Option<String> },
    Points { points: Vec<(f64, f64)>, color: String, label: Option<String> },
    VLine { x: f64, color: String, dashed: bool },
    HLine { y: f64, color: String },
}

#[derive(Debug, Clone)]
pub struct Panel {
    title: String,
    x_label: String,
    y_label: String,
    x_range: Option<(f64, f64)>,
    y_range: Option<(f64, f64)>,
    layers: Vec<Layer>,
}

pub fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn widen((lo, hi): (f64, f64)) -> (f64, f64) {
    if (hi - lo).abs() < 1e-12 {
        (lo - 1.0, hi + 1.0)
    } else {
        (lo, hi)
    }
}

/// Round tick positions covering `[lo, hi]`.
pub fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = hi - lo;
    if !(span.is_finite() && span > 0.0) {
        return vec![lo];
    }
    let raw = span / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= target as f64).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".to_string() } else { s.to_string() }
}

impl Panel {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            x_range: None,
            y_range: None,
            layers: Vec::new(),
        }
    }

    pub fn x_range(mut self, lo: f64, hi: f64) -> Self {
        self.x_range = Some((lo, hi));
        self
    }

    pub fn y_range(mut self, lo: f64, hi: f64) -> Self {
        self.y_range = Some((lo, hi));
        self
    }

    pub fn band(&mut self, x0: f64, x1: f64, fill: &str, label: Option<&str>) {
        self.layers.push(Layer::Band { x0, x1, fill: fill.into(), label: label.map(Into::into) });
    }

    /// A polyline; `None` entries break the line.
    pub fn line(&mut self, points: Vec<Option<(f64, f64)>>, color: &str, dashed: bool, label: Option<&str>) {
        self.layers.push(Layer::Line { points, color: color.into(), dashed, label: label.map(Into::into) });
    }

    pub fn points(&mut self, points: Vec<(f64, f64)>, color: &str, label: Option<&str>) {
        self.layers.push(Layer::Points { points, color: color.into(), label: label.map(Into::into) });
    }

    pub fn vline(&mut self, x: f64, color: &str, dashed: bool) {
        self.layers.push(Layer::VLine { x, color: color.into(), dashed });
    }

    pub fn hline(&mut self, y: f64, color: &str) {
        self.layers.push(Layer::HLine { y, color: color.into() });
    }

    fn data_extent(&self) -> ((f64, f64), (f64, f64)) {
        let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
        let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
        let mut see = |x: f64, y: Option<f64>| {
            if x.is_finite() {
                xs = (xs.0.min(x), xs.1.max(x));
            }
            if let Some(y) = y.filter(|y| y.is_finite()) {
                ys = (ys.0.min(y), ys.1.max(y));
            }
        };
        for layer in &self.layers {
            match layer {
                Layer::Line { points, .. } => points.iter().flatten().for_each(|&(x, y)| see(x, Some(y))),
                Layer::Points { points, .. } => points.iter().for_each(|&(x, y)| see(x, Some(y))),
                Layer::Band { x0, x1, .. } => {
                    see(*x0, None);
                    see(*x1, None);
                }
                Layer::VLine { x, .. } => see(*x, None),
                Layer::HLine { y, .. } => see(f64::NAN, Some(*y)),
            }
        }
        let fix = |r: (f64, f64)| if r.0 <= r.1 { r } else { (0.0, 1.0) };
        (fix(xs), fix(ys))
    }

    fn render(&self, out: &mut String, ox: f64, oy: f64, w: f64, h: f64, clip_id: &str) {
        let (dx, dy) = self.data_extent();
        let (x0, x1) = widen(self.x_range.unwrap_or(dx));
        let (y0, y1) = widen(self.y_range.unwrap_or_else(|| {
            let pad = 0.05 * (dy.1 - dy.0);
            (dy.0 - pad, dy.1 + pad)
        }));
        let (left, top) = (ox + MARGIN_LEFT, oy + MARGIN_TOP);
        let (pw, ph) = (w - MARGIN_LEFT - MARGIN_RIGHT, h - MARGIN_TOP - MARGIN_BOTTOM);
        let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

        let _ = writeln!(
            out,
            r#"<clipPath id="{clip_id}"><rect x="{left:.2}" y="{top:.2}" width="{pw:.2}" height="{ph:.2}"/></clipPath>"#
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="13" font-weight="bold">{}</text>"#,
            left,
            oy + 18.0,
            escape(&self.title)
        );
        let _ = writeln!(out, r#"<g clip-path="url(#{clip_id})">"#);
        for layer in &self.layers {
            match layer {
                Layer::Band { x0: a, x1: b, fill, .. } => {
                    let (a, b) = (sx(*a), sx(*b));
                    let _ = writeln!(
                        out,
                        r#"<rect x="{:.2}" y="{top:.2}" width="{:.2}" height="{ph:.2}" fill="{fill}" fill-opacity="0.18"/>"#,
                        a.min(b),
                        (b - a).abs()
                    );
                }
                Layer::Line { points, color, dashed, .. } => {
                    let dash = if *dashed { r#" stroke-dasharray="5,3""# } else { "" };
                    for run in points.split(|p| p.is_none()) {
                        if run.is_empty() {
                            continue;
                        }
                        let coords: Vec<String> = run
                            .iter()
                            .flatten()
                            .filter(|(x, y)| x.is_finite() && y.is_finite())
                            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                            .collect();
                        let _ = writeln!(
                            out,
                            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                            coords.join(" ")
                        );
                    }
                }
                Layer::Points { points, color, .. } => {
                    for &(x, y) in points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
                        let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="2.2" fill="{color}"/>"#, sx(x), sy(y));
                    }
                }
                Layer::VLine { x, color, dashed } => {
                    let dash = if *dashed { r#" stroke-dasharray="4,3""# } else { "" };
                    let _ = writeln!(
                        out,
                        r#"<line x1="{0:.2}" y1="{top:.2}" x2="{0:.2}" y2="{1:.2}" stroke="{color}" stroke-width="1"{dash}/>"#,
                        sx(*x),
                        top + ph
                    );
                }
                Layer::HLine { y, color } => {
                    let _ = writeln!(
                        out,
                        r#"<line x1="{left:.2}" y1="{0:.2}" x2="{1:.2}" y2="{0:.2}" stroke="{color}" stroke-width="0.8"/>"#,
                        sy(*y),
                        left + pw
                    );
                }
            }
        }
        out.push_str("</g>\n");

        // axes
        let _ = writeln!(
            out,
            r##"<rect x="{left:.2}" y="{top:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="#333" stroke-width="1"/>"##
        );
        for t in nice_ticks(x0, x1, 8) {
            let x = sx(t);
            let _ = writeln!(
                out,
                r##"<line x1="{x:.2}" y1="{0:.2}" x2="{x:.2}" y2="{1:.2}" stroke="#333"/><text x="{x:.2}" y="{2:.2}" font-size="10" text-anchor="middle">{3}</text>"##,
                top + ph,
                top + ph + 4.0,
                top + ph + 15.0,
                fmt_tick(t)
            );
        }
        for t in nice_ticks(y0, y1, 5) {
            let y = sy(t);
            let _ = writeln!(
                out,
                r##"<line x1="{0:.2}" y1="{y:.2}" x2="{left:.2}" y2="{y:.2}" stroke="#333"/><text x="{1:.2}" y="{2:.2}" font-size="10" text-anchor="end">{3}</text>"##,
                left - 4.0,
                left - 6.0,
                y + 3.5,
                fmt_tick(t)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#,
            left + pw / 2.0,
            top + ph + 32.0,
            escape(&self.x_label)
        );
        let (lx, ly) = (ox + 14.0, top + ph / 2.0);
        let _ = writeln!(
            out,
            r#"<text x="{lx:.2}" y="{ly:.2}" font-size="11" text-anchor="middle" transform="rotate(-90 {lx:.2} {ly:.2})">{}</text>"#,
            escape(&self.y_label)
        );

        // legend
        let mut ly = top + 12.0;
        for layer in &self.layers {
            let (label, color) = match layer {
                Layer::Band { label: Some(l), fill, .. } => (l, fill),
                Layer::Line { label: Some(l), color, .. } => (l, color),
                Layer::Points { label: Some(l), color, .. } => (l, color),
                _ => continue,
            };
            let lx = left + pw - 150.0;
            let _ = writeln!(
                out,
                r#"<rect x="{lx:.2}" y="{:.2}" width="10" height="10" fill="{color}"/><text x="{:.2}" y="{ly:.2}" font-size="10">{}</text>"#,
                ly - 9.0,
                lx + 14.0,
                escape(label)
            );
            ly += 14.0;
        }
    }
}

/// A grid of panels rendered into one standalone SVG document.
#[derive(Debug, Clone)]
pub struct Figure {
    title: String,
    columns: usize,
    panel_width: f64,
    panel_height: f64,
    panels: Vec<Panel>,
}

impl Figure {
    pub fn new(title: impl Into<String>, columns: usize, panel_width: f64, panel_height: f64) -> Self {
        Self { title: title.into(), columns: columns.max(1), panel_width, panel_height, panels: Vec::new() }
    }

    pub fn push(&mut self, panel: Panel) {
        self.panels.push(panel);
    }

    pub fn render(&self) -> String {
        let rows = self.panels.len().div_ceil(self.columns).max(1);
        let header = 28.0;
        let width = self.columns as f64 * self.panel_width;
        let height = header + rows as f64 * self.panel_height;
        let mut out = String::new();
        out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="19" font-size="15" font-weight="bold" text-anchor="middle">{}</text>"#,
            width / 2.0,
            escape(&self.title)
        );
        for (k, panel) in self.panels.iter().enumerate() {
            let (r, c) = (k / self.columns, k % self.columns);
            let ox = c as f64 * self.panel_width;
            let oy = header + r as f64 * self.panel_height;
            panel.render(&mut out, ox, oy, self.panel_width, self.panel_height, &format!("clip{k}"));
        }
        out.push_str("</svg>\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round_and_cover() {
        assert_eq!(nice_ticks(0.0, 10.0, 5), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        let t = nice_ticks(1.0, 189.0, 8);
        assert!(t.iter().all(|v| (v / 25.0).fract() == 0.0 || (v / 20.0).fract() == 0.0));
        assert_eq!(nice_ticks(3.0, 3.0, 5), vec![3.0]);
    }

    #[test]
    fn render_escapes_and_breaks_lines() {
        let mut p = Panel::new("a < b & c", "day", "value");
        p.line(vec![Some((0.0, 1.0)), Some((1.0, 2.0)), None, Some((2.0, 1.0)), Some((3.0, 0.0))], PALETTE[0], false, Some("s"));
        p.band(0.0, 1.0, PALETTE[1], None);
        p.vline(2.0, "#000", true);
        let mut f = Figure::new("t", 1, 400.0, 300.0);
        f.push(p);
        let svg = f.render();
        assert!(svg.contains("a &lt; b &amp; c"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(!svg.contains("NaN"));
    }
}

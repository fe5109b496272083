//! Self-contained SVG rendering of curve panels.

use std::fmt::Write;

use crate::caustics::Polyline;
use crate::lens::PlanePoint;
use crate::solver::Window;

const PANEL_PX: f64 = 480.0;
const MARGIN_PX: f64 = 28.0;

/// Colors cycled over multiplicity groups.
pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
    "#7f7f7f", "#bcbd22",
];

pub fn group_color(group: usize) -> &'static str {
    PALETTE[group % PALETTE.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Marker {
    FilledCircle,
    OpenCircle,
    Plus,
    Cross,
    Star,
}

#[derive(Debug, Clone)]
pub struct Panel {
    pub title: String,
    pub window: Window,
    pub curves: Vec<(Polyline, &'static str)>,
    pub markers: Vec<(PlanePoint, Marker, &'static str)>,
}

impl Panel {
    pub fn new(title: impl Into<String>, window: Window) -> Self {
        Panel {
            title: title.into(),
            window,
            curves: Vec::new(),
            markers: Vec::new(),
        }
    }
}

struct Frame {
    x0: f64,
    window: Window,
}

impl Frame {
    fn map(&self, p: PlanePoint) -> (f64, f64) {
        let w = &self.window;
        let s = PANEL_PX / (2.0 * w.half_width);
        let x = self.x0 + (p.u - (w.center.u - w.half_width)) * s;
        let y = MARGIN_PX + PANEL_PX - (p.v - (w.center.v - w.half_width)) * s;
        (x, y)
    }
}

fn marker(out: &mut String, x: f64, y: f64, kind: Marker, color: &str) {
    let r = 3.5;
    let _ = match kind {
        Marker::FilledCircle => writeln!(
            out,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r}" fill="{color}"/>"#
        ),
        Marker::OpenCircle => writeln!(
            out,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r}" fill="none" stroke="{color}" stroke-width="1.2"/>"#
        ),
        Marker::Plus => writeln!(
            out,
            r#"<path d="M{:.2} {y:.2}H{:.2}M{x:.2} {:.2}V{:.2}" stroke="{color}" stroke-width="1.4"/>"#,
            x - r,
            x + r,
            y - r,
            y + r
        ),
        Marker::Cross => writeln!(
            out,
            r#"<path d="M{:.2} {:.2}L{:.2} {:.2}M{:.2} {:.2}L{:.2} {:.2}" stroke="{color}" stroke-width="1.4"/>"#,
            x - r,
            y - r,
            x + r,
            y + r,
            x - r,
            y + r,
            x + r,
            y - r
        ),
        Marker::Star => writeln!(
            out,
            r#"<path d="M{x:.2} {:.2}L{:.2} {:.2}L{:.2} {:.2}Z" fill="{color}"/>"#,
            y - 1.5 * r,
            x - 1.3 * r,
            y + 0.75 * r,
            x + 1.3 * r,
            y + 0.75 * r
        ),
    };
}

/// Renders the panels side by side into one SVG document.
pub fn render(panels: &[Panel]) -> String {
    let width = panels.len().max(1) as f64 * (PANEL_PX + MARGIN_PX) + MARGIN_PX;
    let height = PANEL_PX + 2.0 * MARGIN_PX;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="13">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, panel) in panels.iter().enumerate() {
        let x0 = MARGIN_PX + i as f64 * (PANEL_PX + MARGIN_PX);
        let frame = Frame {
            x0,
            window: panel.window,
        };
        let _ = writeln!(
            out,
            r#"<clipPath id="clip{i}"><rect x="{x0}" y="{MARGIN_PX}" width="{PANEL_PX}" height="{PANEL_PX}"/></clipPath>"#
        );
        let _ = writeln!(
            out,
            r#"<rect x="{x0}" y="{MARGIN_PX}" width="{PANEL_PX}" height="{PANEL_PX}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            out,
            r#"<text x="{x0}" y="{:.1}">{}</text>"#,
            MARGIN_PX - 8.0,
            escape(&panel.title)
        );
        let _ = writeln!(out, r#"<g clip-path="url(#clip{i})">"#);
        for (curve, color) in &panel.curves {
            if curve.points.len() < 2 {
                continue;
            }
            let mut d = String::new();
            for (k, p) in curve.points.iter().enumerate() {
                let (x, y) = frame.map(*p);
                let _ = write!(d, "{}{x:.2} {y:.2}", if k == 0 { "M" } else { "L" });
            }
            if curve.closed {
                d.push('Z');
            }
            let _ = writeln!(
                out,
                r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1"/>"#
            );
        }
        for (p, kind, color) in &panel.markers {
            let (x, y) = frame.map(*p);
            marker(&mut out, x, y, *kind, color);
        }
        let _ = writeln!(out, "</g>");
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

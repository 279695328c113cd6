//! Bare-bones SVG renderings: share trajectories with interval ribbons and
//! correlation heat maps.

use std::fmt::Write as _;

use crate::data::Observation;
use crate::inference::EstimateSummary;

const PANEL_W: f64 = 220.0;
const PANEL_H: f64 = 150.0;
const MARGIN: f64 = 30.0;

/// One panel of a trajectory chart.
pub struct Panel<'a> {
    pub title: String,
    pub estimates: Vec<&'a EstimateSummary>,
    pub observations: Vec<&'a Observation>,
}

struct Frame {
    x0: f64,
    y0: f64,
    window: (f64, f64),
}

impl Frame {
    fn x(&self, year: f64) -> f64 {
        let (a, b) = self.window;
        self.x0 + MARGIN + (year - a) / (b - a) * (PANEL_W - 1.5 * MARGIN)
    }

    fn y(&self, share: f64) -> f64 {
        self.y0 + PANEL_H - MARGIN + share.clamp(0.0, 1.0) * -(PANEL_H - 1.5 * MARGIN)
    }
}

fn header(out: &mut String, width: f64, height: f64, manifest: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="9">"#
    );
    let _ = writeln!(out, "<!-- manifest={manifest} -->");
}

fn ribbon(out: &mut String, f: &Frame, rows: &[&EstimateSummary], lo: fn(&EstimateSummary) -> f64, hi: fn(&EstimateSummary) -> f64, fill: &str) {
    if rows.is_empty() {
        return;
    }
    let mut pts = String::new();
    for r in rows {
        let _ = write!(pts, "{:.1},{:.1} ", f.x(r.year), f.y(hi(r)));
    }
    for r in rows.iter().rev() {
        let _ = write!(pts, "{:.1},{:.1} ", f.x(r.year), f.y(lo(r)));
    }
    let _ = writeln!(out, r#"<polygon points="{}" fill="{fill}" stroke="none"/>"#, pts.trim_end());
}

/// Grid of panels, `n_cols` per row; each panel shows the median line, 80%
/// and 95% ribbons and observations with 95% error bars.
pub fn trajectory_chart(panels: &[Panel<'_>], n_cols: usize, window: (f64, f64), manifest: &str) -> String {
    let n_cols = n_cols.max(1);
    let n_rows = panels.len().div_ceil(n_cols);
    let mut out = String::new();
    header(&mut out, n_cols as f64 * PANEL_W, n_rows as f64 * PANEL_H, manifest);
    for (i, panel) in panels.iter().enumerate() {
        let f = Frame {
            x0: (i % n_cols) as f64 * PANEL_W,
            y0: (i / n_cols) as f64 * PANEL_H,
            window,
        };
        let (left, right) = (f.x(window.0), f.x(window.1));
        let (bottom, top) = (f.y(0.0), f.y(1.0));
        let _ = writeln!(
            out,
            r##"<rect x="{left:.1}" y="{top:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#999"/>"##,
            right - left,
            bottom - top
        );
        let _ = writeln!(out, r#"<text x="{left:.1}" y="{:.1}">{}</text>"#, top - 4.0, panel.title);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">1</text><text x="{:.1}" y="{:.1}">0</text>"#, left - 10.0, top + 3.0, left - 10.0, bottom + 3.0);
        let _ = writeln!(
            out,
            r#"<text x="{left:.1}" y="{:.1}">{}</text><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            bottom + 11.0,
            window.0,
            right,
            bottom + 11.0,
            window.1
        );
        let mut rows = panel.estimates.clone();
        rows.sort_by(|a, b| a.year.total_cmp(&b.year));
        ribbon(&mut out, &f, &rows, |r| r.interval.lo95, |r| r.interval.hi95, "#c6dbef");
        ribbon(&mut out, &f, &rows, |r| r.interval.lo80, |r| r.interval.hi80, "#6baed6");
        if !rows.is_empty() {
            let pts: Vec<String> = rows
                .iter()
                .map(|r| format!("{:.1},{:.1}", f.x(r.year), f.y(r.interval.median)))
                .collect();
            let _ = writeln!(out, r##"<polyline points="{}" fill="none" stroke="#08306b" stroke-width="1.5"/>"##, pts.join(" "));
        }
        for o in &panel.observations {
            let (x, y) = (f.x(o.year), f.y(o.proportion));
            let (ylo, yhi) = (f.y(o.proportion - 1.96 * o.se), f.y(o.proportion + 1.96 * o.se));
            let _ = writeln!(
                out,
                r##"<line x1="{x:.1}" y1="{ylo:.1}" x2="{x:.1}" y2="{yhi:.1}" stroke="#a50f15"/><circle cx="{x:.1}" cy="{y:.1}" r="2" fill="#a50f15"/>"##
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Heat map of a correlation matrix with values in [-1, 1].
pub fn heatmap(title: &str, labels: &[&str], values: &[Vec<f64>], manifest: &str) -> String {
    let n = labels.len();
    let cell = 36.0;
    let left = 110.0;
    let top = 30.0;
    let mut out = String::new();
    header(&mut out, left + n as f64 * cell + 10.0, top + n as f64 * cell + 110.0, manifest);
    let _ = writeln!(out, r#"<text x="{left}" y="15">{title}</text>"#);
    for (i, row) in values.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 4.0,
            top + (i as f64 + 0.6) * cell,
            labels[i]
        );
        for (j, &v) in row.iter().enumerate() {
            let v = v.clamp(-1.0, 1.0);
            let (r, g, b) = if v >= 0.0 {
                (255.0 * (1.0 - v), 255.0 * (1.0 - v), 255.0)
            } else {
                (255.0, 255.0 * (1.0 + v), 255.0 * (1.0 + v))
            };
            let (x, y) = (left + j as f64 * cell, top + i as f64 * cell);
            let _ = writeln!(
                out,
                r##"<rect x="{x:.1}" y="{y:.1}" width="{cell}" height="{cell}" fill="rgb({:.0},{:.0},{:.0})" stroke="#fff"/><text x="{:.1}" y="{:.1}" text-anchor="middle">{v:.2}</text>"##,
                r,
                g,
                b,
                x + cell / 2.0,
                y + cell * 0.6
            );
        }
    }
    for (j, label) in labels.iter().enumerate() {
        let x = left + (j as f64 + 0.5) * cell;
        let y = top + n as f64 * cell + 6.0;
        let _ = writeln!(out, r#"<text x="{x:.1}" y="{y:.1}" transform="rotate(60 {x:.1} {y:.1})">{label}</text>"#);
    }
    out.push_str("</svg>\n");
    out
}

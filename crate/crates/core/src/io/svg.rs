//! Deterministic SVG scatter of the risk-return frontier.
//!
//! One circle per LoB at (allocated SCR, expected RORAC), radius growing
//! with the RORAC standard deviation, plus a highlighted total marker.
//! Output bytes depend only on the dataset: fixed header, fixed palette,
//! six-significant-digit coordinates.

use crate::io::reports::format_sig;
use crate::optimize::{FrontierDataset, LobPoint};
use crate::scalar::Real;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 560.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 760.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 500.0;
const MIN_RADIUS: f64 = 4.0;
const MAX_RADIUS: f64 = 14.0;

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn coord(v: f64) -> String {
    format_sig(v, 6)
}

struct Mapped {
    label: String,
    px: f64,
    py: f64,
    radius: f64,
    total: bool,
}

fn span(values: impl Iterator<Item = f64>, fallback: (f64, f64)) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return fallback;
    }
    if lo == hi {
        // Degenerate extent; widen symmetrically so the marker sits centered.
        let pad = lo.abs().max(1.0) * 0.5;
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.08;
    (lo - pad, hi + pad)
}

/// Renders the scatter; an empty dataset yields axes plus the note.
pub fn emit_svg_scatter<T: Real>(dataset: &FrontierDataset<T>) -> String {
    let points: Vec<&LobPoint<T>> = dataset.rows.iter().chain(dataset.total.iter()).collect();
    let (xmin, xmax) = span(points.iter().map(|p| p.allocated.as_f64()), (0.0, 1.0));
    let (ymin, ymax) = span(points.iter().map(|p| p.expected_rorac.as_f64()), (0.0, 1.0));
    let sigma_max = points
        .iter()
        .filter_map(|p| p.rorac_stdev.map(|s| s.as_f64()))
        .fold(0.0f64, f64::max);

    let to_px = |x: f64| LEFT + (x - xmin) / (xmax - xmin) * (RIGHT - LEFT);
    let to_py = |y: f64| BOTTOM - (y - ymin) / (ymax - ymin) * (BOTTOM - TOP);
    let radius = |stdev: Option<f64>| match stdev {
        Some(s) if sigma_max > 0.0 => MIN_RADIUS + (MAX_RADIUS - MIN_RADIUS) * s / sigma_max,
        _ => MIN_RADIUS,
    };

    let total_count = dataset.total.iter().len();
    let mapped: Vec<Mapped> = points
        .iter()
        .enumerate()
        .map(|(i, p)| Mapped {
            label: p.label.clone(),
            px: to_px(p.allocated.as_f64()),
            py: to_py(p.expected_rorac.as_f64()),
            radius: radius(p.rorac_stdev.map(|s| s.as_f64())),
            total: i >= points.len() - total_count,
        })
        .collect();

    let mut svg = String::new();
    svg.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<title>Risk-return profile</title>\n");
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>\n"
    ));

    // Gridlines and tick labels, five per axis.
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = xmin + f * (xmax - xmin);
        let yv = ymin + f * (ymax - ymin);
        let px = to_px(xv);
        let py = to_py(yv);
        svg.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
            coord(px),
            coord(TOP),
            coord(BOTTOM)
        ));
        svg.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{2}\" x2=\"{1}\" y2=\"{2}\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
            coord(LEFT),
            coord(RIGHT),
            coord(py)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\" fill=\"#333333\">{}</text>\n",
            coord(px),
            coord(BOTTOM + 18.0),
            coord(xv)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\" fill=\"#333333\">{}</text>\n",
            coord(LEFT - 8.0),
            coord(py + 4.0),
            coord(yv)
        ));
    }

    // Axes on top of the grid.
    svg.push_str(&format!(
        "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#333333\" stroke-width=\"1.5\"/>\n",
        coord(LEFT),
        coord(TOP),
        coord(BOTTOM)
    ));
    svg.push_str(&format!(
        "<line x1=\"{0}\" y1=\"{2}\" x2=\"{1}\" y2=\"{2}\" stroke=\"#333333\" stroke-width=\"1.5\"/>\n",
        coord(LEFT),
        coord(RIGHT),
        coord(BOTTOM)
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" fill=\"#333333\">Allocated SCR</text>\n",
        coord((LEFT + RIGHT) / 2.0),
        coord(BOTTOM + 44.0)
    ));
    svg.push_str(&format!(
        "<text x=\"{0}\" y=\"{1}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" fill=\"#333333\" transform=\"rotate(-90 {0} {1})\">Expected RORAC</text>\n",
        coord(22.0),
        coord((TOP + BOTTOM) / 2.0)
    ));

    for m in &mapped {
        let (fill, stroke) = if m.total {
            ("#cc3311", "#7a1f0a")
        } else {
            ("#4477aa", "#223b5f")
        };
        svg.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{}\" fill-opacity=\"0.75\" stroke=\"{}\" stroke-width=\"1\"/>\n",
            coord(m.px),
            coord(m.py),
            coord(m.radius),
            fill,
            stroke
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" fill=\"#222222\">{}</text>\n",
            coord(m.px + m.radius + 4.0),
            coord(m.py + 3.5),
            xml_escape(&m.label)
        ));
    }

    if let Some(note) = &dataset.note {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" fill=\"#555555\">{}</text>\n",
            coord((LEFT + RIGHT) / 2.0),
            coord((TOP + BOTTOM) / 2.0),
            xml_escape(note)
        ));
    }

    svg.push_str("</svg>\n");
    svg
}

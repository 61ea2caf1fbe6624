//! SVG overlay of binned data and predicted curves, speeds normalized by the
//! speed limit.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use sigfd_core::ingest::BinnedPoint;

use crate::error::{CliError, Result};
use crate::formats::{CurveRow, PlanRecord};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;
const Y_MAX: f64 = 1.1;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

struct Frame {
    x_max: f64,
}

impl Frame {
    fn x(&self, q: f64) -> f64 {
        LEFT + q / self.x_max * (WIDTH - LEFT - RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - BOTTOM - v / Y_MAX * (HEIGHT - TOP - BOTTOM)
    }
}

fn nice_ceiling(x: f64) -> f64 {
    if x <= 0.0 {
        return 100.0;
    }
    let step = 10f64.powf(x.log10().floor());
    [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * step)
        .find(|&c| c >= x)
        .unwrap_or(10.0 * step)
}

/// Renders one point series per binned segment and one path per curve
/// segment. Every segment needs a plan row for its speed limit, and every
/// curve must belong to a segment that has binned data.
pub fn render_svg(binned: &[(String, BinnedPoint)], plans: &[PlanRecord], curves: &[CurveRow]) -> Result<String> {
    let v_max: BTreeMap<&str, f64> = plans.iter().map(|p| (p.stats.segment_id.as_str(), p.v_max)).collect();
    let mut points: BTreeMap<&str, Vec<&BinnedPoint>> = BTreeMap::new();
    for (id, b) in binned {
        points.entry(id.as_str()).or_default().push(b);
    }
    let mut lines: BTreeMap<&str, Vec<&CurveRow>> = BTreeMap::new();
    for c in curves {
        lines.entry(c.segment_id.as_str()).or_default().push(c);
    }
    for id in points.keys().chain(lines.keys()) {
        match v_max.get(id) {
            Some(&v) if v > 0.0 => {}
            _ => return Err(CliError::Mismatch(format!("segment '{id}' has no plan row with a speed limit"))),
        }
    }
    if let Some(id) = lines.keys().find(|id| !points.contains_key(*id)) {
        return Err(CliError::Mismatch(format!("curve for segment '{id}' has no binned data")));
    }

    let x_data = binned
        .iter()
        .map(|(_, b)| b.bin_center)
        .chain(curves.iter().map(|c| c.flow))
        .fold(0.0, f64::max);
    let frame = Frame { x_max: nice_ceiling(x_data) };

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    let (x0, y0, x1, y1) = (frame.x(0.0), frame.y(0.0), frame.x(frame.x_max), frame.y(Y_MAX));
    writeln!(s, r#"<line class="axis" x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}" stroke="black"/>"#).unwrap();
    writeln!(s, r#"<line class="axis" x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}" stroke="black"/>"#).unwrap();
    for i in 0..=5 {
        let q = frame.x_max * i as f64 / 5.0;
        let x = frame.x(q);
        writeln!(s, r#"<line class="tick" x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, y0 + 5.0).unwrap();
        writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{q}</text>"#, y0 + 18.0).unwrap();
    }
    for i in 0..=5 {
        let v = 0.2 * i as f64;
        let y = frame.y(v);
        writeln!(s, r#"<line class="tick" x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="black"/>"#, x0 - 5.0).unwrap();
        writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.1}</text>"#, x0 - 8.0, y + 4.0).unwrap();
    }
    writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Flow (veh/hr-lane)</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 10.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="15" y="{:.2}" text-anchor="middle" transform="rotate(-90 15 {:.2})">Speed / speed limit</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    )
    .unwrap();

    let green: BTreeMap<&str, f64> = plans.iter().map(|p| (p.stats.segment_id.as_str(), p.stats.g.value())).collect();
    for (i, (id, pts)) in points.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let norm = v_max[id];
        writeln!(s, r#"<g class="series" data-segment="{id}" fill="{color}">"#).unwrap();
        for b in pts {
            writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3"/>"#, frame.x(b.bin_center), frame.y(b.mean_speed / norm)).unwrap();
        }
        writeln!(s, "</g>").unwrap();
        if let Some(curve) = lines.get(id) {
            let mut d = String::new();
            for (k, c) in curve.iter().enumerate() {
                let cmd = if k == 0 { 'M' } else { 'L' };
                write!(d, "{}{cmd}{:.2} {:.2}", if k == 0 { "" } else { " " }, frame.x(c.flow), frame.y(c.speed / norm)).unwrap();
            }
            writeln!(s, r#"<path class="fd-curve" data-segment="{id}" fill="none" stroke="{color}" stroke-width="1.5" d="{d}"/>"#).unwrap();
        }
        let ly = TOP + 15.0 + 16.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        writeln!(s, r#"<circle class="legend" cx="{lx:.2}" cy="{:.2}" r="4" fill="{color}"/>"#, ly - 4.0).unwrap();
        let label = match green.get(id) {
            Some(g) => format!("{id} (g={g:.2})"),
            None => id.to_string(),
        };
        writeln!(s, r#"<text x="{:.2}" y="{ly:.2}">{label}</text>"#, lx + 10.0).unwrap();
    }
    s.push_str("</svg>\n");
    Ok(s)
}

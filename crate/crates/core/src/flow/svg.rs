//! SVG picture of a placement: columns, blockages, instances and the most
//! critical paths.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{CellKind, DeviceGrid, Netlist, PlacementState, SiteKind};
use crate::timing::{DelayModelParams, TimingGraph};

/// Pixels per grid unit.
const SCALE: f64 = 12.0;

fn column_fill(kind: SiteKind) -> &'static str {
    match kind {
        SiteKind::Slicel => "#eef2f7",
        SiteKind::Slicem => "#e3ebf5",
        SiteKind::Dsp => "#fbeedd",
        SiteKind::Bram => "#e6f4e6",
        SiteKind::Io => "#f0e6f4",
    }
}

fn cell_fill(kind: CellKind) -> &'static str {
    match kind {
        CellKind::Lut => "#3b6fb6",
        CellKind::Ff => "#2a9d8f",
        CellKind::Carry => "#e76f51",
        CellKind::Mux => "#8d6cab",
        CellKind::Lutram => "#264653",
        CellKind::Dsp => "#f4a261",
        CellKind::Bram => "#52b788",
        CellKind::Io => "#9b5de5",
    }
}

/// Renders the placement as an SVG document. `top_k` critical paths are
/// drawn as polylines through instance positions.
pub fn render_svg(
    netlist: &Netlist,
    device: &DeviceGrid,
    placement: &PlacementState,
    graph: &TimingGraph,
    delay: &DelayModelParams,
    top_k: usize,
) -> String {
    let (w, h) = (device.width as f64, device.height as f64);
    // y grows upward on the device, downward in SVG
    let px = |x: f64| x * SCALE;
    let py = |y: f64| (h - y) * SCALE;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        px(w),
        h * SCALE,
        px(w),
        h * SCALE
    );
    let _ = writeln!(s, r##"<rect class="device" x="0" y="0" width="{}" height="{}" fill="white" stroke="#333"/>"##, px(w), h * SCALE);
    for c in &device.columns {
        let _ = writeln!(
            s,
            r#"<rect class="column" x="{}" y="0" width="{}" height="{}" fill="{}"/>"#,
            px(c.x as f64),
            SCALE,
            h * SCALE,
            column_fill(c.kind)
        );
    }
    for b in &device.blockages {
        let _ = writeln!(
            s,
            r##"<rect class="blockage" x="{}" y="{}" width="{}" height="{}" fill="#999" fill-opacity="0.6"/>"##,
            px(b.x0 as f64),
            py(b.y1 as f64),
            px((b.x1 - b.x0) as f64),
            (b.y1 - b.y0) as f64 * SCALE
        );
    }
    for (i, inst) in netlist.instances.iter().enumerate() {
        let (x, y) = placement.xy[i];
        let _ = writeln!(
            s,
            r#"<circle class="inst" cx="{:.2}" cy="{:.2}" r="2" fill="{}"><title>{}</title></circle>"#,
            px(x),
            py(y),
            cell_fill(inst.kind),
            escape(&inst.name)
        );
    }
    if top_k > 0 && netlist.num_instances() > 0 {
        let sta = super::analyze(graph, delay, device, placement, 30.0);
        for path in sta.critical_paths(graph, top_k) {
            let pts: Vec<String> = path.iter().map(|&v| format!("{:.2},{:.2}", px(placement.xy[v].0), py(placement.xy[v].1))).collect();
            let _ = writeln!(
                s,
                r##"<polyline class="path" points="{}" fill="none" stroke="#d62828" stroke-width="1.2" stroke-opacity="0.8"/>"##,
                pts.join(" ")
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn write_svg(
    path: &Path,
    netlist: &Netlist,
    device: &DeviceGrid,
    placement: &PlacementState,
    graph: &TimingGraph,
    delay: &DelayModelParams,
    top_k: usize,
) -> Result<()> {
    std::fs::write(path, render_svg(netlist, device, placement, graph, delay, top_k)).map_err(|e| Error::io(path, e))
}

//! Bin-based cell spreading by recursive bisection of overfull windows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CellKind, DeviceGrid, Netlist, SiteKind};

use super::objects::Objects;

/// Resource class a spreading item competes for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ResourceClass {
    Clb,
    Dsp,
    Bram,
    Io,
}

impl ResourceClass {
    pub const ALL: [ResourceClass; 4] = [ResourceClass::Clb, ResourceClass::Dsp, ResourceClass::Bram, ResourceClass::Io];

    pub fn of(kind: CellKind) -> Self {
        match kind {
            CellKind::Dsp => ResourceClass::Dsp,
            CellKind::Bram => ResourceClass::Bram,
            CellKind::Io => ResourceClass::Io,
            _ => ResourceClass::Clb,
        }
    }

    /// Demand of one cell in units of the class supply.
    pub fn area(kind: CellKind) -> f64 {
        match kind {
            CellKind::Mux | CellKind::Carry => 2.0,
            _ => 1.0,
        }
    }

    fn supply(self, kind: SiteKind, slots: &crate::model::SlotCaps) -> f64 {
        match self {
            ResourceClass::Clb if kind.is_clb() => (slots.lut + slots.ff) as f64,
            ResourceClass::Clb => 0.0,
            ResourceClass::Dsp => slots.dsp as f64,
            ResourceClass::Bram => slots.bram as f64,
            ResourceClass::Io => slots.io as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpreadConfig {
    /// Bin edge in sites.
    pub bin_size: u32,
    /// Target utilization of bin supply.
    pub target: f64,
}

impl Default for SpreadConfig {
    fn default() -> Self {
        SpreadConfig { bin_size: 2, target: 0.9 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpreadItem {
    pub x: f64,
    pub y: f64,
    pub class: ResourceClass,
    pub area: f64,
}

/// Bin grid of one resource class.
pub struct BinGrid {
    pub nx: usize,
    pub ny: usize,
    pub bin_size: u32,
    width: u32,
    height: u32,
    pub supply: Vec<f64>,
}

impl BinGrid {
    pub fn new(device: &DeviceGrid, class: ResourceClass, bin_size: u32) -> Self {
        let bs = bin_size.max(1);
        let nx = device.width.div_ceil(bs) as usize;
        let ny = device.height.div_ceil(bs) as usize;
        let mut supply = vec![0.0; nx * ny];
        for s in device.sites() {
            let col = &device.columns[s.column];
            supply[(s.y / bs) as usize * nx + (s.x / bs) as usize] += class.supply(col.kind, &col.slots);
        }
        BinGrid { nx, ny, bin_size: bs, width: device.width, height: device.height, supply }
    }

    pub fn bin_of(&self, x: f64, y: f64) -> (usize, usize) {
        let b = |c: f64, n: usize| ((c.max(0.0) / self.bin_size as f64).floor() as usize).min(n - 1);
        (b(x, self.nx), b(y, self.ny))
    }

    /// Continuous extent of bins `[b0, b1]` along one axis.
    fn extent(&self, b0: usize, b1: usize, axis: usize) -> (f64, f64) {
        let lim = if axis == 0 { self.width } else { self.height } as f64;
        let s = self.bin_size as f64;
        (b0 as f64 * s, ((b1 + 1) as f64 * s).min(lim))
    }

    pub fn demand(&self, items: &[SpreadItem], idx: &[usize]) -> Vec<f64> {
        let mut d = vec![0.0; self.nx * self.ny];
        for &i in idx {
            let (bx, by) = self.bin_of(items[i].x, items[i].y);
            d[by * self.nx + bx] += items[i].area;
        }
        d
    }
}

/// Inclusive bin window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Window {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

impl Window {
    fn overlaps(&self, o: &Window) -> bool {
        self.x0 <= o.x1 && o.x0 <= self.x1 && self.y0 <= o.y1 && o.y0 <= self.y1
    }

    fn sum(&self, grid: &BinGrid, v: &[f64]) -> f64 {
        (self.y0..=self.y1).flat_map(|y| (self.x0..=self.x1).map(move |x| (x, y))).map(|(x, y)| v[y * grid.nx + x]).sum()
    }

    fn grow(&mut self, grid: &BinGrid) -> bool {
        let before = *self;
        self.x0 = self.x0.saturating_sub(1);
        self.y0 = self.y0.saturating_sub(1);
        self.x1 = (self.x1 + 1).min(grid.nx - 1);
        self.y1 = (self.y1 + 1).min(grid.ny - 1);
        *self != before
    }
}

/// Spreads items so that no bin holds more than `target` of its supply,
/// up to the granularity of single items. Only items inside overfull
/// windows move; their order along each split axis is preserved.
pub fn spread_items(items: &[SpreadItem], device: &DeviceGrid, cfg: &SpreadConfig) -> Result<Vec<(f64, f64)>> {
    let mut out: Vec<(f64, f64)> = items.iter().map(|it| (it.x, it.y)).collect();
    for class in ResourceClass::ALL {
        let idx: Vec<usize> = (0..items.len()).filter(|&i| items[i].class == class).collect();
        if idx.is_empty() {
            continue;
        }
        let grid = BinGrid::new(device, class, cfg.bin_size);
        let total_demand: f64 = idx.iter().map(|&i| items[i].area).sum();
        let total_supply: f64 = grid.supply.iter().sum();
        if total_demand > total_supply {
            return Err(Error::CapacityExceeded { resource: format!("{class:?}"), demand: total_demand, capacity: total_supply });
        }
        let cap: Vec<f64> = grid.supply.iter().map(|s| s * cfg.target).collect();
        let demand = grid.demand(items, &idx);
        for w in windows(&grid, &demand, &cap) {
            let members: Vec<usize> = idx
                .iter()
                .copied()
                .filter(|&i| {
                    let (bx, by) = grid.bin_of(items[i].x, items[i].y);
                    (w.x0..=w.x1).contains(&bx) && (w.y0..=w.y1).contains(&by)
                })
                .collect();
            bisect(&grid, items, members, w, &mut out);
        }
    }
    Ok(out)
}

/// Disjoint windows covering every overfull bin, each grown until its
/// demand fits its capacity or it covers the whole grid.
fn windows(grid: &BinGrid, demand: &[f64], cap: &[f64]) -> Vec<Window> {
    let mut ws: Vec<Window> = Vec::new();
    let mut over: Vec<usize> = (0..demand.len()).filter(|&b| demand[b] > cap[b] + 1e-9).collect();
    over.sort_by(|&a, &b| (demand[b] - cap[b]).total_cmp(&(demand[a] - cap[a])).then(a.cmp(&b)));
    for b in over {
        let (x, y) = (b % grid.nx, b / grid.nx);
        if ws.iter().any(|w| w.overlaps(&Window { x0: x, y0: y, x1: x, y1: y })) {
            continue;
        }
        ws.push(Window { x0: x, y0: y, x1: x, y1: y });
        settle(grid, demand, cap, &mut ws);
    }
    ws
}

fn settle(grid: &BinGrid, demand: &[f64], cap: &[f64], ws: &mut Vec<Window>) {
    loop {
        let mut changed = false;
        for w in ws.iter_mut() {
            while w.sum(grid, demand) > w.sum(grid, cap) + 1e-9 && w.grow(grid) {
                changed = true;
            }
        }
        'merge: for i in 0..ws.len() {
            for j in i + 1..ws.len() {
                if ws[i].overlaps(&ws[j]) {
                    let o = ws.remove(j);
                    let w = &mut ws[i];
                    *w = Window { x0: w.x0.min(o.x0), y0: w.y0.min(o.y0), x1: w.x1.max(o.x1), y1: w.y1.max(o.y1) };
                    changed = true;
                    break 'merge;
                }
            }
        }
        if !changed {
            return;
        }
    }
}

fn bisect(grid: &BinGrid, items: &[SpreadItem], mut members: Vec<usize>, w: Window, out: &mut [(f64, f64)]) {
    if members.is_empty() || (w.x0 == w.x1 && w.y0 == w.y1) {
        return;
    }
    let (ex0, ex1) = grid.extent(w.x0, w.x1, 0);
    let (ey0, ey1) = grid.extent(w.y0, w.y1, 1);
    let axis = if w.x0 == w.x1 {
        1
    } else if w.y0 == w.y1 {
        0
    } else if ex1 - ex0 >= ey1 - ey0 {
        0
    } else {
        1
    };
    let (lo, hi) = if axis == 0 { (w.x0, w.x1) } else { (w.y0, w.y1) };
    let line = |k: usize| {
        let s = if axis == 0 { Window { x0: k, x1: k, ..w } } else { Window { y0: k, y1: k, ..w } };
        s.sum(grid, &grid.supply)
    };
    let lines: Vec<f64> = (lo..=hi).map(line).collect();
    let total: f64 = lines.iter().sum();
    if total <= 0.0 {
        return;
    }
    // cut after line `lo + k - 1` with prefix supply closest to half
    let mut best = (f64::INFINITY, 1);
    let mut acc = 0.0;
    for k in 1..lines.len() {
        acc += lines[k - 1];
        let d = (acc - total / 2.0).abs();
        if d < best.0 {
            best = (d, k);
        }
    }
    let cut = lo + best.1;
    let left_supply: f64 = lines[..best.1].iter().sum();
    let coord = |i: usize| if axis == 0 { out[i].0 } else { out[i].1 };
    members.sort_by(|&a, &b| {
        coord(a)
            .total_cmp(&coord(b))
            .then(if axis == 0 { out[a].1.total_cmp(&out[b].1) } else { out[a].0.total_cmp(&out[b].0) })
            .then(a.cmp(&b))
    });
    let area: f64 = members.iter().map(|&i| items[i].area).sum();
    let goal = area * left_supply / total;
    let mut split = 0;
    let mut acc = 0.0;
    let mut best_gap = goal.abs();
    for (k, &i) in members.iter().enumerate() {
        acc += items[i].area;
        let gap = (acc - goal).abs();
        if gap < best_gap {
            best_gap = gap;
            split = k + 1;
        }
    }
    let right = members.split_off(split);
    let (wl, wr) = if axis == 0 {
        (Window { x1: cut - 1, ..w }, Window { x0: cut, ..w })
    } else {
        (Window { y1: cut - 1, ..w }, Window { y0: cut, ..w })
    };
    for (side, sw) in [(&members, wl), (&right, wr)] {
        let (a, b) = if axis == 0 { grid.extent(sw.x0, sw.x1, 0) } else { grid.extent(sw.y0, sw.y1, 1) };
        map_linear(side, a, b, axis, out);
    }
    bisect(grid, items, members, wl, out);
    bisect(grid, items, right, wr, out);
}

/// Maps sorted members into `[a, b]` along `axis`, keeping their relative
/// spacing and a half-slot margin at both ends.
fn map_linear(members: &[usize], a: f64, b: f64, axis: usize, out: &mut [(f64, f64)]) {
    let m = members.len();
    if m == 0 {
        return;
    }
    let get = |p: (f64, f64)| if axis == 0 { p.0 } else { p.1 };
    let lo = get(out[members[0]]);
    let hi = get(out[members[m - 1]]);
    let fm = m as f64;
    for (r, &i) in members.iter().enumerate() {
        let t = if hi > lo { (get(out[i]) - lo) / (hi - lo) * (fm - 1.0) + 0.5 } else { r as f64 + 0.5 };
        let v = a + (b - a) * t / fm;
        if axis == 0 {
            out[i].0 = v;
        } else {
            out[i].1 = v;
        }
    }
}

/// Moves `x` to the nearer side of a blockage covering `(x, y)`, half a site
/// outside it. Bins straddling a blockage map items linearly over their full
/// extent, which can leave them inside.
fn out_of_blockage(device: &DeviceGrid, x: f64, y: f64) -> f64 {
    let Some(b) = device.blockages.iter().find(|b| x >= b.x0 as f64 && x < b.x1 as f64 && y >= b.y0 as f64 && y < b.y1 as f64) else {
        return x;
    };
    let left = b.x0 as f64 - 0.5;
    let right = b.x1 as f64 + 0.5;
    match (left > 0.0, right < device.width as f64) {
        (true, true) if x - left <= right - x => left,
        (true, false) => left,
        (_, true) => right,
        _ => x,
    }
}

/// Spreads the movable objects of a placement. Macros spread by their
/// vertical centre and keep their shape; fixed instances stay put.
pub fn spread_cells(netlist: &Netlist, device: &DeviceGrid, xy: &[(f64, f64)], cfg: &SpreadConfig) -> Result<Vec<(f64, f64)>> {
    let objs = Objects::from_netlist(netlist);
    spread_objects(netlist, &objs, device, xy, cfg)
}

pub(crate) fn spread_objects(
    netlist: &Netlist,
    objs: &Objects,
    device: &DeviceGrid,
    xy: &[(f64, f64)],
    cfg: &SpreadConfig,
) -> Result<Vec<(f64, f64)>> {
    let anchors = objs.anchors(xy);
    let items: Vec<SpreadItem> = objs
        .insts
        .iter()
        .enumerate()
        .map(|(o, members)| {
            let kind = netlist.instances[members[0]].kind;
            let half = (objs.height[o] - 1.0) / 2.0;
            SpreadItem {
                x: anchors[o].0,
                y: anchors[o].1 + half,
                class: ResourceClass::of(kind),
                area: members.iter().map(|&i| ResourceClass::area(netlist.instances[i].kind)).sum(),
            }
        })
        .collect();
    let spread = spread_items(&items, device, cfg)?;
    let new_anchors: Vec<(f64, f64)> = spread
        .iter()
        .enumerate()
        .map(|(o, &(x, y))| {
            let h = objs.height[o];
            let top = (device.height as f64 - h).max(0.0);
            (out_of_blockage(device, x, y), (y - (h - 1.0) / 2.0).clamp(0.0, top))
        })
        .collect();
    let mut out = xy.to_vec();
    objs.apply(&new_anchors, &mut out);
    Ok(out)
}

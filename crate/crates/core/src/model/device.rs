use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::netlist::CellKind;

/// Vertical distance between neighbouring BEL slots of one kind inside a site.
pub const SLOT_PITCH: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SiteKind {
    Slicel,
    Slicem,
    Dsp,
    Bram,
    Io,
}

impl SiteKind {
    pub fn is_clb(self) -> bool {
        matches!(self, SiteKind::Slicel | SiteKind::Slicem)
    }

    /// Whether a macro that asks for `wanted` columns may use this one.
    pub fn satisfies(self, wanted: SiteKind) -> bool {
        self == wanted || (wanted == SiteKind::Slicel && self == SiteKind::Slicem)
    }
}

impl fmt::Display for SiteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SiteKind::Slicel => "SLICEL",
            SiteKind::Slicem => "SLICEM",
            SiteKind::Dsp => "DSP",
            SiteKind::Bram => "BRAM",
            SiteKind::Io => "IO",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SlotKind {
    Lut,
    Ff,
    Carry,
    Mux,
    Dsp,
    Bram,
    Io,
}

impl SlotKind {
    /// Whether a cell of `cell` kind may occupy this slot in a site of `site` kind.
    pub fn accepts(self, site: SiteKind, cell: CellKind) -> bool {
        match (self, cell) {
            (SlotKind::Lut, CellKind::Lut) => true,
            (SlotKind::Lut, CellKind::Lutram) => site == SiteKind::Slicem,
            (SlotKind::Ff, CellKind::Ff) => true,
            (SlotKind::Carry, CellKind::Carry) => true,
            (SlotKind::Mux, CellKind::Mux) => true,
            (SlotKind::Dsp, CellKind::Dsp) => true,
            (SlotKind::Bram, CellKind::Bram) => true,
            (SlotKind::Io, CellKind::Io) => true,
            _ => false,
        }
    }
}

/// BEL slot capacities of one site.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlotCaps {
    pub lut: u8,
    pub ff: u8,
    pub carry: u8,
    pub mux: u8,
    pub dsp: u8,
    pub bram: u8,
    pub io: u8,
}

impl SlotCaps {
    pub fn clb() -> Self {
        SlotCaps { lut: 8, ff: 8, carry: 1, mux: 2, ..Default::default() }
    }

    fn layout(&self) -> Vec<SlotKind> {
        let groups = [
            (SlotKind::Lut, self.lut),
            (SlotKind::Ff, self.ff),
            (SlotKind::Carry, self.carry),
            (SlotKind::Mux, self.mux),
            (SlotKind::Dsp, self.dsp),
            (SlotKind::Bram, self.bram),
            (SlotKind::Io, self.io),
        ];
        groups.iter().flat_map(|&(k, n)| std::iter::repeat(k).take(n as usize)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub x: u32,
    pub kind: SiteKind,
    pub slots: SlotCaps,
}

/// Half-open rectangle of grid cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl Rect {
    pub fn contains_cell(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn center_x(&self) -> f64 {
        0.5 * (self.x0 + self.x1) as f64
    }

    pub fn center_y(&self) -> f64 {
        0.5 * (self.y0 + self.y1) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SiteId(pub u32);

impl SiteId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Result of a region lookup.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegionRef {
    Region(usize),
    Blockage,
}

#[derive(Clone, Debug)]
pub struct Site {
    pub x: u32,
    pub y: u32,
    pub kind: SiteKind,
    pub column: usize,
}

#[derive(Clone, Debug)]
struct SlotInfo {
    kind: SlotKind,
    /// Position inside its kind group and the group size.
    rank: u8,
    group: u8,
}

/// Columnar device: sites arranged in typed columns, with rectangular
/// placement blockages carving the grid into available regions.
#[derive(Clone, Debug)]
pub struct DeviceGrid {
    pub width: u32,
    pub height: u32,
    pub columns: Vec<Column>,
    pub blockages: Vec<Rect>,
    regions: Vec<Rect>,
    cell_region: Vec<u32>,
    sites: Vec<Site>,
    site_at: Vec<u32>,
    layouts: Vec<Vec<SlotInfo>>,
}

const NONE: u32 = u32::MAX;

impl DeviceGrid {
    pub fn new(width: u32, height: u32, mut columns: Vec<Column>, blockages: Vec<Rect>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Schema("device width and height must be positive".into()));
        }
        columns.sort_by_key(|c| c.x);
        for w in columns.windows(2) {
            if w[0].x == w[1].x {
                return Err(Error::Schema(format!("column x={} declared twice", w[0].x)));
            }
        }
        for c in &columns {
            if c.x >= width {
                return Err(Error::Schema(format!("column x={} outside width {width}", c.x)));
            }
            if c.slots.layout().is_empty() {
                return Err(Error::Schema(format!("column x={} has no slots", c.x)));
            }
            if c.kind == SiteKind::Slicem && c.slots.lut == 0 {
                return Err(Error::Schema(format!("SLICEM column x={} without LUT slots", c.x)));
            }
        }
        for b in &blockages {
            if b.x0 >= b.x1 || b.y0 >= b.y1 || b.x1 > width || b.y1 > height {
                return Err(Error::Schema(format!("blockage {:?} is empty or exceeds the grid", b)));
            }
        }
        let (regions, cell_region) = compute_regions(width, height, &blockages);

        let mut sites = Vec::new();
        let mut site_at = vec![NONE; (width * height) as usize];
        for (ci, c) in columns.iter().enumerate() {
            for y in 0..height {
                if cell_region[(y * width + c.x) as usize] == NONE {
                    continue;
                }
                site_at[(y * width + c.x) as usize] = sites.len() as u32;
                sites.push(Site { x: c.x, y, kind: c.kind, column: ci });
            }
        }
        let layouts = columns
            .iter()
            .map(|c| {
                let kinds = c.slots.layout();
                let mut out = Vec::with_capacity(kinds.len());
                for (i, &k) in kinds.iter().enumerate() {
                    let rank = kinds[..i].iter().filter(|&&o| o == k).count() as u8;
                    let group = kinds.iter().filter(|&&o| o == k).count() as u8;
                    out.push(SlotInfo { kind: k, rank, group });
                }
                out
            })
            .collect();
        Ok(DeviceGrid { width, height, columns, blockages, regions, cell_region, sites, site_at, layouts })
    }

    /// Available placement regions: maximal blockage-free rectangles.
    pub fn regions(&self) -> &[Rect] {
        &self.regions
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn site(&self, id: SiteId) -> &Site {
        &self.sites[id.index()]
    }

    pub fn site_at(&self, x: u32, y: u32) -> Option<SiteId> {
        if x >= self.width || y >= self.height {
            return None;
        }
        let s = self.site_at[(y * self.width + x) as usize];
        (s != NONE).then_some(SiteId(s))
    }

    pub fn site_name(&self, id: SiteId) -> String {
        let s = self.site(id);
        format!("X{}Y{}", s.x, s.y)
    }

    pub fn num_slots(&self, site: SiteId) -> usize {
        self.layouts[self.site(site).column].len()
    }

    pub fn slot_kind(&self, site: SiteId, slot: usize) -> SlotKind {
        self.layouts[self.site(site).column][slot].kind
    }

    pub fn slot_accepts(&self, site: SiteId, slot: usize, cell: CellKind) -> bool {
        let s = self.site(site);
        slot < self.layouts[s.column].len() && self.layouts[s.column][slot].kind.accepts(s.kind, cell)
    }

    /// Slots of a site that accept `cell`.
    pub fn compatible_slots(&self, site: SiteId, cell: CellKind) -> impl Iterator<Item = usize> + '_ {
        let s = self.site(site);
        self.layouts[s.column].iter().enumerate().filter(move |(_, info)| info.kind.accepts(s.kind, cell)).map(|(i, _)| i)
    }

    /// Continuous coordinates of a BEL slot. Slots of one kind are stacked
    /// around the site centre with a small pitch.
    pub fn slot_xy(&self, site: SiteId, slot: usize) -> (f64, f64) {
        let s = self.site(site);
        let info = &self.layouts[s.column][slot];
        let mid = (info.group as f64 - 1.0) / 2.0;
        (s.x as f64 + 0.5, s.y as f64 + 0.5 + (info.rank as f64 - mid) * SLOT_PITCH)
    }

    pub fn site_center(&self, site: SiteId) -> (f64, f64) {
        let s = self.site(site);
        (s.x as f64 + 0.5, s.y as f64 + 0.5)
    }

    /// Region containing a point, or the blockage marker.
    pub fn region_of(&self, x: f64, y: f64) -> Result<RegionRef> {
        if !(x >= 0.0 && y >= 0.0 && x <= self.width as f64 && y <= self.height as f64) {
            return Err(Error::OutOfGrid { x, y, width: self.width, height: self.height });
        }
        let cx = (x.floor() as u32).min(self.width - 1);
        let cy = (y.floor() as u32).min(self.height - 1);
        Ok(self.region_of_cell(cx, cy))
    }

    pub fn region_of_cell(&self, x: u32, y: u32) -> RegionRef {
        match self.cell_region[(y * self.width + x) as usize] {
            NONE => RegionRef::Blockage,
            r => RegionRef::Region(r as usize),
        }
    }

    /// Region lookup that clamps out-of-grid points onto the border.
    pub fn region_of_clamped(&self, x: f64, y: f64) -> RegionRef {
        let cx = (x.max(0.0).floor() as u32).min(self.width - 1);
        let cy = (y.max(0.0).floor() as u32).min(self.height - 1);
        self.region_of_cell(cx, cy)
    }

    /// Column indices whose sites can host `cell`.
    pub fn columns_for(&self, cell: CellKind) -> impl Iterator<Item = usize> + '_ {
        self.layouts
            .iter()
            .enumerate()
            .filter(move |(ci, l)| {
                let kind = self.columns[*ci].kind;
                l.iter().any(|s| s.kind.accepts(kind, cell))
            })
            .map(|(ci, _)| ci)
    }

    /// Total slots accepting `cell` over the device.
    pub fn capacity_for(&self, cell: CellKind) -> usize {
        self.sites.iter().map(|s| self.layouts[s.column].iter().filter(|i| i.kind.accepts(s.kind, cell)).count()).sum()
    }

    pub fn slots_for_cell_in_column(&self, column: usize, cell: CellKind) -> usize {
        let kind = self.columns[column].kind;
        self.layouts[column].iter().filter(|i| i.kind.accepts(kind, cell)).count()
    }
}

/// Splits the grid into vertical slabs at blockage boundaries, takes the free
/// row intervals of each slab and merges horizontally adjacent slabs with the
/// same free interval.
fn compute_regions(width: u32, height: u32, blockages: &[Rect]) -> (Vec<Rect>, Vec<u32>) {
    let mut xs: Vec<u32> = vec![0, width];
    for b in blockages {
        xs.push(b.x0);
        xs.push(b.x1);
    }
    xs.sort_unstable();
    xs.dedup();

    let mut regions: Vec<Rect> = Vec::new();
    // open regions from the previous slab, keyed by their row interval
    let mut open: Vec<usize> = Vec::new();
    for w in xs.windows(2) {
        let (xa, xb) = (w[0], w[1]);
        let mut blocked: Vec<(u32, u32)> = blockages.iter().filter(|b| b.x0 <= xa && b.x1 >= xb).map(|b| (b.y0, b.y1)).collect();
        blocked.sort_unstable();
        let mut free = Vec::new();
        let mut y = 0;
        for (b0, b1) in blocked {
            if b0 > y {
                free.push((y, b0));
            }
            y = y.max(b1);
        }
        if y < height {
            free.push((y, height));
        }
        let mut next_open = Vec::new();
        for (y0, y1) in free {
            if let Some(&ri) = open.iter().find(|&&ri| regions[ri].y0 == y0 && regions[ri].y1 == y1 && regions[ri].x1 == xa) {
                regions[ri].x1 = xb;
                next_open.push(ri);
            } else {
                regions.push(Rect { x0: xa, y0, x1: xb, y1 });
                next_open.push(regions.len() - 1);
            }
        }
        open = next_open;
    }

    let mut cell_region = vec![NONE; (width * height) as usize];
    for (ri, r) in regions.iter().enumerate() {
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                cell_region[(y * width + x) as usize] = ri as u32;
            }
        }
    }
    (regions, cell_region)
}

use crate::error::{Error, Result};
use crate::model::device::{DeviceGrid, SiteId};
use crate::model::netlist::{Net, Netlist};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Binding {
    pub site: SiteId,
    pub slot: u16,
}

/// Continuous coordinates for every instance, plus discrete site/BEL
/// bindings once packing has run.
#[derive(Clone, Debug, PartialEq)]
pub struct PlacementState {
    pub xy: Vec<(f64, f64)>,
    pub binding: Vec<Option<Binding>>,
}

impl PlacementState {
    pub fn new(num_instances: usize) -> Self {
        PlacementState { xy: vec![(0.0, 0.0); num_instances], binding: vec![None; num_instances] }
    }

    pub fn from_xy(xy: Vec<(f64, f64)>) -> Self {
        let n = xy.len();
        PlacementState { xy, binding: vec![None; n] }
    }

    /// Binds an instance to a BEL slot and moves it onto the slot position.
    pub fn bind(&mut self, device: &DeviceGrid, inst: usize, site: SiteId, slot: usize) {
        self.binding[inst] = Some(Binding { site, slot: slot as u16 });
        self.xy[inst] = device.slot_xy(site, slot);
    }

    pub fn unbind(&mut self, inst: usize) {
        self.binding[inst] = None;
    }

    pub fn is_fully_bound(&self) -> bool {
        self.binding.iter().all(Option::is_some)
    }

    /// Puts fixed instances at their declared locations.
    pub fn apply_fixed(&mut self, netlist: &Netlist) {
        for (i, inst) in netlist.instances.iter().enumerate() {
            if let (true, Some(loc)) = (inst.fixed, inst.loc) {
                self.xy[i] = loc;
            }
        }
    }
}

/// Bounding-box semiperimeter of one net, unweighted.
pub fn net_hpwl(net: &Net, xy: &[(f64, f64)]) -> f64 {
    if net.pins.len() < 2 {
        return 0.0;
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in &net.pins {
        let (x, y) = xy[p.inst];
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    (x1 - x0) + (y1 - y0)
}

/// Weighted half-perimeter wirelength over all nets.
pub fn hpwl(netlist: &Netlist, xy: &[(f64, f64)]) -> f64 {
    netlist.nets.iter().map(|n| n.weight * net_hpwl(n, xy)).sum()
}

/// Per-site slot occupancy derived from bindings.
#[derive(Clone, Debug)]
pub struct Occupancy {
    slots: Vec<Vec<Option<usize>>>,
}

impl Occupancy {
    pub fn empty(device: &DeviceGrid) -> Self {
        let slots = (0..device.sites().len()).map(|s| vec![None; device.num_slots(SiteId(s as u32))]).collect();
        Occupancy { slots }
    }

    /// Fails on a slot bound twice or a slot index out of range.
    pub fn from_placement(device: &DeviceGrid, placement: &PlacementState) -> Result<Self> {
        let mut occ = Occupancy::empty(device);
        for (inst, b) in placement.binding.iter().enumerate() {
            if let Some(b) = b {
                let cell = occ
                    .slots
                    .get_mut(b.site.index())
                    .and_then(|s| s.get_mut(b.slot as usize))
                    .ok_or_else(|| Error::Schema(format!("instance {inst} bound to a missing slot")))?;
                if let Some(other) = *cell {
                    return Err(Error::Schema(format!("slot {:?}/{} bound to {other} and {inst}", b.site, b.slot)));
                }
                *cell = Some(inst);
            }
        }
        Ok(occ)
    }

    pub fn get(&self, site: SiteId, slot: usize) -> Option<usize> {
        self.slots[site.index()][slot]
    }

    pub fn is_free(&self, site: SiteId, slot: usize) -> bool {
        self.slots[site.index()][slot].is_none()
    }

    pub fn set(&mut self, site: SiteId, slot: usize, inst: Option<usize>) {
        self.slots[site.index()][slot] = inst;
    }

    pub fn site_members(&self, site: SiteId) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.slots[site.index()].iter().enumerate().filter_map(|(slot, o)| o.map(|i| (slot, i)))
    }

    /// Moves an instance between slots, keeping placement and occupancy in step.
    pub fn relocate(&mut self, device: &DeviceGrid, placement: &mut PlacementState, inst: usize, site: SiteId, slot: usize) {
        if let Some(b) = placement.binding[inst] {
            if self.slots[b.site.index()][b.slot as usize] == Some(inst) {
                self.slots[b.site.index()][b.slot as usize] = None;
            }
        }
        debug_assert!(self.is_free(site, slot), "relocation target occupied");
        self.slots[site.index()][slot] = Some(inst);
        placement.bind(device, inst, site, slot);
    }
}

/// Outcome of a legality scan over a fully bound placement.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LegalityReport {
    pub unbound: Vec<usize>,
    pub double_bindings: usize,
    pub kind_mismatches: Vec<usize>,
    pub macro_offset_errors: Vec<usize>,
    pub out_of_grid: Vec<usize>,
    pub moved_fixed: Vec<usize>,
}

impl LegalityReport {
    pub fn is_legal(&self) -> bool {
        self.unbound.is_empty()
            && self.double_bindings == 0
            && self.kind_mismatches.is_empty()
            && self.macro_offset_errors.is_empty()
            && self.out_of_grid.is_empty()
            && self.moved_fixed.is_empty()
    }
}

/// Scans a placement for slot double-bindings, kind mismatches, broken macro
/// shapes and out-of-grid coordinates.
pub fn check_legality(netlist: &Netlist, device: &DeviceGrid, placement: &PlacementState) -> LegalityReport {
    let mut rep = LegalityReport::default();
    let mut seen = std::collections::HashSet::new();
    for (i, inst) in netlist.instances.iter().enumerate() {
        let (x, y) = placement.xy[i];
        if !(x >= 0.0 && y >= 0.0 && x <= device.width as f64 && y <= device.height as f64) {
            rep.out_of_grid.push(i);
        }
        if inst.fixed {
            if let Some(loc) = inst.loc {
                if (loc.0 - x).abs() > 1e-9 || (loc.1 - y).abs() > 1e-9 {
                    rep.moved_fixed.push(i);
                }
            }
        }
        match placement.binding[i] {
            None => rep.unbound.push(i),
            Some(b) => {
                if !seen.insert((b.site, b.slot)) {
                    rep.double_bindings += 1;
                }
                if b.site.index() >= device.sites().len() || !device.slot_accepts(b.site, b.slot as usize, inst.kind) {
                    rep.kind_mismatches.push(i);
                }
            }
        }
    }
    for m in &netlist.macros {
        let mut anchor: Option<(u32, i64)> = None;
        for &inst in &m.members {
            let Some(b) = placement.binding[inst] else { continue };
            if b.site.index() >= device.sites().len() {
                continue;
            }
            let s = device.site(b.site);
            let here = (s.x, s.y as i64 - netlist.instances[inst].offset.1 as i64);
            let bad = match anchor {
                None => {
                    anchor = Some(here);
                    !device.columns[s.column].kind.satisfies(m.column)
                }
                Some(a) => a != here,
            };
            if bad {
                rep.macro_offset_errors.push(inst);
            }
        }
    }
    rep
}

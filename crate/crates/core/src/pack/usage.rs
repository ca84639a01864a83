//! Slot usage counts per site, by slot kind.

use crate::model::{CellKind, DeviceGrid, SiteId, SlotCaps, SlotKind};

pub(crate) const SLOT_KINDS: usize = 7;

pub fn slot_kind_of(cell: CellKind) -> SlotKind {
    match cell {
        CellKind::Lut | CellKind::Lutram => SlotKind::Lut,
        CellKind::Ff => SlotKind::Ff,
        CellKind::Carry => SlotKind::Carry,
        CellKind::Mux => SlotKind::Mux,
        CellKind::Dsp => SlotKind::Dsp,
        CellKind::Bram => SlotKind::Bram,
        CellKind::Io => SlotKind::Io,
    }
}

fn caps(s: &SlotCaps) -> [u8; SLOT_KINDS] {
    [s.lut, s.ff, s.carry, s.mux, s.dsp, s.bram, s.io]
}

#[derive(Clone, Debug, PartialEq)]
pub struct SiteUsage {
    used: Vec<[u8; SLOT_KINDS]>,
}

impl SiteUsage {
    pub fn new(device: &DeviceGrid) -> Self {
        SiteUsage { used: vec![[0; SLOT_KINDS]; device.sites().len()] }
    }

    /// Whether `cells` can be added to the site on top of its current usage.
    pub fn fits(&self, device: &DeviceGrid, site: SiteId, cells: impl IntoIterator<Item = CellKind>) -> bool {
        let s = device.site(site);
        let cap = caps(&device.columns[s.column].slots);
        let mut need = self.used[site.index()];
        for c in cells {
            let k = slot_kind_of(c);
            if !k.accepts(s.kind, c) {
                return false;
            }
            need[k as usize] += 1;
            if need[k as usize] > cap[k as usize] {
                return false;
            }
        }
        true
    }

    pub fn add(&mut self, site: SiteId, cells: impl IntoIterator<Item = CellKind>) {
        for c in cells {
            self.used[site.index()][slot_kind_of(c) as usize] += 1;
        }
    }

    pub fn remove(&mut self, site: SiteId, cells: impl IntoIterator<Item = CellKind>) {
        for c in cells {
            self.used[site.index()][slot_kind_of(c) as usize] -= 1;
        }
    }

    pub fn used(&self, site: SiteId, kind: SlotKind) -> u8 {
        self.used[site.index()][kind as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Column, SiteKind};

    #[test]
    fn lutram_needs_slicem() {
        let cols = vec![
            Column { x: 0, kind: SiteKind::Slicel, slots: SlotCaps::clb() },
            Column { x: 1, kind: SiteKind::Slicem, slots: SlotCaps::clb() },
        ];
        let dev = DeviceGrid::new(2, 1, cols, vec![]).unwrap();
        let u = SiteUsage::new(&dev);
        let l = dev.site_at(0, 0).unwrap();
        let m = dev.site_at(1, 0).unwrap();
        assert!(!u.fits(&dev, l, [CellKind::Lutram]));
        assert!(u.fits(&dev, m, [CellKind::Lutram]));
    }

    #[test]
    fn counts_against_capacity() {
        let dev = DeviceGrid::new(1, 1, vec![Column { x: 0, kind: SiteKind::Slicel, slots: SlotCaps::clb() }], vec![]).unwrap();
        let s = dev.site_at(0, 0).unwrap();
        let mut u = SiteUsage::new(&dev);
        assert!(u.fits(&dev, s, [CellKind::Carry]));
        assert!(!u.fits(&dev, s, [CellKind::Carry, CellKind::Carry]));
        u.add(s, [CellKind::Lut; 7]);
        assert!(u.fits(&dev, s, [CellKind::Lut]));
        assert!(!u.fits(&dev, s, [CellKind::Lut, CellKind::Lut]));
        u.remove(s, [CellKind::Lut; 7]);
        assert_eq!(u.used(s, SlotKind::Lut), 0);
    }
}

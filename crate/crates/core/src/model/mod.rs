//! Netlist, device and placement data model.

pub mod device;
pub mod io;
pub mod netlist;
pub mod placement;

pub use device::{Column, DeviceGrid, Rect, RegionRef, Site, SiteId, SiteKind, SlotCaps, SlotKind};
pub use io::{load_design, DeviceFile, Metrics, NetlistFile, PlacementFile};
pub use netlist::{CellKind, Instance, Macro, MacroKind, Net, Netlist, Pin, PinRole};
pub use placement::{check_legality, hpwl, net_hpwl, Binding, LegalityReport, Occupancy, PlacementState};

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn netlist_with(pins: &[Vec<usize>], n: usize) -> Netlist {
        let instances = (0..n)
            .map(|i| Instance {
                id: i as u32,
                name: format!("i{i}"),
                kind: CellKind::Lut,
                macro_id: None,
                offset: (0, 0),
                fixed: false,
                timing_start: false,
                timing_end: false,
                loc: None,
            })
            .collect();
        let nets = pins
            .iter()
            .enumerate()
            .map(|(k, ps)| Net {
                id: k as u32,
                weight: 1.0,
                pins: ps
                    .iter()
                    .enumerate()
                    .map(|(j, &inst)| Pin { inst, role: if j == 0 { PinRole::Driver } else { PinRole::Sink } })
                    .collect(),
            })
            .collect();
        Netlist::new(instances, nets, vec![], 1.0).unwrap()
    }

    #[test]
    fn hpwl_of_one_net() {
        let nl = netlist_with(&[vec![0, 1]], 2);
        assert_eq!(hpwl(&nl, &[(0.0, 0.0), (3.0, 4.0)]), 7.0);
        assert_eq!(hpwl(&nl, &[(2.0, 2.0), (2.0, 2.0)]), 0.0);
    }

    #[test]
    fn hpwl_matches_per_net_recomputation() {
        let nets = vec![vec![0, 1, 2], vec![3, 4], vec![1, 3, 4, 0]];
        let nl = netlist_with(&nets, 5);
        let xy = [(0.3, 9.0), (4.0, 1.5), (2.2, 2.2), (7.0, 0.0), (5.5, 3.25)];
        let mut expected = 0.0;
        for ps in &nets {
            let xs: Vec<f64> = ps.iter().map(|&i| xy[i].0).collect();
            let ys: Vec<f64> = ps.iter().map(|&i| xy[i].1).collect();
            let span = |v: &[f64]| v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
            expected += span(&xs) + span(&ys);
        }
        assert!((hpwl(&nl, &xy) - expected).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn hpwl_invariant_under_pin_order_and_translation(
            coords in proptest::collection::vec((0.0f64..100.0, 0.0f64..100.0), 6),
            shift in (-50.0f64..50.0, -50.0f64..50.0),
            rot in 0usize..6,
        ) {
            let base = vec![vec![0, 1, 2, 3], vec![4, 5], vec![2, 5, 1]];
            let permuted: Vec<Vec<usize>> = base.iter().map(|p| {
                let mut p = p.clone();
                let r = rot % p.len();
                p.rotate_left(r);
                p
            }).collect();
            let a = netlist_with(&base, 6);
            let b = netlist_with(&permuted, 6);
            let h = hpwl(&a, &coords);
            prop_assert!(h >= 0.0);
            prop_assert!((h - hpwl(&b, &coords)).abs() < 1e-9);
            let moved: Vec<_> = coords.iter().map(|&(x, y)| (x + shift.0, y + shift.1)).collect();
            prop_assert!((h - hpwl(&a, &moved)).abs() < 1e-9);
        }
    }
}

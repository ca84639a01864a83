//! BEL slot assignment inside one site.

use crate::error::{Error, Result};
use crate::model::{DeviceGrid, Netlist, SiteId};
use crate::timing::{DelayModelParams, PinLoc, TimingGraph};

/// Depth-first enumeration of slot assignments for the members of one site,
/// minimizing the largest net delay over timing edges that touch a member.
/// Members take slots in the given order and slots are tried in ascending
/// index order, so among equal costs the lexicographically first
/// assignment wins. The search stops after `budget` visited nodes and keeps
/// the best complete assignment found so far.
#[allow(clippy::too_many_arguments)]
pub fn assign_bels(
    netlist: &Netlist,
    device: &DeviceGrid,
    site: SiteId,
    members: &[usize],
    graph: &TimingGraph,
    delay: &DelayModelParams,
    xy: &[(f64, f64)],
    budget: usize,
) -> Result<Vec<usize>> {
    let m = members.len();
    let nslots = device.num_slots(site);
    assert!(nslots <= 64, "site with more than 64 slots");
    let compat: Vec<Vec<usize>> = members.iter().map(|&i| device.compatible_slots(site, netlist.instances[i].kind).collect()).collect();
    let loc = |(x, y): (f64, f64)| PinLoc { x, y, region: device.region_of_clamped(x, y) };
    let local = |v: usize| members.iter().position(|&u| u == v);

    // external edge cost per (member, slot), and internal edges by the later member
    let mut ext = vec![vec![0.0; nslots]; m];
    let mut internal: Vec<Vec<(usize, usize, bool)>> = vec![Vec::new(); m];
    for (k, &v) in members.iter().enumerate() {
        for (&e, out) in graph.in_edges(v).iter().map(|e| (e, false)).chain(graph.out_edges(v).iter().map(|e| (e, true))) {
            let edge = graph.edges[e];
            let other = if out { edge.dst } else { edge.src };
            match local(other) {
                Some(j) => {
                    if j < k {
                        internal[k].push((j, e, out));
                    }
                }
                None => {
                    for &s in &compat[k] {
                        let here = loc(device.slot_xy(site, s));
                        let there = loc(xy[other]);
                        let d = if out { delay.eval(here, there, edge.cascade) } else { delay.eval(there, here, edge.cascade) };
                        ext[k][s] = f64::max(ext[k][s], d);
                    }
                }
            }
        }
    }

    struct Search<'a> {
        compat: &'a [Vec<usize>],
        ext: &'a [Vec<f64>],
        internal: &'a [Vec<(usize, usize, bool)>],
        cost: &'a dyn Fn(usize, usize, usize, bool) -> f64,
        cur: Vec<usize>,
        best: Option<(f64, Vec<usize>)>,
        nodes: usize,
        budget: usize,
    }

    impl Search<'_> {
        fn go(&mut self, k: usize, used: u64, acc: f64) {
            if k == self.cur.len() {
                if self.best.as_ref().map_or(true, |b| acc < b.0) {
                    self.best = Some((acc, self.cur.clone()));
                }
                return;
            }
            for &s in &self.compat[k] {
                if self.nodes >= self.budget && self.best.is_some() {
                    return;
                }
                if used & (1 << s) != 0 {
                    continue;
                }
                self.nodes += 1;
                let mut c = acc.max(self.ext[k][s]);
                for &(j, e, out) in &self.internal[k] {
                    c = c.max((self.cost)(self.cur[j], s, e, out));
                }
                if self.best.as_ref().is_some_and(|b| c >= b.0) {
                    continue;
                }
                self.cur[k] = s;
                self.go(k + 1, used | (1 << s), c);
            }
        }
    }

    // delay of edge `e` between member slot `sj` (earlier) and `sk` (current);
    // `out` is true when the current member drives
    let cost = |sj: usize, sk: usize, e: usize, out: bool| {
        let a = loc(device.slot_xy(site, sj));
        let b = loc(device.slot_xy(site, sk));
        let c = graph.edges[e].cascade;
        if out {
            delay.eval(b, a, c)
        } else {
            delay.eval(a, b, c)
        }
    };
    let mut search = Search { compat: &compat, ext: &ext, internal: &internal, cost: &cost, cur: vec![0; m], best: None, nodes: 0, budget };
    search.go(0, 0, 0.0);
    search.best.map(|b| b.1).ok_or_else(|| Error::NoCompatibleAssignment { site: device.site_name(site) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CellKind, Column, Instance, Net, Pin, PinRole, SiteKind, SlotCaps};
    use crate::timing::LogicDelays;

    fn design(kinds: &[CellKind], edges: &[(usize, usize)]) -> Netlist {
        let insts = kinds
            .iter()
            .enumerate()
            .map(|(i, &kind)| Instance {
                id: i as u32,
                name: format!("i{i}"),
                kind,
                macro_id: None,
                offset: (0, 0),
                fixed: false,
                timing_start: true,
                timing_end: true,
                loc: None,
            })
            .collect();
        let nets = edges
            .iter()
            .enumerate()
            .map(|(k, &(a, b))| Net {
                id: k as u32,
                weight: 1.0,
                pins: vec![Pin { inst: a, role: PinRole::Driver }, Pin { inst: b, role: PinRole::Sink }],
            })
            .collect();
        Netlist::new(insts, nets, vec![], 10.0).unwrap()
    }

    fn one_site(slots: SlotCaps) -> DeviceGrid {
        DeviceGrid::new(12, 12, vec![Column { x: 5, kind: SiteKind::Slicel, slots }], vec![]).unwrap()
    }

    #[test]
    fn single_compatible_slot() {
        let nl = design(&[CellKind::Carry], &[]);
        let dev = one_site(SlotCaps::clb());
        let g = TimingGraph::from_netlist(&nl, &LogicDelays::default()).unwrap();
        let s = dev.site_at(5, 5).unwrap();
        let got = assign_bels(&nl, &dev, s, &[0], &g, &DelayModelParams::default(), &[(5.5, 5.5)], 1000).unwrap();
        assert_eq!(dev.slot_kind(s, got[0]), crate::model::SlotKind::Carry);
    }

    #[test]
    fn ties_take_first_permutation() {
        let nl = design(&[CellKind::Ff, CellKind::Ff], &[]);
        let dev = one_site(SlotCaps { ff: 2, ..Default::default() });
        let g = TimingGraph::from_netlist(&nl, &LogicDelays::default()).unwrap();
        let s = dev.site_at(5, 5).unwrap();
        let got = assign_bels(&nl, &dev, s, &[0, 1], &g, &DelayModelParams::default(), &[(5.5, 5.5); 2], 1000).unwrap();
        assert_eq!(got, vec![0, 1]);
    }

    #[test]
    fn incompatible_members_fail() {
        let nl = design(&[CellKind::Dsp], &[]);
        let dev = one_site(SlotCaps::clb());
        let g = TimingGraph::from_netlist(&nl, &LogicDelays::default()).unwrap();
        let s = dev.site_at(5, 5).unwrap();
        assert!(assign_bels(&nl, &dev, s, &[0], &g, &DelayModelParams::default(), &[(5.5, 5.5)], 1000).is_err());
    }

    #[test]
    fn matches_exhaustive_scan() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let dev = one_site(SlotCaps { ff: 4, ..Default::default() });
        let s = dev.site_at(5, 5).unwrap();
        let params = DelayModelParams::default();
        for _ in 0..50 {
            // members 0..3 in the site, 3..6 outside, random edges between them
            let edges: Vec<(usize, usize)> = (0..5)
                .map(|_| {
                    let a = rng.gen_range(0..3);
                    let b = rng.gen_range(3..6);
                    if rng.gen_bool(0.5) {
                        (a, b)
                    } else {
                        (b, a)
                    }
                })
                .chain([(0, 1)])
                .collect();
            let nl = design(&[CellKind::Ff; 6], &edges);
            let g = TimingGraph::from_netlist(&nl, &LogicDelays::default()).unwrap();
            let mut xy = vec![(5.5, 5.5); 6];
            for p in xy.iter_mut().skip(3) {
                *p = (rng.gen_range(0.0..12.0), rng.gen_range(0.0..12.0));
            }
            let got = assign_bels(&nl, &dev, s, &[0, 1, 2], &g, &params, &xy, 100_000).unwrap();

            let mut best: Option<(f64, Vec<usize>)> = None;
            for a in 0..4 {
                for b in 0..4 {
                    for c in 0..4 {
                        if a == b || b == c || a == c {
                            continue;
                        }
                        let slot = [a, b, c];
                        let pos = |v: usize| if v < 3 { dev.slot_xy(s, slot[v]) } else { xy[v] };
                        let worst = edges
                            .iter()
                            .map(|&(u, v)| {
                                let (p, q) = (pos(u), pos(v));
                                let pl = |(x, y): (f64, f64)| PinLoc { x, y, region: dev.region_of_clamped(x, y) };
                                params.eval(pl(p), pl(q), None)
                            })
                            .fold(0.0, f64::max);
                        if best.as_ref().map_or(true, |b| worst < b.0) {
                            best = Some((worst, slot.to_vec()));
                        }
                    }
                }
            }
            assert_eq!(got, best.unwrap().1);
        }
    }
}

//! Site-centric packing of free CLB cells: sites grow clusters in parallel
//! and contested cells go to the highest bidder.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::floorplan::PathLengthInfo;
use crate::model::{DeviceGrid, Netlist, RegionRef, SiteId};

use super::score::marginal_gain;
use super::usage::SiteUsage;
use super::PackConfig;

/// Free CLB cells that go through site packing.
pub fn packable(netlist: &Netlist) -> Vec<usize> {
    (0..netlist.num_instances())
        .filter(|&i| {
            let it = &netlist.instances[i];
            it.kind.is_clb() && !it.fixed && it.macro_id.is_none()
        })
        .collect()
}

/// Instance buckets per grid cell.
struct Buckets {
    width: usize,
    height: usize,
    cells: Vec<Vec<usize>>,
}

impl Buckets {
    fn new(device: &DeviceGrid, xy: &[(f64, f64)], insts: impl Iterator<Item = usize>) -> Self {
        let (width, height) = (device.width as usize, device.height as usize);
        let mut cells = vec![Vec::new(); width * height];
        for i in insts {
            let (cx, cy) = Self::cell(width, height, xy[i]);
            cells[cy * width + cx].push(i);
        }
        Buckets { width, height, cells }
    }

    fn cell(width: usize, height: usize, (x, y): (f64, f64)) -> (usize, usize) {
        ((x.max(0.0) as usize).min(width - 1), (y.max(0.0) as usize).min(height - 1))
    }

    /// Instances in cells within `r` of cell (x, y), sorted by index.
    fn around(&self, x: u32, y: u32, r: usize) -> Vec<usize> {
        let (x, y) = (x as usize, y as usize);
        let mut out = Vec::new();
        for cy in y.saturating_sub(r)..=(y + r).min(self.height - 1) {
            for cx in x.saturating_sub(r)..=(x + r).min(self.width - 1) {
                out.extend_from_slice(&self.cells[cy * self.width + cx]);
            }
        }
        out.sort_unstable();
        out
    }
}

fn share_net(netlist: &Netlist, a: usize, b: usize) -> bool {
    let (na, nb) = (netlist.nets_of(a), netlist.nets_of(b));
    let (mut i, mut j) = (0, 0);
    while i < na.len() && j < nb.len() {
        match na[i].cmp(&nb[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

/// Greedy cluster growth at one site. Returns the newly added cells with
/// their leave-one-out bids.
#[allow(clippy::too_many_arguments)]
fn grow(
    netlist: &Netlist,
    device: &DeviceGrid,
    usage: &SiteUsage,
    site: SiteId,
    held: &[usize],
    cands: &[usize],
    xy: &[(f64, f64)],
    info: &PathLengthInfo,
    cfg: &PackConfig,
) -> Vec<(usize, f64)> {
    let at = device.site_center(site);
    let mut members = held.to_vec();
    let mut added: Vec<usize> = Vec::new();
    let mut scratch = Vec::new();
    let mut gains: Vec<Option<f64>> = cands
        .iter()
        .map(|&c| {
            usage
                .fits(device, site, [netlist.instances[c].kind])
                .then(|| marginal_gain(netlist, &members, c, at, xy, info, cfg, &mut scratch))
        })
        .collect();
    loop {
        let mut best: Option<(f64, usize)> = None;
        for (k, g) in gains.iter().enumerate() {
            if let Some(g) = *g {
                if best.map_or(true, |(b, _)| g > b) {
                    best = Some((g, k));
                }
            }
        }
        let Some((_, k)) = best else { break };
        let u = cands[k];
        members.push(u);
        added.push(u);
        gains[k] = None;
        let kinds: Vec<_> = added.iter().map(|&a| netlist.instances[a].kind).collect();
        for (j, &c) in cands.iter().enumerate() {
            if gains[j].is_none() {
                continue;
            }
            if !usage.fits(device, site, kinds.iter().copied().chain([netlist.instances[c].kind])) {
                gains[j] = None;
            } else if share_net(netlist, u, c) {
                gains[j] = Some(marginal_gain(netlist, &members, c, at, xy, info, cfg, &mut scratch));
            }
        }
    }
    added
        .iter()
        .map(|&v| {
            let rest: Vec<usize> = members.iter().copied().filter(|&m| m != v).collect();
            (v, marginal_gain(netlist, &rest, v, at, xy, info, cfg, &mut scratch))
        })
        .collect()
}

/// Assigns every packable cell to a CLB site. `usage` holds the slots
/// already taken by macros and fixed cells and is updated in place.
pub fn pack_sites(
    netlist: &Netlist,
    device: &DeviceGrid,
    xy: &[(f64, f64)],
    info: &PathLengthInfo,
    usage: &mut SiteUsage,
    cfg: &PackConfig,
) -> Result<Vec<Option<SiteId>>> {
    let n = netlist.num_instances();
    let todo = packable(netlist);
    let mut site_of: Vec<Option<SiteId>> = vec![None; n];
    let sites: Vec<SiteId> =
        (0..device.sites().len() as u32).map(SiteId).filter(|&s| device.columns[device.site(s).column].kind.is_clb()).collect();
    let mut held: Vec<Vec<usize>> = vec![Vec::new(); sites.len()];
    let mut left = todo.len();
    let span = device.width.max(device.height) as usize;
    // cells stay in the region they were placed in until that stops working
    let home: Vec<RegionRef> = xy.iter().map(|&(x, y)| device.region_of_clamped(x, y)).collect();
    let mut cross = device.regions().len() < 2;
    let mut round = 0;
    while left > 0 && round < cfg.rounds {
        let radius = cfg.radius + round;
        round += 1;
        let crossing = cross;
        let buckets = Buckets::new(device, xy, todo.iter().copied().filter(|&i| site_of[i].is_none()));
        let snapshot: &SiteUsage = usage;
        let bids: Vec<Vec<(usize, f64)>> = sites
            .par_iter()
            .enumerate()
            .map(|(k, &s)| {
                let site = device.site(s);
                let mut cands = buckets.around(site.x, site.y, radius);
                if !crossing {
                    let r = device.region_of_cell(site.x, site.y);
                    cands.retain(|&c| home[c] == r || home[c] == RegionRef::Blockage);
                }
                if cands.is_empty() {
                    return Vec::new();
                }
                grow(netlist, device, snapshot, s, &held[k], &cands, xy, info, cfg)
            })
            .collect();
        let mut award: Vec<Option<(f64, usize)>> = vec![None; n];
        for (k, list) in bids.iter().enumerate() {
            for &(v, g) in list {
                if award[v].map_or(true, |(b, _)| g > b) {
                    award[v] = Some((g, k));
                }
            }
        }
        let before = left;
        for &v in &todo {
            if let (None, Some((_, k))) = (site_of[v], award[v]) {
                site_of[v] = Some(sites[k]);
                held[k].push(v);
                usage.add(sites[k], [netlist.instances[v].kind]);
                left -= 1;
            }
        }
        log::debug!("pack round {round}: radius {radius}, {left} left");
        if crossing && radius > span && bids.iter().all(Vec::is_empty) {
            break;
        }
        cross |= radius > span || left == before;
    }
    if left > 0 {
        let first = todo.iter().copied().find(|&v| site_of[v].is_none()).expect("some left");
        let (x, y) = xy[first];
        let nearest = sites.iter().filter(|&&s| usage.fits(device, s, [netlist.instances[first].kind])).min_by(|&&a, &&b| {
            let d = |s: SiteId| {
                let (sx, sy) = device.site_center(s);
                (sx - x).abs() + (sy - y).abs()
            };
            d(a).total_cmp(&d(b)).then(a.cmp(&b))
        });
        let detail = match nearest {
            Some(&s) => format!("{} at ({x:.1}, {y:.1}), nearest free site {}", netlist.instances[first].name, device.site_name(s)),
            None => {
                format!("{} at ({x:.1}, {y:.1}), no site has a free {} slot", netlist.instances[first].name, netlist.instances[first].kind)
            }
        };
        return Err(Error::Unpackable { count: left, rounds: round, detail });
    }
    Ok(site_of)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CellKind, Column, Instance, Net, Pin, PinRole, SiteKind, SlotCaps};

    fn ffs(n: usize, nets: &[(usize, usize)]) -> Netlist {
        let insts = (0..n)
            .map(|i| Instance {
                id: i as u32,
                name: format!("f{i}"),
                kind: CellKind::Ff,
                macro_id: None,
                offset: (0, 0),
                fixed: false,
                timing_start: true,
                timing_end: true,
                loc: None,
            })
            .collect();
        let nets = nets
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

    fn info(n: usize) -> PathLengthInfo {
        PathLengthInfo { dist_to_start: vec![0; n], dist_to_end: vec![0; n], max_path_len: vec![1; n] }
    }

    fn ff_device(xs: &[u32], ff: u8, w: u32, h: u32) -> DeviceGrid {
        let cols = xs.iter().map(|&x| Column { x, kind: SiteKind::Slicel, slots: SlotCaps { ff, lut: 0, ..Default::default() } }).collect();
        DeviceGrid::new(w, h, cols, vec![]).unwrap()
    }

    #[test]
    fn connected_pair_packs_together() {
        let nl = ffs(2, &[(0, 1)]);
        let dev = ff_device(&[0, 5], 8, 6, 1);
        let xy = vec![(0.9, 0.5), (1.6, 0.5)];
        let cfg = PackConfig::default();
        let inf = info(2);
        let mut usage = SiteUsage::new(&dev);
        let got = pack_sites(&nl, &dev, &xy, &inf, &mut usage, &cfg).unwrap();
        // exhaustive over the four two-site assignments
        let sites = [dev.site_at(0, 0).unwrap(), dev.site_at(5, 0).unwrap()];
        let mut best = (f64::NEG_INFINITY, [0, 0]);
        for a in 0..2 {
            for b in 0..2 {
                let mut total = 0.0;
                for (k, &s) in sites.iter().enumerate() {
                    let members: Vec<usize> = [(0, a), (1, b)].iter().filter(|p| p.1 == k).map(|p| p.0).collect();
                    if !members.is_empty() {
                        total += super::super::score_amf(&nl, &members, dev.site_center(s), &xy, &inf, &cfg);
                    }
                }
                if total > best.0 {
                    best = (total, [a, b]);
                }
            }
        }
        assert_eq!(best.1, [0, 0]);
        assert_eq!(got[0], Some(sites[best.1[0]]));
        assert_eq!(got[1], Some(sites[best.1[1]]));
    }

    #[test]
    fn higher_gain_wins_contested_slot() {
        // one-slot sites at x = 0 and x = 3; instance 0 sits on site 0,
        // instance 1 a little further away
        let nl = ffs(2, &[]);
        let dev = ff_device(&[0, 3], 1, 4, 1);
        let xy = vec![(0.5, 0.5), (1.2, 0.5)];
        let mut inf = info(2);
        inf.max_path_len = vec![4, 1];
        let mut usage = SiteUsage::new(&dev);
        let got = pack_sites(&nl, &dev, &xy, &inf, &mut usage, &PackConfig::default()).unwrap();
        assert_eq!(got[0], dev.site_at(0, 0));
        assert_eq!(got[1], dev.site_at(3, 0));
    }

    #[test]
    fn every_cell_bound_once_within_capacity() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let n = 300;
        let nets: Vec<(usize, usize)> = (0..400).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n))).filter(|p| p.0 != p.1).collect();
        let nl = ffs(n, &nets);
        let dev = ff_device(&(0..10).collect::<Vec<_>>(), 8, 10, 10);
        let xy: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0))).collect();
        let mut usage = SiteUsage::new(&dev);
        let got = pack_sites(&nl, &dev, &xy, &info(n), &mut usage, &PackConfig::default()).unwrap();
        let mut count = vec![0; dev.sites().len()];
        for s in got.iter() {
            count[s.unwrap().index()] += 1;
        }
        assert!(count.iter().all(|&c| c <= 8));
        assert_eq!(count.iter().sum::<usize>(), n);
    }

    #[test]
    fn cells_stay_on_their_side_of_a_blockage() {
        // cell 0 is nearer the right site and shares a net with cell 1 there,
        // but it was placed left of the blockage and the left site has room
        let nl = ffs(2, &[(0, 1)]);
        let device = |blockages| {
            let cols =
                [0, 6].iter().map(|&x| Column { x, kind: SiteKind::Slicel, slots: SlotCaps { ff: 8, ..Default::default() } }).collect();
            DeviceGrid::new(7, 1, cols, blockages).unwrap()
        };
        let xy = vec![(4.9, 0.5), (6.5, 0.5)];
        let run = |dev: &DeviceGrid| pack_sites(&nl, dev, &xy, &info(2), &mut SiteUsage::new(dev), &PackConfig::default()).unwrap();
        let blocked = device(vec![crate::model::Rect { x0: 5, y0: 0, x1: 6, y1: 1 }]);
        assert_eq!(run(&blocked), vec![blocked.site_at(0, 0), blocked.site_at(6, 0)]);
        let open = device(vec![]);
        assert_eq!(run(&open), vec![open.site_at(6, 0), open.site_at(6, 0)]);
    }

    #[test]
    fn full_region_spills_across() {
        let nl = ffs(3, &[]);
        let cols = [0, 3].iter().map(|&x| Column { x, kind: SiteKind::Slicel, slots: SlotCaps { ff: 2, ..Default::default() } }).collect();
        let dev = DeviceGrid::new(4, 1, cols, vec![crate::model::Rect { x0: 2, y0: 0, x1: 3, y1: 1 }]).unwrap();
        let mut usage = SiteUsage::new(&dev);
        let got = pack_sites(&nl, &dev, &[(0.5, 0.5); 3], &info(3), &mut usage, &PackConfig::default()).unwrap();
        assert_eq!(got.iter().filter(|s| **s == dev.site_at(3, 0)).count(), 1);
    }

    #[test]
    fn unpackable_reports_error() {
        let nl = ffs(3, &[]);
        let dev = ff_device(&[0], 1, 1, 2);
        let mut usage = SiteUsage::new(&dev);
        let err = pack_sites(&nl, &dev, &[(0.5, 0.5); 3], &info(3), &mut usage, &PackConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Unpackable { count: 1, .. }));
    }
}

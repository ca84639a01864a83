//! Rigid-group legalization: macros and movable non-CLB singletons snapped
//! to consecutive sites of a compatible column.

use crate::error::{Error, Result};
use crate::model::{CellKind, DeviceGrid, Netlist, SiteId};

use super::usage::SiteUsage;

/// A rigid group of instances with fixed row offsets inside one column.
#[derive(Clone, Debug, PartialEq)]
pub struct RigidGroup {
    pub macro_id: Option<usize>,
    pub insts: Vec<usize>,
    /// Cells needed at each row offset.
    pub rows: Vec<Vec<CellKind>>,
    /// Desired anchor (centre of the bottom site).
    pub target: (f64, f64),
}

impl RigidGroup {
    pub fn height(&self) -> usize {
        self.rows.len()
    }
}

/// Collects every macro and every movable DSP, BRAM or IO singleton.
pub fn rigid_groups(netlist: &Netlist, xy: &[(f64, f64)]) -> Vec<RigidGroup> {
    let mut out = Vec::new();
    for (mi, m) in netlist.macros.iter().enumerate() {
        let mut rows = vec![Vec::new(); m.height as usize];
        let (mut sx, mut sy) = (0.0, 0.0);
        for &i in &m.members {
            let dy = netlist.instances[i].offset.1;
            rows[dy as usize].push(netlist.instances[i].kind);
            sx += xy[i].0;
            sy += xy[i].1 - dy as f64;
        }
        let k = m.members.len() as f64;
        out.push(RigidGroup { macro_id: Some(mi), insts: m.members.clone(), rows, target: (sx / k, sy / k) });
    }
    for (i, inst) in netlist.instances.iter().enumerate() {
        if !inst.fixed && inst.macro_id.is_none() && !inst.kind.is_clb() {
            out.push(RigidGroup { macro_id: None, insts: vec![i], rows: vec![vec![inst.kind]], target: xy[i] });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct MacroLegalization {
    /// Site of every group member; `None` for other instances.
    pub site_of: Vec<Option<SiteId>>,
    /// Bottom site of each group.
    pub anchors: Vec<SiteId>,
    pub displacement: f64,
    pub usage: SiteUsage,
}

/// Candidate bottom sites of a group: every column position where all rows
/// exist and accept their cells on an empty device.
fn candidates(device: &DeviceGrid, g: &RigidGroup, column_ok: impl Fn(usize) -> bool) -> Vec<SiteId> {
    let empty = SiteUsage::new(device);
    let h = g.height() as u32;
    let mut out = Vec::new();
    for (ci, col) in device.columns.iter().enumerate() {
        if !column_ok(ci) || device.height < h {
            continue;
        }
        'rows: for y in 0..=device.height - h {
            for (dy, cells) in g.rows.iter().enumerate() {
                match device.site_at(col.x, y + dy as u32) {
                    Some(s) if empty.fits(device, s, cells.iter().copied()) => {}
                    _ => continue 'rows,
                }
            }
            out.push(device.site_at(col.x, y).expect("checked"));
        }
    }
    out
}

fn displacement(device: &DeviceGrid, g: &RigidGroup, s: SiteId) -> f64 {
    let (x, y) = device.site_center(s);
    (x - g.target.0).abs() + (y - g.target.1).abs()
}

fn rows_fit(device: &DeviceGrid, usage: &SiteUsage, g: &RigidGroup, s: SiteId) -> bool {
    let site = device.site(s);
    g.rows
        .iter()
        .enumerate()
        .all(|(dy, cells)| device.site_at(site.x, site.y + dy as u32).is_some_and(|t| usage.fits(device, t, cells.iter().copied())))
}

fn occupy(device: &DeviceGrid, usage: &mut SiteUsage, g: &RigidGroup, s: SiteId, add: bool) {
    let site = device.site(s);
    for (dy, cells) in g.rows.iter().enumerate() {
        let t = device.site_at(site.x, site.y + dy as u32).expect("fitted");
        if add {
            usage.add(t, cells.iter().copied());
        } else {
            usage.remove(t, cells.iter().copied());
        }
    }
}

/// Snaps each group onto legal consecutive sites, minimizing total
/// Manhattan displacement of the anchors: a greedy matching over
/// (group, position) pairs by increasing displacement, then relocation
/// passes that move single groups to strictly better free positions.
pub fn legalize_macros(netlist: &Netlist, device: &DeviceGrid, groups: &[RigidGroup]) -> Result<MacroLegalization> {
    let cands: Vec<Vec<SiteId>> = groups
        .iter()
        .map(|g| {
            let want = g.macro_id.map(|m| netlist.macros[m].column);
            candidates(device, g, |ci| want.map_or(true, |k| device.columns[ci].kind.satisfies(k)))
        })
        .collect();
    let mut pairs: Vec<(f64, usize, SiteId)> = Vec::new();
    for (gi, cs) in cands.iter().enumerate() {
        pairs.extend(cs.iter().map(|&s| (displacement(device, &groups[gi], s), gi, s)));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut usage = SiteUsage::new(device);
    let mut anchor: Vec<Option<SiteId>> = vec![None; groups.len()];
    for &(_, gi, s) in &pairs {
        if anchor[gi].is_none() && rows_fit(device, &usage, &groups[gi], s) {
            occupy(device, &mut usage, &groups[gi], s, true);
            anchor[gi] = Some(s);
        }
    }
    if anchor.iter().any(Option::is_none) {
        // fragmentation: retry tallest first, each at its nearest free
        // position that sits flush on the column bottom or an occupied site
        usage = SiteUsage::new(device);
        anchor = vec![None; groups.len()];
        let mut order: Vec<usize> = (0..groups.len()).collect();
        order.sort_by(|&a, &b| groups[b].height().cmp(&groups[a].height()).then(a.cmp(&b)));
        for gi in order {
            let g = &groups[gi];
            let flush = |s: SiteId| {
                let site = device.site(s);
                site.y == 0 || device.site_at(site.x, site.y - 1).map_or(true, |b| !usage.fits(device, b, g.rows[0].iter().copied()))
            };
            let nearest = |only_flush: bool| {
                cands[gi]
                    .iter()
                    .filter(|&&s| rows_fit(device, &usage, g, s) && (!only_flush || flush(s)))
                    .min_by(|&&a, &&b| displacement(device, g, a).total_cmp(&displacement(device, g, b)).then(a.cmp(&b)))
            };
            let best = nearest(true).or_else(|| nearest(false));
            if let Some(&s) = best {
                occupy(device, &mut usage, g, s, true);
                anchor[gi] = Some(s);
            }
        }
    }
    if let Some(gi) = anchor.iter().position(Option::is_none) {
        let g = &groups[gi];
        return Err(match g.macro_id {
            Some(m) => Error::MacroLegalization { macro_id: netlist.macros[m].id, kind: netlist.macros[m].kind.to_string() },
            None => Error::CapacityExceeded {
                resource: netlist.instances[g.insts[0]].kind.to_string(),
                demand: groups.iter().filter(|o| o.macro_id.is_none() && o.rows == g.rows).count() as f64,
                capacity: device.capacity_for(netlist.instances[g.insts[0]].kind) as f64,
            },
        });
    }
    let mut anchor: Vec<SiteId> = anchor.into_iter().map(|a| a.expect("all placed")).collect();
    let mut sorted: Vec<Vec<(f64, SiteId)>> = vec![Vec::new(); groups.len()];
    for &(d, gi, s) in &pairs {
        sorted[gi].push((d, s));
    }

    for _ in 0..8 {
        let mut improved = false;
        for gi in 0..groups.len() {
            let g = &groups[gi];
            let here = displacement(device, g, anchor[gi]);
            occupy(device, &mut usage, g, anchor[gi], false);
            let best = cands[gi]
                .iter()
                .map(|&s| (displacement(device, g, s), s))
                .filter(|&(d, s)| d < here - 1e-9 && rows_fit(device, &usage, g, s))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if let Some((_, s)) = best {
                anchor[gi] = s;
                improved = true;
            }
            occupy(device, &mut usage, g, anchor[gi], true);
        }
        if eject_pass(device, groups, &sorted, &mut anchor, &mut usage) {
            improved = true;
        }
        if !improved {
            break;
        }
    }

    let mut site_of = vec![None; netlist.num_instances()];
    for (g, &a) in groups.iter().zip(&anchor) {
        let base = device.site(a);
        for &i in &g.insts {
            let dy = netlist.instances[i].offset.1 as u32;
            site_of[i] = device.site_at(base.x, base.y + dy);
        }
    }
    let displacement = groups.iter().zip(&anchor).map(|(g, &a)| displacement(device, g, a)).sum();
    Ok(MacroLegalization { site_of, anchors: anchor, displacement, usage })
}

/// Positions tried per group when ejecting a blocker.
const EJECT_TRIES: usize = 30;

/// For each group, tries its better positions that are blocked by exactly
/// one other group: the blocker is evicted to its best free position and
/// the swap is kept if total displacement drops.
fn eject_pass(
    device: &DeviceGrid,
    groups: &[RigidGroup],
    sorted: &[Vec<(f64, SiteId)>],
    anchor: &mut [SiteId],
    usage: &mut SiteUsage,
) -> bool {
    let span = |g: usize, s: SiteId| {
        let site = device.site(s);
        (site.x, site.y, site.y + groups[g].height() as u32)
    };
    let mut improved = false;
    for a in 0..groups.len() {
        let here_a = displacement(device, &groups[a], anchor[a]);
        for &(d, c) in sorted[a].iter().take_while(|p| p.0 < here_a - 1e-9).take(EJECT_TRIES) {
            let (cx, cy0, cy1) = span(a, c);
            let blockers: Vec<usize> = (0..groups.len())
                .filter(|&b| {
                    let (bx, by0, by1) = span(b, anchor[b]);
                    b != a && bx == cx && by0 < cy1 && cy0 < by1
                })
                .collect();
            let [b] = blockers[..] else { continue };
            let here_b = displacement(device, &groups[b], anchor[b]);
            occupy(device, usage, &groups[a], anchor[a], false);
            occupy(device, usage, &groups[b], anchor[b], false);
            if rows_fit(device, usage, &groups[a], c) {
                occupy(device, usage, &groups[a], c, true);
                let new_b = sorted[b].iter().find(|&&(db, s)| d + db < here_a + here_b - 1e-9 && rows_fit(device, usage, &groups[b], s));
                if let Some(&(_, s)) = new_b {
                    occupy(device, usage, &groups[b], s, true);
                    anchor[a] = c;
                    anchor[b] = s;
                    improved = true;
                    break;
                }
                occupy(device, usage, &groups[a], c, false);
            }
            occupy(device, usage, &groups[a], anchor[a], true);
            occupy(device, usage, &groups[b], anchor[b], true);
        }
    }
    improved
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::model::{Column, Instance, Macro, MacroKind, SiteKind, SlotCaps};

    fn dsp_col(x: u32) -> Column {
        Column { x, kind: SiteKind::Dsp, slots: SlotCaps { dsp: 1, ..Default::default() } }
    }

    /// Netlist of DSP cascades with the given heights.
    fn cascades(heights: &[u32]) -> Netlist {
        let mut insts = Vec::new();
        let mut macros = Vec::new();
        for (m, &h) in heights.iter().enumerate() {
            let mut members = Vec::new();
            for dy in 0..h {
                let i = insts.len();
                insts.push(Instance {
                    id: i as u32,
                    name: format!("d{i}"),
                    kind: CellKind::Dsp,
                    macro_id: Some(m),
                    offset: (0, dy as i32),
                    fixed: false,
                    timing_start: false,
                    timing_end: false,
                    loc: None,
                });
                members.push(i);
            }
            macros.push(Macro { id: m as u32, kind: MacroKind::DspCascade, column: SiteKind::Dsp, members, height: h });
        }
        Netlist::new(insts, vec![], macros, 10.0).unwrap()
    }

    fn at(nl: &Netlist, anchors: &[(f64, f64)]) -> Vec<(f64, f64)> {
        let mut xy = vec![(0.0, 0.0); nl.num_instances()];
        for (m, mac) in nl.macros.iter().enumerate() {
            for &i in &mac.members {
                xy[i] = (anchors[m].0, anchors[m].1 + nl.instances[i].offset.1 as f64);
            }
        }
        xy
    }

    #[test]
    fn single_macro_snaps_to_nearest_column() {
        let nl = cascades(&[2]);
        let dev = DeviceGrid::new(6, 6, vec![dsp_col(3)], vec![]).unwrap();
        let xy = at(&nl, &[(2.9, 1.5)]);
        let leg = legalize_macros(&nl, &dev, &rigid_groups(&nl, &xy)).unwrap();
        assert_eq!(dev.site(leg.anchors[0]).x, 3);
        assert_eq!(dev.site(leg.anchors[0]).y, 1);
    }

    #[test]
    fn two_macros_share_a_short_column() {
        let nl = cascades(&[2, 2]);
        let dev = DeviceGrid::new(1, 4, vec![dsp_col(0)], vec![]).unwrap();
        let xy = at(&nl, &[(0.5, 1.0), (0.5, 1.2)]);
        let leg = legalize_macros(&nl, &dev, &rigid_groups(&nl, &xy)).unwrap();
        let mut ys: Vec<u32> = leg.anchors.iter().map(|&a| dev.site(a).y).collect();
        ys.sort();
        assert_eq!(ys, vec![0, 2]);
    }

    #[test]
    fn too_many_macros_fail() {
        let nl = cascades(&[3, 2]);
        let dev = DeviceGrid::new(1, 4, vec![dsp_col(0)], vec![]).unwrap();
        let xy = at(&nl, &[(0.5, 0.0), (0.5, 2.0)]);
        let err = legalize_macros(&nl, &dev, &rigid_groups(&nl, &xy)).unwrap_err();
        assert!(matches!(err, Error::MacroLegalization { .. }));
    }

    /// Minimum total displacement over all non-overlapping placements.
    fn exhaustive(dev: &DeviceGrid, groups: &[RigidGroup]) -> f64 {
        fn go(dev: &DeviceGrid, groups: &[RigidGroup], k: usize, used: &mut Vec<(u32, u32, u32)>, acc: f64, best: &mut f64) {
            if acc >= *best {
                return;
            }
            if k == groups.len() {
                *best = acc;
                return;
            }
            let h = groups[k].height() as u32;
            for col in &dev.columns {
                for y in 0..=dev.height - h {
                    if used.iter().any(|&(x, y0, y1)| x == col.x && y < y1 && y0 < y + h) {
                        continue;
                    }
                    let d = (col.x as f64 + 0.5 - groups[k].target.0).abs() + (y as f64 + 0.5 - groups[k].target.1).abs();
                    used.push((col.x, y, y + h));
                    go(dev, groups, k + 1, used, acc + d, best);
                    used.pop();
                }
            }
        }
        let mut best = f64::INFINITY;
        go(dev, groups, 0, &mut Vec::new(), 0.0, &mut best);
        best
    }

    #[test]
    fn near_exhaustive_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let dev = DeviceGrid::new(9, 6, vec![dsp_col(1), dsp_col(4), dsp_col(7)], vec![]).unwrap();
        for _ in 0..200 {
            let heights: Vec<u32> = (0..5).map(|_| rng.gen_range(1..=3)).collect();
            let nl = cascades(&heights);
            let anchors: Vec<(f64, f64)> = heights.iter().map(|&h| (rng.gen_range(0.0..9.0), rng.gen_range(0.0..(6 - h) as f64))).collect();
            let groups = rigid_groups(&nl, &at(&nl, &anchors));
            let opt = exhaustive(&dev, &groups);
            if opt.is_infinite() {
                assert!(legalize_macros(&nl, &dev, &groups).is_err());
                continue;
            }
            let leg = legalize_macros(&nl, &dev, &groups).unwrap();
            assert!(leg.displacement <= 1.5 * opt + 1e-9, "{} vs {}", leg.displacement, opt);
            assert!(leg.site_of.iter().all(Option::is_some));
        }
    }
}

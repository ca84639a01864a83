//! Candidate locations for the instances of one timing path.

use std::collections::HashMap;

use crate::model::{DeviceGrid, Netlist, Occupancy, PlacementState, SiteId};

use super::DpSchedule;

/// One move: instance, target site, target slot.
pub type Move = (usize, SiteId, usize);

/// A complete location for one layer: a slot for every instance of it.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub moves: Vec<Move>,
}

/// Consecutive path vertices that move together. A plain instance forms a
/// layer on its own; path vertices of one macro share a layer that carries
/// every member of the macro.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// Path vertices in path order.
    pub path: Vec<usize>,
    /// All instances that move with the layer.
    pub insts: Vec<usize>,
    /// The current location comes first.
    pub cands: Vec<Candidate>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CandidateMap {
    pub layers: Vec<Layer>,
}

impl CandidateMap {
    /// Moves selected by one candidate index per layer.
    pub fn moves(&self, choice: &[usize]) -> Vec<Move> {
        self.layers.iter().zip(choice).flat_map(|(l, &c)| l.cands[c].moves.iter().copied()).collect()
    }
}

/// Splits a path into layers. Macros that reappear further down the path
/// are frozen at every occurrence.
fn layers_of(netlist: &Netlist, path: &[usize]) -> (Vec<Layer>, Vec<bool>) {
    let mut layers: Vec<Layer> = Vec::new();
    let mut macro_of_layer: Vec<Option<usize>> = Vec::new();
    for &v in path {
        let m = netlist.instances[v].macro_id;
        if m.is_some() && macro_of_layer.last() == Some(&m) {
            layers.last_mut().expect("nonempty").path.push(v);
            continue;
        }
        let insts = match m {
            Some(m) => netlist.macros[m].members.clone(),
            None => vec![v],
        };
        layers.push(Layer { path: vec![v], insts, cands: Vec::new() });
        macro_of_layer.push(m);
    }
    let frozen = macro_of_layer.iter().map(|m| m.is_some() && macro_of_layer.iter().filter(|n| *n == m).count() > 1).collect();
    (layers, frozen)
}

fn site_xy(device: &DeviceGrid, s: SiteId) -> (f64, f64) {
    let site = device.site(s);
    (site.x as f64, site.y as f64)
}

/// Integer offsets inside the square of half-width `d`.
fn square(d: f64) -> Vec<(i64, i64)> {
    let r = d.floor() as i64;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            out.push((dx, dy));
        }
    }
    out
}

/// Integer offsets within `radius` whose direction lies within 45 degrees
/// of `axis`.
fn sector(radius: f64, axis: (f64, f64)) -> Vec<(i64, i64)> {
    let norm = axis.0.hypot(axis.1);
    if norm < 1e-9 {
        return Vec::new();
    }
    let (ax, ay) = (axis.0 / norm, axis.1 / norm);
    let r = radius.floor() as i64;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            let len = (dx as f64).hypot(dy as f64);
            if len == 0.0 || len > radius {
                continue;
            }
            if (dx as f64 * ax + dy as f64 * ay) / len >= std::f64::consts::FRAC_1_SQRT_2 - 1e-12 {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Sector axis of layer `l`, if it gets one.
fn sector_axis(points: &[(f64, f64)], l: usize) -> Option<(f64, f64)> {
    let n = points.len();
    if n < 2 {
        return None;
    }
    let p = points[l];
    let to = |q: (f64, f64)| (q.0 - p.0, q.1 - p.1);
    if l == 0 {
        return Some(to(points[1]));
    }
    if l == n - 1 {
        return Some(to(points[n - 2]));
    }
    let (a, b) = (to(points[l - 1]), to(points[l + 1]));
    let (na, nb) = (a.0.hypot(a.1), b.0.hypot(b.1));
    if na < 1e-9 || nb < 1e-9 || a.0 * b.0 + a.1 * b.1 <= 0.0 {
        return None;
    }
    Some((a.0 / na + b.0 / nb, a.1 / na + b.1 / nb))
}

struct Claims<'a> {
    device: &'a DeviceGrid,
    netlist: &'a Netlist,
    placement: &'a PlacementState,
    occ: &'a Occupancy,
    owner: HashMap<(SiteId, usize), usize>,
}

impl Claims<'_> {
    fn usable(&self, layer: usize, insts: &[usize], s: SiteId, k: usize, taken: &[Move]) -> bool {
        if taken.iter().any(|&(_, ts, tk)| ts == s && tk == k) {
            return false;
        }
        if self.owner.get(&(s, k)).is_some_and(|&o| o != layer) {
            return false;
        }
        match self.occ.get(s, k) {
            None => true,
            Some(i) => insts.contains(&i),
        }
    }

    /// Slots for every instance of the layer with its anchor moved to
    /// `anchor`, preferring each instance's current slot index.
    fn materialize(&self, layer: usize, l: &Layer, anchor: (i64, i64)) -> Option<Candidate> {
        let mut moves: Vec<Move> = Vec::with_capacity(l.insts.len());
        for &i in &l.insts {
            let inst = &self.netlist.instances[i];
            let (x, y) = (anchor.0, anchor.1 + inst.offset.1 as i64);
            if x < 0 || y < 0 {
                return None;
            }
            let s = self.device.site_at(x as u32, y as u32)?;
            if let Some(m) = inst.macro_id {
                if !self.device.site(s).kind.satisfies(self.netlist.macros[m].column) {
                    return None;
                }
            }
            let cur = self.placement.binding[i].expect("bound").slot as usize;
            let ok = |k: usize| self.device.slot_accepts(s, k, inst.kind) && self.usable(layer, &l.insts, s, k, &moves);
            let k = if ok(cur) { Some(cur) } else { self.device.compatible_slots(s, inst.kind).find(|&k| ok(k)) };
            moves.push((i, s, k?));
        }
        Some(Candidate { moves })
    }
}

/// Candidate locations for every layer of `path`. Layers with an instance
/// in `frozen`, or with a fixed instance, keep their current location only.
/// A slot reachable from several layers goes to the layer with the fewest
/// feasible candidates.
pub fn find_candidates(
    netlist: &Netlist,
    device: &DeviceGrid,
    placement: &PlacementState,
    occ: &Occupancy,
    path: &[usize],
    frozen: &[bool],
    sched: &DpSchedule,
    r_nbr: f64,
) -> CandidateMap {
    let (mut layers, repeat) = layers_of(netlist, path);
    let anchor_of = |l: &Layer| {
        let v = l.path[0];
        let (x, y) = site_xy(device, placement.binding[v].expect("bound").site);
        (x as i64, y as i64 - netlist.instances[v].offset.1 as i64)
    };
    let points: Vec<(f64, f64)> = layers.iter().map(|l| site_xy(device, placement.binding[l.path[0]].expect("bound").site)).collect();

    // raw anchor offsets per layer, current first
    let d = sched.r_square * r_nbr.clamp(0.1, 1.0);
    let raw: Vec<Vec<(i64, i64)>> = layers
        .iter()
        .enumerate()
        .map(|(li, l)| {
            let stuck = repeat[li] || l.insts.iter().any(|&i| frozen[i] || netlist.instances[i].fixed);
            if stuck {
                return vec![(0, 0)];
            }
            let mut offs = square(d);
            if sched.sectors {
                if let Some(axis) = sector_axis(&points, li) {
                    offs.extend(sector(sched.r_sector, axis));
                }
            }
            offs.sort_by_key(|&(dx, dy)| (dx * dx + dy * dy, dy, dx));
            offs.dedup();
            offs
        })
        .collect();

    let mut claims = Claims { device, netlist, placement, occ, owner: HashMap::new() };
    for (li, l) in layers.iter().enumerate() {
        for &i in &l.insts {
            let b = placement.binding[i].expect("bound");
            claims.owner.insert((b.site, b.slot as usize), li);
        }
    }
    let supply: Vec<usize> = layers
        .iter()
        .enumerate()
        .map(|(li, l)| {
            let (ax, ay) = anchor_of(l);
            raw[li][1..].iter().filter(|&&(dx, dy)| claims.materialize(li, l, (ax + dx, ay + dy)).is_some()).count()
        })
        .collect();
    let mut order: Vec<usize> = (0..layers.len()).collect();
    order.sort_by_key(|&li| (supply[li], li));
    for li in order {
        let current = Candidate {
            moves: layers[li]
                .insts
                .iter()
                .map(|&i| {
                    let b = placement.binding[i].expect("bound");
                    (i, b.site, b.slot as usize)
                })
                .collect(),
        };
        let (ax, ay) = anchor_of(&layers[li]);
        let mut cands = vec![current];
        for &(dx, dy) in &raw[li][1..] {
            if let Some(c) = claims.materialize(li, &layers[li], (ax + dx, ay + dy)) {
                for &(_, s, k) in &c.moves {
                    claims.owner.insert((s, k), li);
                }
                cands.push(c);
            }
        }
        layers[li].cands = cands;
    }
    CandidateMap { layers }
}

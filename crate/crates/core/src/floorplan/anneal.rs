//! Simulated-annealing assignment of partitions to coarse device bins.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CellKind, DeviceGrid, Netlist, PlacementState, Rect};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealConfig {
    /// Starting temperature; 0 derives it from the mean cost change of
    /// random moves.
    pub initial_temp: f64,
    pub cooling: f64,
    /// Moves attempted per temperature step, per partition.
    pub moves_per_partition: usize,
    pub max_stages: usize,
    /// Cost per instance of capacity overflow; 0 uses twice the grid
    /// semiperimeter.
    pub overflow_penalty: f64,
    /// Number of bins to carve per partition.
    pub bins_per_partition: f64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        AnnealConfig {
            initial_temp: 0.0,
            cooling: 0.97,
            moves_per_partition: 30,
            max_stages: 200,
            overflow_penalty: 0.0,
            bins_per_partition: 1.0,
        }
    }
}

/// A coarse rectangle inside one placement region with slot capacities per
/// cell kind.
#[derive(Clone, Debug, PartialEq)]
pub struct FloorplanBin {
    pub rect: Rect,
    pub region: usize,
    pub capacity: [u64; 8],
}

impl FloorplanBin {
    pub fn center(&self) -> (f64, f64) {
        (self.rect.center_x(), self.rect.center_y())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Floorplan {
    pub bins: Vec<FloorplanBin>,
    /// Bin index of each partition.
    pub assignment: Vec<usize>,
    pub cost: f64,
    pub overflow: u64,
}

/// Tiles every placement region into roughly `target` bins in total.
pub fn build_bins(device: &DeviceGrid, target: usize) -> Vec<FloorplanBin> {
    let area: u64 = device.regions().iter().map(|r| (r.x1 - r.x0) as u64 * (r.y1 - r.y0) as u64).sum();
    let side = ((area as f64 / target.max(1) as f64).sqrt()).max(1.0);
    let mut bins = Vec::new();
    for (ri, r) in device.regions().iter().enumerate() {
        let (w, h) = (r.x1 - r.x0, r.y1 - r.y0);
        let nx = ((w as f64 / side).round() as u32).clamp(1, w);
        let ny = ((h as f64 / side).round() as u32).clamp(1, h);
        for iy in 0..ny {
            for ix in 0..nx {
                let rect =
                    Rect { x0: r.x0 + w * ix / nx, x1: r.x0 + w * (ix + 1) / nx, y0: r.y0 + h * iy / ny, y1: r.y0 + h * (iy + 1) / ny };
                let mut capacity = [0u64; 8];
                for (ci, col) in device.columns.iter().enumerate() {
                    if col.x < rect.x0 || col.x >= rect.x1 {
                        continue;
                    }
                    let rows = (rect.y0..rect.y1).filter(|&y| device.site_at(col.x, y).is_some()).count() as u64;
                    for kind in CellKind::ALL {
                        capacity[kind.index()] += rows * device.slots_for_cell_in_column(ci, kind) as u64;
                    }
                }
                if capacity.iter().any(|&c| c > 0) {
                    bins.push(FloorplanBin { rect, region: ri, capacity });
                }
            }
        }
    }
    bins
}

/// Nets reduced to the partitions they touch plus the bounding box of their
/// fixed pins.
struct CoarseNet {
    weight: f64,
    parts: Vec<usize>,
    fixed: Option<(f64, f64, f64, f64)>,
}

struct Problem {
    nets: Vec<CoarseNet>,
    part_nets: Vec<Vec<usize>>,
    demand: Vec<[u64; 8]>,
    penalty: f64,
}

impl Problem {
    fn net_cost(&self, ni: usize, bins: &[FloorplanBin], assign: &[usize]) -> f64 {
        let net = &self.nets[ni];
        let (mut x0, mut x1, mut y0, mut y1) = net.fixed.unwrap_or((f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY));
        for &p in &net.parts {
            let (x, y) = bins[assign[p]].center();
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        net.weight * ((x1 - x0) + (y1 - y0))
    }

    fn bin_overflow(&self, load: &[u64; 8], bin: &FloorplanBin) -> u64 {
        (0..8).map(|k| load[k].saturating_sub(bin.capacity[k])).sum()
    }

    fn wirelength(&self, bins: &[FloorplanBin], assign: &[usize]) -> f64 {
        (0..self.nets.len()).map(|ni| self.net_cost(ni, bins, assign)).sum()
    }
}

/// Assigns partitions to bins minimizing the weighted bin-centre HPWL of
/// nets crossing partitions plus a capacity-overflow penalty. The returned
/// state is the best one visited, preferring states without overflow.
pub fn sa_floorplan(
    netlist: &Netlist,
    part: &[Option<usize>],
    k: usize,
    bins: Vec<FloorplanBin>,
    cfg: &AnnealConfig,
    grid_semiperimeter: f64,
    rng: &mut impl Rng,
) -> Result<Floorplan> {
    let mut demand = vec![[0u64; 8]; k];
    for (i, p) in part.iter().enumerate() {
        if let Some(p) = *p {
            demand[p][netlist.instances[i].kind.index()] += 1;
        }
    }
    for kind in CellKind::ALL {
        let d: u64 = demand.iter().map(|x| x[kind.index()]).sum();
        let c: u64 = bins.iter().map(|b| b.capacity[kind.index()]).sum();
        if d > c {
            return Err(Error::CapacityExceeded { resource: kind.to_string(), demand: d as f64, capacity: c as f64 });
        }
    }
    if bins.is_empty() {
        return Err(Error::InfeasibleSpec("device has no placement bins".into()));
    }

    let mut nets = Vec::new();
    for net in &netlist.nets {
        let mut parts: Vec<usize> = net.pins.iter().filter_map(|p| part[p.inst]).collect();
        parts.sort_unstable();
        parts.dedup();
        let mut fixed: Option<(f64, f64, f64, f64)> = None;
        for p in &net.pins {
            if part[p.inst].is_none() {
                let (x, y) = netlist.instances[p.inst].loc.unwrap_or((0.0, 0.0));
                let b = fixed.get_or_insert((x, x, y, y));
                *b = (b.0.min(x), b.1.max(x), b.2.min(y), b.3.max(y));
            }
        }
        if parts.len() + fixed.is_some() as usize >= 2 && !parts.is_empty() {
            nets.push(CoarseNet { weight: net.weight, parts, fixed });
        }
    }
    // merge nets with the same footprint
    nets.sort_by(|a, b| {
        a.parts.cmp(&b.parts).then_with(|| {
            let key = |n: &CoarseNet| n.fixed.map(|f| [f.0, f.1, f.2, f.3]).unwrap_or([f64::NAN; 4]);
            key(a).iter().zip(key(b).iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let mut merged: Vec<CoarseNet> = Vec::new();
    for n in nets {
        match merged.last_mut() {
            Some(m) if m.parts == n.parts && m.fixed == n.fixed => m.weight += n.weight,
            _ => merged.push(n),
        }
    }
    let mut part_nets = vec![Vec::new(); k];
    for (ni, n) in merged.iter().enumerate() {
        for &p in &n.parts {
            part_nets[p].push(ni);
        }
    }
    let penalty = if cfg.overflow_penalty > 0.0 { cfg.overflow_penalty } else { 2.0 * grid_semiperimeter };
    let prob = Problem { nets: merged, part_nets, demand, penalty };
    Ok(anneal(&prob, bins, cfg, rng))
}

struct State {
    assign: Vec<usize>,
    load: Vec<[u64; 8]>,
    wl: f64,
    overflow: u64,
}

impl State {
    fn cost(&self, penalty: f64) -> f64 {
        self.wl + penalty * self.overflow as f64
    }
}

fn anneal(prob: &Problem, bins: Vec<FloorplanBin>, cfg: &AnnealConfig, rng: &mut impl Rng) -> Floorplan {
    let k = prob.demand.len();
    let nb = bins.len();
    // greedy start: largest partitions first into the bin with the least overflow
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by_key(|&p| std::cmp::Reverse(prob.demand[p].iter().sum::<u64>()));
    let mut load = vec![[0u64; 8]; nb];
    let mut assign = vec![0usize; k];
    for p in order {
        let best = (0..nb)
            .min_by_key(|&b| {
                let mut l = load[b];
                for r in 0..8 {
                    l[r] += prob.demand[p][r];
                }
                let used: u64 = load[b].iter().sum();
                (prob.bin_overflow(&l, &bins[b]), used, b)
            })
            .expect("bins");
        for r in 0..8 {
            load[best][r] += prob.demand[p][r];
        }
        assign[p] = best;
    }
    let overflow = (0..nb).map(|b| prob.bin_overflow(&load[b], &bins[b])).sum();
    let wl = prob.wirelength(&bins, &assign);
    let mut st = State { assign, load, wl, overflow };
    let mut best = (st.overflow > 0, st.cost(prob.penalty), st.assign.clone(), st.wl, st.overflow);

    if k > 0 && (nb > 1 || k > 1) {
        let mut temp = cfg.initial_temp;
        if !(temp > 0.0) {
            let mut sum = 0.0;
            let mut cnt = 0;
            for _ in 0..100 {
                let d = try_move(prob, &bins, &mut st, rng, f64::INFINITY, true);
                if d != 0.0 {
                    sum += d.abs();
                    cnt += 1;
                }
            }
            temp = if cnt > 0 { sum / cnt as f64 } else { 1.0 };
        }
        let stop = temp * 1e-3;
        let moves = cfg.moves_per_partition.max(1) * k;
        for _ in 0..cfg.max_stages {
            if temp < stop {
                break;
            }
            for _ in 0..moves {
                try_move(prob, &bins, &mut st, rng, temp, false);
                let key = (st.overflow > 0, st.cost(prob.penalty));
                if key < (best.0, best.1) {
                    best = (key.0, key.1, st.assign.clone(), st.wl, st.overflow);
                }
            }
            temp *= cfg.cooling;
        }
    }
    let (_, cost, assignment, _, overflow) = best;
    Floorplan { bins, assignment, cost, overflow }
}

/// Proposes a relocate or swap move and applies it under the Metropolis
/// rule. With `probe` set the move is evaluated and always reverted.
/// Returns the cost change of the proposal.
fn try_move(prob: &Problem, bins: &[FloorplanBin], st: &mut State, rng: &mut impl Rng, temp: f64, probe: bool) -> f64 {
    let k = st.assign.len();
    let nb = bins.len();
    let a = rng.gen_range(0..k);
    let (moved, new_bins): (Vec<usize>, Vec<usize>) = if k > 1 && rng.gen_bool(0.5) {
        let mut b = rng.gen_range(0..k - 1);
        if b >= a {
            b += 1;
        }
        if st.assign[a] == st.assign[b] {
            return 0.0;
        }
        (vec![a, b], vec![st.assign[b], st.assign[a]])
    } else {
        if nb < 2 {
            return 0.0;
        }
        let mut t = rng.gen_range(0..nb - 1);
        if t >= st.assign[a] {
            t += 1;
        }
        (vec![a], vec![t])
    };

    let mut nets: Vec<usize> = moved.iter().flat_map(|&p| prob.part_nets[p].iter().copied()).collect();
    nets.sort_unstable();
    nets.dedup();
    let mut touched: Vec<usize> = moved.iter().map(|&p| st.assign[p]).chain(new_bins.iter().copied()).collect();
    touched.sort_unstable();
    touched.dedup();

    let wl_before: f64 = nets.iter().map(|&n| prob.net_cost(n, bins, &st.assign)).sum();
    let of_before: u64 = touched.iter().map(|&b| prob.bin_overflow(&st.load[b], &bins[b])).sum();
    let old_bins: Vec<usize> = moved.iter().map(|&p| st.assign[p]).collect();
    let shift = |st: &mut State, from: &[usize], to: &[usize]| {
        for (i, &p) in moved.iter().enumerate() {
            for r in 0..8 {
                st.load[from[i]][r] -= prob.demand[p][r];
                st.load[to[i]][r] += prob.demand[p][r];
            }
            st.assign[p] = to[i];
        }
    };
    shift(st, &old_bins, &new_bins);
    let wl_after: f64 = nets.iter().map(|&n| prob.net_cost(n, bins, &st.assign)).sum();
    let of_after: u64 = touched.iter().map(|&b| prob.bin_overflow(&st.load[b], &bins[b])).sum();
    let d_wl = wl_after - wl_before;
    let d_of = of_after as i64 - of_before as i64;
    let delta = d_wl + prob.penalty * d_of as f64;
    let accept = !probe && (delta <= 0.0 || rng.gen::<f64>() < (-delta / temp).exp());
    if accept {
        st.wl += d_wl;
        st.overflow = (st.overflow as i64 + d_of) as u64;
    } else {
        shift(st, &new_bins, &old_bins);
    }
    delta
}

/// Initial coordinates: each movable instance at a random point of its
/// partition's bin, macro members stacked on their anchor, fixed instances
/// at their locations.
pub fn seed_placement(
    netlist: &Netlist,
    device: &DeviceGrid,
    part: &[Option<usize>],
    plan: &Floorplan,
    rng: &mut impl Rng,
) -> PlacementState {
    let n = netlist.num_instances();
    let mut ps = PlacementState::new(n);
    let mut anchors = vec![None; netlist.macros.len()];
    for i in 0..n {
        let inst = &netlist.instances[i];
        let Some(p) = part[i] else { continue };
        let r = plan.bins[plan.assignment[p]].rect;
        let span = inst.macro_id.map_or(1, |m| netlist.macros[m].height).min(r.y1 - r.y0).max(1);
        let draw =
            |rng: &mut dyn rand::RngCore| (rng.gen_range(r.x0 as f64..r.x1 as f64), rng.gen_range(r.y0 as f64..(r.y1 - span + 1) as f64));
        let (x, y) = match inst.macro_id {
            Some(m) => *anchors[m].get_or_insert_with(|| draw(rng)),
            None => draw(rng),
        };
        ps.xy[i] = (x, (y + inst.offset.1 as f64).min(device.height as f64));
    }
    ps.apply_fixed(netlist);
    ps
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::floorplan::paths::tests::dag_netlist;

    fn bin(x0: u32, y0: u32, cap: u64) -> FloorplanBin {
        FloorplanBin { rect: Rect { x0, y0, x1: x0 + 2, y1: y0 + 2 }, region: 0, capacity: [cap; 8] }
    }

    #[test]
    fn single_partition_single_bin() {
        let nl = dag_netlist(2, &[(0, 1)], &[]);
        let plan =
            sa_floorplan(&nl, &[Some(0); 2], 1, vec![bin(0, 0, 4)], &AnnealConfig::default(), 10.0, &mut ChaCha8Rng::seed_from_u64(1))
                .unwrap();
        assert_eq!(plan.assignment, vec![0]);
    }

    #[test]
    fn demand_over_capacity_fails() {
        let nl = dag_netlist(3, &[(0, 1)], &[]);
        let err =
            sa_floorplan(&nl, &[Some(0); 3], 1, vec![bin(0, 0, 2)], &AnnealConfig::default(), 10.0, &mut ChaCha8Rng::seed_from_u64(1))
                .unwrap_err();
        assert!(matches!(err, Error::CapacityExceeded { demand, capacity, .. } if demand == 3.0 && capacity == 2.0));
    }

    #[test]
    fn connected_partitions_sit_adjacent() {
        // partitions 0 and 1 share many nets, 2 and 3 too
        let edges: Vec<(usize, usize)> = (0..8).flat_map(|_| [(0, 1), (2, 3)]).chain([(1, 2)]).collect();
        let nl = dag_netlist(4, &edges, &[]);
        let part = vec![Some(0), Some(1), Some(2), Some(3)];
        let bins = vec![bin(0, 0, 1), bin(20, 0, 1), bin(0, 20, 1), bin(20, 20, 1)];
        let plan = sa_floorplan(&nl, &part, 4, bins.clone(), &AnnealConfig::default(), 40.0, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let d = |a: usize, b: usize| {
            let (p, q) = (bins[plan.assignment[a]].center(), bins[plan.assignment[b]].center());
            (p.0 - q.0).abs() + (p.1 - q.1).abs()
        };
        assert_eq!(d(0, 1), 20.0);
        assert_eq!(d(2, 3), 20.0);
        assert_eq!(plan.overflow, 0);
    }

    /// Best cost over every assignment of `k` partitions to the bins, ranking
    /// overflow-free assignments first.
    fn exhaustive(nl: &Netlist, part: &[Option<usize>], k: usize, bins: &[FloorplanBin], penalty: f64) -> f64 {
        let nb = bins.len();
        let mut best = (true, f64::INFINITY);
        for code in 0..nb.pow(k as u32) {
            let assign: Vec<usize> = (0..k).map(|p| code / nb.pow(p as u32) % nb).collect();
            let mut load = vec![[0u64; 8]; nb];
            for (i, p) in part.iter().enumerate() {
                load[assign[p.unwrap()]][nl.instances[i].kind.index()] += 1;
            }
            let of: u64 = (0..nb).map(|b| (0..8).map(|r| load[b][r].saturating_sub(bins[b].capacity[r])).sum::<u64>()).sum();
            let mut wl = 0.0;
            for net in &nl.nets {
                let pts: Vec<(f64, f64)> = net.pins.iter().map(|p| bins[assign[part[p.inst].unwrap()]].center()).collect();
                let xs = pts.iter().map(|p| p.0);
                let ys = pts.iter().map(|p| p.1);
                wl += net.weight
                    * (xs.clone().fold(f64::NEG_INFINITY, f64::max) - xs.fold(f64::INFINITY, f64::min)
                        + ys.clone().fold(f64::NEG_INFINITY, f64::max)
                        - ys.fold(f64::INFINITY, f64::min));
            }
            let key = (of > 0, wl + penalty * of as f64);
            if key < best {
                best = key;
            }
        }
        best.1
    }

    #[test]
    fn matches_exhaustive_three_into_four() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let n = 6;
            let edges: Vec<(usize, usize)> = (0..rng.gen_range(3..10))
                .map(|_| {
                    let a = rng.gen_range(0..n - 1);
                    (a, rng.gen_range(a + 1..n))
                })
                .collect();
            let nl = dag_netlist(n, &edges, &[]);
            let part: Vec<Option<usize>> = (0..n).map(|i| Some(i % 3)).collect();
            let bins: Vec<FloorplanBin> = (0..4).map(|_| bin(rng.gen_range(0..30), rng.gen_range(0..30), rng.gen_range(2..5))).collect();
            let cfg = AnnealConfig::default();
            let plan = sa_floorplan(&nl, &part, 3, bins.clone(), &cfg, 60.0, &mut rng).unwrap();
            let want = exhaustive(&nl, &part, 3, &bins, 120.0);
            assert!((plan.cost - want).abs() < 1e-9, "{} vs {want}", plan.cost);
        }
    }

    #[test]
    fn bins_tile_regions() {
        use crate::model::{Column, SiteKind, SlotCaps};
        let cols = (0..10).map(|x| Column { x, kind: SiteKind::Slicel, slots: SlotCaps::clb() }).collect();
        let dev = DeviceGrid::new(10, 12, cols, vec![Rect { x0: 4, y0: 0, x1: 5, y1: 12 }]).unwrap();
        let bins = build_bins(&dev, 6);
        let area: u32 = bins.iter().map(|b| (b.rect.x1 - b.rect.x0) * (b.rect.y1 - b.rect.y0)).sum();
        assert_eq!(area, 9 * 12);
        let luts: u64 = bins.iter().map(|b| b.capacity[CellKind::Lut.index()]).sum();
        assert_eq!(luts as usize, dev.capacity_for(CellKind::Lut));
    }
}

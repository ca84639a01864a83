//! Fixtures and brute-force oracles shared by the integration tests.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tplace::dplace::DpContext;
use tplace::model::{CellKind, Column, DeviceGrid, Instance, Net, Netlist, Pin, PinRole, PlacementState, SiteId, SiteKind, SlotCaps};
use tplace::timing::{DelayModelParams, LogicDelays, TimingEdge, TimingGraph};

pub struct Fixture {
    pub netlist: Netlist,
    pub device: DeviceGrid,
    pub graph: TimingGraph,
    pub delay: DelayModelParams,
    pub placement: PlacementState,
}

impl Fixture {
    pub fn ctx(&self) -> DpContext<'_> {
        DpContext { netlist: &self.netlist, device: &self.device, graph: &self.graph, delay: &self.delay, n_thr: 30.0 }
    }
}

pub fn grid(w: u32, h: u32, caps: SlotCaps) -> DeviceGrid {
    DeviceGrid::new(w, h, (0..w).map(|x| Column { x, kind: SiteKind::Slicel, slots: caps }).collect(), vec![]).unwrap()
}

pub fn inst(i: usize, kind: CellKind) -> Instance {
    Instance {
        id: i as u32,
        name: format!("i{i}"),
        kind,
        macro_id: None,
        offset: (0, 0),
        fixed: false,
        timing_start: kind == CellKind::Ff,
        timing_end: kind == CellKind::Ff,
        loc: None,
    }
}

pub fn net(id: usize, pins: &[usize]) -> Net {
    Net {
        id: id as u32,
        weight: 1.0,
        pins: pins.iter().enumerate().map(|(j, &i)| Pin { inst: i, role: if j == 0 { PinRole::Driver } else { PinRole::Sink } }).collect(),
    }
}

/// Random LUT/FF logic scattered over the free slots of a 12x12 grid with
/// two LUT and two FF slots per site.
pub fn random_fixture(seed: u64, n: usize) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let device = grid(12, 12, SlotCaps { lut: 2, ff: 2, ..Default::default() });
    let kinds: Vec<CellKind> = (0..n).map(|i| if i < 4 || rng.gen_bool(0.25) { CellKind::Ff } else { CellKind::Lut }).collect();
    let insts: Vec<Instance> = kinds.iter().enumerate().map(|(i, &k)| inst(i, k)).collect();
    let mut nets = Vec::new();
    for i in 1..n {
        for _ in 0..rng.gen_range(1..3) {
            let j = rng.gen_range(0..i);
            nets.push(net(nets.len(), &[j, i]));
        }
    }
    let netlist = Netlist::new(insts, nets, vec![], 4.0).unwrap();
    let mut free: Vec<Vec<(u32, u32, usize)>> = vec![Vec::new(), Vec::new()];
    for s in 0..device.sites().len() {
        let id = SiteId(s as u32);
        let site = device.site(id);
        for k in 0..device.num_slots(id) {
            let slot = if device.slot_accepts(id, k, CellKind::Lut) { 0 } else { 1 };
            free[slot].push((site.x, site.y, k));
        }
    }
    free.iter_mut().for_each(|f| f.shuffle(&mut rng));
    let at: Vec<(u32, u32, usize)> = kinds.iter().map(|&k| free[if k == CellKind::Lut { 0 } else { 1 }].pop().unwrap()).collect();
    let graph = TimingGraph::from_netlist(&netlist, &LogicDelays::default()).unwrap();
    let mut placement = PlacementState::new(netlist.num_instances());
    for (i, &(x, y, k)) in at.iter().enumerate() {
        placement.bind(&device, i, device.site_at(x, y).unwrap(), k);
    }
    Fixture { netlist, device, graph, delay: DelayModelParams::default(), placement }
}

/// Random DAG on `n` vertices (edges only from lower to higher index) with
/// random start/end flags, logic delays and net delays.
pub fn random_dag(rng: &mut impl Rng, n: usize) -> (TimingGraph, Vec<f64>) {
    let mut edges = Vec::new();
    for v in 1..n {
        for u in 0..v {
            if rng.gen_bool(0.3) {
                edges.push(TimingEdge { src: u, dst: v, net: edges.len(), cascade: None });
            }
        }
    }
    let t_logic: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    let is_start: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
    let is_end: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
    let t_net: Vec<f64> = edges.iter().map(|_| rng.gen_range(0.0..1.0)).collect();
    let g = TimingGraph::from_parts((0..n).map(|v| format!("v{v}")).collect(), t_logic, is_start, is_end, edges, rng.gen_range(1.0..6.0))
        .unwrap();
    (g, t_net)
}

/// Arrival of every vertex by listing every path that reaches it from a
/// timing start or a vertex without fanin.
pub fn arrival_by_paths(g: &TimingGraph, t_net: &[f64]) -> Vec<f64> {
    fn walk(g: &TimingGraph, t_net: &[f64], v: usize, acc: f64, best: &mut f64) {
        let ins = g.in_edges(v);
        if g.is_start[v] || ins.is_empty() {
            *best = best.max(acc);
            return;
        }
        for &e in ins {
            let u = g.edges[e].src;
            walk(g, t_net, u, acc + g.t_logic[u] + t_net[e], best);
        }
    }
    (0..g.num_vertices())
        .map(|v| {
            if g.is_start[v] {
                return 0.0;
            }
            let mut best = f64::NEG_INFINITY;
            walk(g, t_net, v, 0.0, &mut best);
            best
        })
        .collect()
}

/// Required time of every vertex by listing every path from it to a timing
/// end. Vertices that reach no end have an infinite required time.
pub fn required_by_paths(g: &TimingGraph, t_net: &[f64]) -> Vec<f64> {
    fn walk(g: &TimingGraph, t_net: &[f64], v: usize, acc: f64, best: &mut f64) {
        if g.is_end[v] {
            *best = best.min(g.clock_period - acc);
            return;
        }
        for &e in g.out_edges(v) {
            walk(g, t_net, g.edges[e].dst, acc + g.t_logic[v] + t_net[e], best);
        }
    }
    (0..g.num_vertices())
        .map(|v| {
            let mut best = f64::INFINITY;
            walk(g, t_net, v, 0.0, &mut best);
            best
        })
        .collect()
}

/// Calls `f` on every combination of one index per layer.
pub fn enumerate(sizes: &[usize], mut f: impl FnMut(&[usize])) {
    if sizes.iter().any(|&s| s == 0) {
        return;
    }
    let mut c = vec![0; sizes.len()];
    loop {
        f(&c);
        let mut k = 0;
        loop {
            if k == sizes.len() {
                return;
            }
            c[k] += 1;
            if c[k] < sizes[k] {
                break;
            }
            c[k] = 0;
            k += 1;
        }
    }
}

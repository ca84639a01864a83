//! Timing-driven detailed placement along critical paths.

pub mod assign;
pub mod candidates;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DeviceGrid, Netlist, Occupancy, PlacementState};
use crate::timing::{pin_locs, run_sta, DelayModelParams, PinLoc, StaState, TimingGraph, TimingMetrics};

pub use assign::{layered_shortest_path, shortest_path_assign, Assignment, PathCost};
pub use candidates::{find_candidates, Candidate, CandidateMap, Layer, Move};

/// Whether a path move may raise the critical path delay for a while.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DpMode {
    Tolerant,
    NoDegradation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DpSchedule {
    pub n_dpi: usize,
    /// Paths added per iteration.
    pub d_ncp: usize,
    /// Window scale removed per iteration.
    pub d_r: f64,
    /// Non-improving iterations before reverting to the best placement.
    pub i_thr: usize,
    pub r_square: f64,
    pub r_sector: f64,
    pub sectors: bool,
    pub mode: DpMode,
    /// Paths visited by the closing single-instance pass.
    pub final_paths: usize,
}

impl Default for DpSchedule {
    fn default() -> Self {
        DpSchedule {
            n_dpi: 120,
            d_ncp: 20,
            d_r: 0.01,
            i_thr: 5,
            r_square: 3.0,
            r_sector: 5.0,
            sectors: true,
            mode: DpMode::Tolerant,
            final_paths: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpIteration {
    pub iter: usize,
    pub cpd: f64,
    pub best_cpd: f64,
    pub n_cp: usize,
    pub r_nbr: f64,
    /// Paths whose instances moved.
    pub moved: usize,
    pub reverted: bool,
}

#[derive(Clone, Debug)]
pub struct DpResult {
    pub placement: PlacementState,
    pub trace: Vec<DpIteration>,
    pub initial: TimingMetrics,
    pub metrics: TimingMetrics,
}

/// Inputs shared by every step of detailed placement.
pub struct DpContext<'a> {
    pub netlist: &'a Netlist,
    pub device: &'a DeviceGrid,
    pub graph: &'a TimingGraph,
    pub delay: &'a DelayModelParams,
    pub n_thr: f64,
}

/// Placement, occupancy, pin locations and timing kept in step.
struct Working<'a> {
    ctx: &'a DpContext<'a>,
    placement: PlacementState,
    occ: Occupancy,
    locs: Vec<PinLoc>,
    sta: StaState,
}

impl<'a> Working<'a> {
    fn new(ctx: &'a DpContext<'a>, placement: PlacementState) -> Result<Self> {
        if !placement.is_fully_bound() {
            return Err(Error::IllegalMove("detailed placement needs a fully bound placement".into()));
        }
        let occ = Occupancy::from_placement(ctx.device, &placement)?;
        let locs = pin_locs(ctx.device, &placement);
        let sta = run_sta(ctx.graph, ctx.delay, &locs, ctx.n_thr);
        Ok(Working { ctx, placement, occ, locs, sta })
    }

    fn cpd(&self) -> f64 {
        self.sta.metrics.cpd
    }

    /// Applies moves and returns the moves that undo them.
    fn apply(&mut self, moves: &[Move]) -> Result<Vec<Move>> {
        let dev = self.ctx.device;
        // staying put is not a move; rebinding would also shift fixed pads off their loc
        let moves: Vec<Move> = moves
            .iter()
            .copied()
            .filter(|&(i, s, k)| self.placement.binding[i].is_none_or(|b| (b.site, b.slot as usize) != (s, k)))
            .collect();
        let moves = &moves[..];
        let undo: Vec<Move> = moves
            .iter()
            .map(|&(i, _, _)| {
                let b = self.placement.binding[i].expect("bound");
                (i, b.site, b.slot as usize)
            })
            .collect();
        for &(i, s, k) in &undo {
            if self.occ.get(s, k) == Some(i) {
                self.occ.set(s, k, None);
            }
        }
        for &(i, s, k) in moves {
            if !self.occ.is_free(s, k) {
                return Err(Error::IllegalMove(format!("slot {}/{k} is taken", dev.site_name(s))));
            }
            self.occ.set(s, k, Some(i));
            self.placement.bind(dev, i, s, k);
        }
        self.verify(moves)?;
        let moved: Vec<usize> = moves.iter().map(|m| m.0).collect();
        for &i in &moved {
            let (x, y) = self.placement.xy[i];
            self.locs[i] = PinLoc { x, y, region: dev.region_of_clamped(x, y) };
        }
        self.sta.update(self.ctx.graph, self.ctx.delay, &self.locs, &moved);
        Ok(undo)
    }

    /// Slot kinds and macro shapes of the moved instances.
    fn verify(&self, moves: &[Move]) -> Result<()> {
        let (nl, dev) = (self.ctx.netlist, self.ctx.device);
        for &(i, s, k) in moves {
            let inst = &nl.instances[i];
            if !dev.slot_accepts(s, k, inst.kind) {
                return Err(Error::IllegalMove(format!("{} cannot sit in {}/{k}", inst.name, dev.site_name(s))));
            }
            if let Some(m) = inst.macro_id {
                let anchor = |j: usize| {
                    let site = dev.site(self.placement.binding[j].expect("bound").site);
                    (site.x, site.y as i64 - nl.instances[j].offset.1 as i64)
                };
                let members = &nl.macros[m].members;
                if members.iter().any(|&j| anchor(j) != anchor(members[0])) {
                    return Err(Error::IllegalMove(format!("macro {m} lost its shape")));
                }
            }
        }
        Ok(())
    }

    fn restore(&mut self, placement: &PlacementState) -> Result<()> {
        *self = Working::new(self.ctx, placement.clone())?;
        Ok(())
    }

    /// Delay of the path as currently placed.
    fn path_delay(&self, path: &[usize]) -> f64 {
        let g = self.ctx.graph;
        let mut d: f64 = path.iter().map(|&v| g.t_logic[v]).sum();
        for w in path.windows(2) {
            d += g.out_edges(w[0]).iter().filter(|&&e| g.edges[e].dst == w[1]).map(|&e| self.sta.t_net[e]).fold(0.0, f64::max);
        }
        d
    }

    fn path_cost(&self) -> PathCost<'_> {
        PathCost {
            graph: self.ctx.graph,
            params: self.ctx.delay,
            device: self.ctx.device,
            sta: &self.sta,
            locs: &self.locs,
            limit: self.sta.metrics.cpd,
        }
    }

    /// Optimizes one path. Returns true when it moved.
    fn optimize_path(&mut self, path: &[usize], frozen: &[bool], sched: &DpSchedule, r_nbr: f64) -> Result<bool> {
        let ctx = self.ctx;
        let map = find_candidates(ctx.netlist, ctx.device, &self.placement, &self.occ, path, frozen, sched, r_nbr);
        let a = shortest_path_assign(&map, &self.path_cost());
        if !(a.cost < a.current - 1e-12) {
            return Ok(false);
        }
        let before = self.cpd();
        let undo = self.apply(&map.moves(&a.choice))?;
        if sched.mode == DpMode::NoDegradation && self.cpd() > before {
            self.apply(&undo)?;
            return Ok(false);
        }
        Ok(true)
    }
}

/// Critical-path detailed placement with temporary degradation allowed
/// (in tolerant mode) and recovery of the best placement seen.
pub fn detailed_place(ctx: &DpContext, placement: &PlacementState, sched: &DpSchedule) -> Result<DpResult> {
    let mut w = Working::new(ctx, placement.clone())?;
    let initial = w.sta.metrics;
    let mut best = w.placement.clone();
    let mut best_cpd = w.cpd();
    let mut trace = Vec::with_capacity(sched.n_dpi);
    let (mut n_cp, mut r_nbr, mut fails) = (1usize, 1.0f64, 0usize);
    let n = ctx.netlist.num_instances();

    for iter in 0..sched.n_dpi {
        let mut frozen = vec![false; n];
        let mut moved = 0;
        for path in w.sta.critical_paths(ctx.graph, n_cp) {
            if w.optimize_path(&path, &frozen, sched, r_nbr)? {
                moved += 1;
            }
            for &v in &path {
                match ctx.netlist.instances[v].macro_id {
                    Some(m) => ctx.netlist.macros[m].members.iter().for_each(|&j| frozen[j] = true),
                    None => frozen[v] = true,
                }
            }
        }
        w.sta = run_sta(ctx.graph, ctx.delay, &w.locs, ctx.n_thr);
        let cpd = w.cpd();
        if cpd < best_cpd {
            best_cpd = cpd;
            best = w.placement.clone();
            fails = 0;
        } else {
            fails += 1;
        }
        r_nbr -= sched.d_r;
        n_cp += sched.d_ncp;
        let reverted = fails >= sched.i_thr;
        if reverted {
            w.restore(&best)?;
            r_nbr += (sched.i_thr + 1) as f64 * sched.d_r;
            n_cp = n_cp.saturating_sub((sched.i_thr + 1) * sched.d_ncp);
            fails = 0;
        }
        r_nbr = r_nbr.clamp(0.1, 1.0);
        n_cp = n_cp.max(1);
        log::debug!("dp iteration {iter}: cpd {cpd:.4} best {best_cpd:.4} paths {n_cp} moved {moved}");
        trace.push(DpIteration { iter, cpd, best_cpd, n_cp, r_nbr, moved, reverted });
    }

    let placement = final_no_degradation_pass(ctx, &best, sched)?;
    let metrics = run_sta(ctx.graph, ctx.delay, &pin_locs(ctx.device, &placement), ctx.n_thr).metrics;
    Ok(DpResult { placement, trace, initial, metrics })
}

/// Single-instance relocations along the most critical paths, each kept
/// only if the path gets faster and the critical path delay does not grow.
pub fn final_no_degradation_pass(ctx: &DpContext, placement: &PlacementState, sched: &DpSchedule) -> Result<PlacementState> {
    let mut w = Working::new(ctx, placement.clone())?;
    let none = vec![false; ctx.netlist.num_instances()];
    for path in w.sta.critical_paths(ctx.graph, sched.final_paths) {
        let nl = ctx.layers_len(&path);
        for l in 0..nl {
            let map = find_candidates(ctx.netlist, ctx.device, &w.placement, &w.occ, &path, &none, sched, 1.0);
            let layer = &map.layers[l];
            if layer.cands.len() < 2 {
                continue;
            }
            let pc = w.path_cost();
            let mut choice = vec![0; map.layers.len()];
            let current = pc.evaluate(&map, &choice);
            let mut ranked: Vec<(f64, usize)> = (1..layer.cands.len())
                .map(|c| {
                    choice[l] = c;
                    (pc.evaluate(&map, &choice), c)
                })
                .filter(|&(v, _)| v < current - 1e-12)
                .collect();
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let (cpd, delay) = (w.cpd(), w.path_delay(&path));
            for (_, c) in ranked {
                let undo = w.apply(&layer.cands[c].moves)?;
                if w.cpd() <= cpd && w.path_delay(&path) < delay {
                    break;
                }
                w.apply(&undo)?;
            }
        }
    }
    Ok(w.placement)
}

impl DpContext<'_> {
    fn layers_len(&self, path: &[usize]) -> usize {
        let mut n = 0;
        let mut last = None;
        for &v in path {
            let m = self.netlist.instances[v].macro_id;
            if m.is_none() || m != last {
                n += 1;
            }
            last = m;
        }
        n
    }
}

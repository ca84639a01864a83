//! Timing-driven quadratic global placement.

pub mod b2b;
pub mod blockage;
pub mod objects;
pub mod pseudo;
pub mod qp;
pub mod spread;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::floorplan::PathLengthInfo;
use crate::model::{hpwl, CellKind, DeviceGrid, Netlist, PlacementState, RegionRef};
use crate::timing::{pin_locs, run_sta, DelayModelParams, StaState, TimingConfig, TimingGraph, TimingMetrics};

pub use b2b::{b2b_evaluate, b2b_pairs, B2B_EPS};
pub use blockage::{blockage_weight, plan_blockage, stretch_region, BlockageAnchor, BlockageCluster, BlockagePlan, StretchRecord};
pub use objects::Objects;
pub use pseudo::{build_timing_pseudonets, criticality_weight, PseudoEnd, PseudoKind, PseudoNet};
pub use qp::{CsrMatrix, QpBuilder, QpSystem, SolveReport};
pub use spread::{spread_cells, ResourceClass, SpreadConfig, SpreadItem};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpConfig {
    pub max_iters: usize,
    /// Wirelength-only iterations before timing may start.
    pub min_wl_iters: usize,
    /// Iteration by which timing starts regardless of stability.
    pub timing_start_cap: usize,
    /// Relative HPWL change under which wirelength counts as stable.
    pub stable_tol: f64,
    pub lambda_max: f64,
    /// Iterations over which the timing blend ramps to `lambda_max`.
    pub lambda_ramp: usize,
    pub beta_anchor: f64,
    /// Legalization anchor weight per iteration.
    pub anchor_weight: f64,
    /// Anchor weight toward the floorplan seed in the first solve.
    pub seed_anchor_weight: f64,
    /// Distance floor of pseudo-net linearization, in sites.
    pub pseudo_guard: f64,
    pub qp_residual: f64,
    pub converge_tol: f64,
    pub converge_window: usize,
    pub blockage_every: usize,
    /// Instances on paths longer than this fraction of the longest path seed
    /// blockage clusters.
    pub blockage_fraction: f64,
    pub max_cluster: usize,
    pub spread: SpreadConfig,
    pub timing: TimingConfig,
    pub timing_driven: bool,
    pub wns_aware: bool,
    pub blockage_aware: bool,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            max_iters: 40,
            min_wl_iters: 6,
            timing_start_cap: 12,
            stable_tol: 0.02,
            lambda_max: 0.5,
            lambda_ramp: 6,
            beta_anchor: 0.01,
            anchor_weight: 0.01,
            seed_anchor_weight: 0.02,
            pseudo_guard: 1.0,
            qp_residual: 1e-6,
            converge_tol: 0.005,
            converge_window: 3,
            blockage_every: 3,
            blockage_fraction: 0.5,
            max_cluster: 20000,
            spread: SpreadConfig::default(),
            timing: TimingConfig::default(),
            timing_driven: true,
            wns_aware: true,
            blockage_aware: true,
        }
    }
}

/// One global placement iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpIteration {
    pub iter: usize,
    pub lambda: f64,
    pub hpwl_solved: f64,
    pub hpwl_spread: f64,
    pub timing_nets: usize,
    pub blockage_nets: usize,
    pub cg_iters: usize,
    pub residual: f64,
    pub wns: Option<f64>,
    pub tns: Option<f64>,
    pub cpd: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct GpResult {
    pub placement: PlacementState,
    pub trace: Vec<GpIteration>,
    /// Analysis of the returned placement when timing is enabled.
    pub metrics: Option<TimingMetrics>,
}

/// Everything global placement reads besides its configuration.
pub struct GpContext<'a> {
    pub netlist: &'a Netlist,
    pub device: &'a DeviceGrid,
    pub graph: &'a TimingGraph,
    pub delay: &'a DelayModelParams,
    pub paths: &'a PathLengthInfo,
}

/// Nearest column centre accepting each cell kind.
struct ColumnIndex {
    xs: Vec<Vec<f64>>,
}

impl ColumnIndex {
    fn new(device: &DeviceGrid) -> Self {
        // columns swallowed whole by a blockage have no sites
        let mut has_sites = vec![false; device.columns.len()];
        for s in device.sites() {
            has_sites[s.column] = true;
        }
        let xs = CellKind::ALL
            .iter()
            .map(|&k| {
                let mut v: Vec<f64> = device.columns_for(k).filter(|&c| has_sites[c]).map(|c| device.columns[c].x as f64 + 0.5).collect();
                v.sort_by(f64::total_cmp);
                v
            })
            .collect();
        ColumnIndex { xs }
    }

    fn nearest(&self, kind: CellKind, x: f64) -> Option<f64> {
        let v = &self.xs[kind.index()];
        let i = v.partition_point(|&c| c < x);
        [i.checked_sub(1), Some(i)]
            .into_iter()
            .flatten()
            .filter_map(|j| v.get(j).copied())
            .min_by(|a, b| (a - x).abs().total_cmp(&(b - x).abs()))
    }
}

/// Builds the two axis systems at linearization point `lin`.
fn assemble(ctx: &GpContext, objs: &Objects, lin: &[(f64, f64)], pseudo: &[PseudoNet], lambda: f64, guard: f64) -> [QpSystem; 2] {
    let nl = ctx.netlist;
    let mut builders = [QpBuilder::new(objs.len()), QpBuilder::new(objs.len())];
    let coord = |p: (f64, f64), axis: usize| if axis == 0 { p.0 } else { p.1 };
    let off = |i: usize, axis: usize| objs.member[i].map(|m| (m.obj, if axis == 0 { m.dx } else { m.dy }));
    let wl = 1.0 - lambda;
    let mut coords = Vec::new();
    for (axis, q) in builders.iter_mut().enumerate() {
        let mut spring = |a: usize, b: Option<usize>, target: f64, w: f64| match (off(a, axis), b.and_then(|b| off(b, axis))) {
            (Some((oa, da)), Some((ob, db))) => q.add_pair(oa, da, ob, db, w),
            (Some((oa, da)), None) => q.add_anchor(oa, da, target, w),
            _ => {}
        };
        for net in &nl.nets {
            coords.clear();
            coords.extend(net.pins.iter().map(|p| coord(lin[p.inst], axis)));
            for (i, j, w) in b2b_pairs(&coords) {
                let (a, b) = (net.pins[i].inst, net.pins[j].inst);
                let w = w * net.weight * wl;
                if objs.member[a].is_some() {
                    spring(a, Some(b), coord(lin[b], axis), w);
                } else {
                    spring(b, Some(a), coord(lin[a], axis), w);
                }
            }
        }
        for p in pseudo {
            let scale = match p.kind {
                PseudoKind::Legalize => wl,
                PseudoKind::Blockage | PseudoKind::Timing => lambda,
            };
            let here = coord(lin[p.inst], axis);
            let (other, target) = match p.other {
                PseudoEnd::Inst(o) => (Some(o), coord(lin[o], axis)),
                PseudoEnd::Anchor { x, y } => match if axis == 0 { x } else { y } {
                    Some(t) => (None, t),
                    None => continue,
                },
            };
            let w = scale * p.weight / (here - target).abs().max(guard);
            match other {
                Some(o) if objs.member[p.inst].is_none() => spring(o, Some(p.inst), here, w),
                _ => spring(p.inst, other, target, w),
            }
        }
    }
    builders.map(QpBuilder::build)
}

fn legalization_anchors(
    ctx: &GpContext,
    objs: &Objects,
    cols: &ColumnIndex,
    target: &[(f64, f64)],
    weight: f64,
    snap: bool,
) -> Vec<PseudoNet> {
    let mut out = Vec::with_capacity(objs.member.len());
    for (i, m) in objs.member.iter().enumerate() {
        if m.is_none() {
            continue;
        }
        let (x, y) = target[i];
        let x = if snap { cols.nearest(ctx.netlist.instances[i].kind, x).unwrap_or(x) } else { x };
        out.push(PseudoNet { kind: PseudoKind::Legalize, inst: i, other: PseudoEnd::Anchor { x: Some(x), y: Some(y) }, weight });
    }
    out
}

fn blockage_nets(plan: &BlockagePlan, beta: f64, netlist: &Netlist, lin: &[(f64, f64)]) -> Vec<PseudoNet> {
    plan.anchors
        .iter()
        .map(|a| PseudoNet {
            kind: PseudoKind::Blockage,
            inst: a.inst,
            other: PseudoEnd::Anchor { x: Some(a.x), y: None },
            weight: blockage_weight(beta, lin[a.inst].0, a.x, netlist.pin_count(a.inst)),
        })
        .collect()
}

/// Vertically stretches the objects inside each region that receives
/// guided instances from outside.
fn apply_stretch(ctx: &GpContext, objs: &Objects, plan: &BlockagePlan, xy: &mut [(f64, f64)]) -> Result<()> {
    let regions = ctx.device.regions();
    for rec in &plan.stretch {
        if rec.n_inside == 0 {
            continue;
        }
        let r = regions[rec.region];
        let mut anchors = objs.anchors(xy);
        let inside: Vec<usize> = (0..objs.len())
            .filter(|&o| {
                let first = objs.insts[o][0];
                let (x, y) = anchors[o];
                ctx.device.region_of_clamped(x, y + (objs.height[o] - 1.0) / 2.0) == RegionRef::Region(rec.region)
                    && plan.target[first].map_or(true, |t| t == rec.region)
            })
            .collect();
        if inside.is_empty() {
            continue;
        }
        let mut ys: Vec<f64> = inside.iter().map(|&o| anchors[o].1 + (objs.height[o] - 1.0) / 2.0).collect();
        stretch_region(&mut ys, rec.n_outside, r.y0 as f64, r.y1 as f64)?;
        for (&o, y) in inside.iter().zip(ys) {
            let h = objs.height[o];
            anchors[o].1 = (y - (h - 1.0) / 2.0).clamp(r.y0 as f64, (r.y1 as f64 - h).max(r.y0 as f64));
        }
        objs.apply(&anchors, xy);
    }
    Ok(())
}

/// Alternates quadratic solves with spreading. Once wirelength stabilizes,
/// timing analysis on the spread placement drives timing and blockage
/// pseudo nets, blended in with a linearly ramped weight.
pub fn global_place(ctx: &GpContext, seed: &PlacementState, cfg: &GpConfig) -> Result<GpResult> {
    let nl = ctx.netlist;
    let objs = Objects::from_netlist(nl);
    let cols = ColumnIndex::new(ctx.device);
    let mut lower = seed.xy.clone();
    let mut upper = seed.xy.clone();
    let mut trace: Vec<GpIteration> = Vec::new();
    let mut timing_since: Option<usize> = None;
    let mut plan: Option<BlockagePlan> = None;
    let mut sta: Option<StaState> = None;
    let mut stable_run = 0;
    let longest = ctx.paths.longest();
    let threshold = (cfg.blockage_fraction * longest as f64).floor() as u32;

    for t in 0..cfg.max_iters {
        let lambda = timing_since.map_or(0.0, |s| cfg.lambda_max * ((t - s + 1) as f64 / cfg.lambda_ramp.max(1) as f64).min(1.0));
        let mut pseudo = if t == 0 {
            legalization_anchors(ctx, &objs, &cols, &seed.xy, cfg.seed_anchor_weight, false)
        } else {
            legalization_anchors(ctx, &objs, &cols, &upper, cfg.anchor_weight * t as f64, true)
        };
        let mut timing_nets = 0;
        let mut blockage_count = 0;
        if timing_since.is_some() {
            let state = run_sta(ctx.graph, ctx.delay, &pin_locs(ctx.device, &PlacementState::from_xy(upper.clone())), cfg.timing.n_thr);
            let et = build_timing_pseudonets(ctx.graph, &state, &cfg.timing, cfg.wns_aware);
            timing_nets = et.len();
            pseudo.extend(et);
            if cfg.blockage_aware {
                if (t - timing_since.unwrap()) % cfg.blockage_every.max(1) == 0 {
                    plan = Some(plan_blockage(nl, ctx.paths, ctx.device, &upper, threshold, cfg.beta_anchor, cfg.max_cluster));
                }
                if let Some(p) = &plan {
                    let eb = blockage_nets(p, cfg.beta_anchor, nl, &lower);
                    blockage_count = eb.len();
                    pseudo.extend(eb);
                }
            }
            sta = Some(state);
        }

        let [sx, sy] = assemble(ctx, &objs, &lower, &pseudo, lambda, cfg.pseudo_guard);
        let anchors = objs.anchors(&lower);
        let mut px: Vec<f64> = anchors.iter().map(|a| a.0).collect();
        let mut py: Vec<f64> = anchors.iter().map(|a| a.1).collect();
        let (rx, ry) = rayon::join(|| sx.solve(&mut px, cfg.qp_residual), || sy.solve(&mut py, cfg.qp_residual));
        let solved: Vec<(f64, f64)> = px.into_iter().zip(py).collect();
        objs.apply(&solved, &mut lower);
        for p in lower.iter_mut() {
            p.0 = p.0.clamp(0.0, ctx.device.width as f64);
            p.1 = p.1.clamp(0.0, ctx.device.height as f64);
        }

        upper = spread::spread_objects(nl, &objs, ctx.device, &lower, &cfg.spread)?;
        if let (Some(p), true) = (&plan, cfg.blockage_aware) {
            apply_stretch(ctx, &objs, p, &mut upper)?;
        }

        let hpwl_solved = hpwl(nl, &lower);
        let hpwl_spread = hpwl(nl, &upper);
        let prev = trace.last().map(|r| r.hpwl_spread);
        let change = prev.map_or(f64::INFINITY, |p| (hpwl_spread - p).abs() / p.max(1e-12));
        trace.push(GpIteration {
            iter: t,
            lambda,
            hpwl_solved,
            hpwl_spread,
            timing_nets,
            blockage_nets: blockage_count,
            cg_iters: rx.iterations + ry.iterations,
            residual: rx.residual.max(ry.residual),
            wns: sta.as_ref().map(|s| s.metrics.wns),
            tns: sta.as_ref().map(|s| s.metrics.tns),
            cpd: sta.as_ref().map(|s| s.metrics.cpd),
        });
        log::debug!("gp iter {t}: hpwl {hpwl_solved:.1}/{hpwl_spread:.1} lambda {lambda:.2} timing nets {timing_nets}");

        if cfg.timing_driven
            && timing_since.is_none()
            && t + 1 >= cfg.min_wl_iters
            && (change < cfg.stable_tol || t + 1 >= cfg.timing_start_cap)
        {
            timing_since = Some(t + 1);
            stable_run = 0;
            continue;
        }
        let ramped = match timing_since {
            Some(s) => t + 1 >= s + cfg.lambda_ramp,
            None => !cfg.timing_driven && t + 1 >= cfg.min_wl_iters,
        };
        stable_run = if ramped && change < cfg.converge_tol { stable_run + 1 } else { 0 };
        if stable_run >= cfg.converge_window {
            break;
        }
    }

    let placement = PlacementState::from_xy(upper);
    let metrics = cfg.timing_driven.then(|| run_sta(ctx.graph, ctx.delay, &pin_locs(ctx.device, &placement), cfg.timing.n_thr).metrics);
    Ok(GpResult { placement, trace, metrics })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::floorplan::compute_path_lengths;
    use crate::model::{Column, Instance, Net, Pin, PinRole, SiteKind, SlotCaps};
    use crate::timing::LogicDelays;

    fn inst(i: usize, kind: CellKind, loc: Option<(f64, f64)>) -> Instance {
        Instance {
            id: i as u32,
            name: format!("i{i}"),
            kind,
            macro_id: None,
            offset: (0, 0),
            fixed: loc.is_some(),
            timing_start: loc.is_some(),
            timing_end: loc.is_some(),
            loc,
        }
    }

    fn net(k: usize, pins: &[usize]) -> Net {
        Net {
            id: k as u32,
            weight: 1.0,
            pins: pins
                .iter()
                .enumerate()
                .map(|(j, &i)| Pin { inst: i, role: if j == 0 { PinRole::Driver } else { PinRole::Sink } })
                .collect(),
        }
    }

    fn device(w: u32, h: u32) -> DeviceGrid {
        let mut cols: Vec<Column> = (1..w - 1).map(|x| Column { x, kind: SiteKind::Slicel, slots: SlotCaps::clb() }).collect();
        for x in [0, w - 1] {
            cols.push(Column { x, kind: SiteKind::Io, slots: SlotCaps { io: 2, ..Default::default() } });
        }
        DeviceGrid::new(w, h, cols, vec![]).unwrap()
    }

    fn run(nl: &Netlist, dev: &DeviceGrid, seed: &PlacementState, cfg: &GpConfig) -> GpResult {
        let graph = TimingGraph::from_netlist(nl, &LogicDelays::default()).unwrap();
        let delay = DelayModelParams::default();
        let paths = compute_path_lengths(nl).unwrap();
        let ctx = GpContext { netlist: nl, device: dev, graph: &graph, delay: &delay, paths: &paths };
        global_place(&ctx, seed, cfg).unwrap()
    }

    #[test]
    fn single_instance_between_pads() {
        let nl = Netlist::new(
            vec![inst(0, CellKind::Io, Some((0.5, 5.5))), inst(1, CellKind::Lut, None), inst(2, CellKind::Io, Some((19.5, 5.5)))],
            vec![net(0, &[0, 1]), net(1, &[1, 2])],
            vec![],
            10.0,
        )
        .unwrap();
        let dev = device(20, 10);
        let mut seed = PlacementState::from_xy(vec![(0.0, 0.0), (3.0, 9.0), (0.0, 0.0)]);
        seed.apply_fixed(&nl);
        let cfg = GpConfig { timing_driven: false, ..GpConfig::default() };
        let res = run(&nl, &dev, &seed, &cfg);
        let (x, y) = res.placement.xy[1];
        assert!(x > 0.5 && x < 19.5, "{x}");
        assert!((y - 5.5).abs() < 2.0, "{y}");
        assert_eq!(res.placement.xy[0], (0.5, 5.5));
    }

    fn random_design(n: usize, rng: &mut ChaCha8Rng) -> (Netlist, PlacementState) {
        use rand::Rng;
        let pads = 8;
        let mut insts: Vec<Instance> = (0..n).map(|i| inst(i, if i % 2 == 0 { CellKind::Lut } else { CellKind::Ff }, None)).collect();
        for p in 0..pads {
            let x = if p % 2 == 0 { 0.5 } else { 29.5 };
            insts.push(inst(n + p, CellKind::Io, Some((x, 2.5 + 3.0 * (p / 2) as f64))));
        }
        for (i, it) in insts.iter_mut().enumerate().take(n) {
            it.timing_start = i % 2 == 1;
            it.timing_end = i % 2 == 1;
        }
        let mut nets = Vec::new();
        for i in 0..n {
            let k = rng.gen_range(1..4);
            let mut pins = vec![i];
            for _ in 0..k {
                // LUT fanout only goes up in index, keeping the logic acyclic
                let j = if i % 2 == 0 { rng.gen_range(i + 1..n + pads) } else { rng.gen_range(0..n + pads) };
                if !pins.contains(&j) {
                    pins.push(j);
                }
            }
            if pins.len() > 1 {
                nets.push(net(nets.len(), &pins));
            }
        }
        let nl = Netlist::new(insts, nets, vec![], 5.0).unwrap();
        let mut seed = PlacementState::from_xy((0..n + pads).map(|_| (rng.gen_range(1.0..29.0), rng.gen_range(0.0..20.0))).collect());
        seed.apply_fixed(&nl);
        (nl, seed)
    }

    #[test]
    fn wirelength_flow_improves_on_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (nl, seed) = random_design(300, &mut rng);
        let dev = device(30, 20);
        let cfg = GpConfig { timing_driven: false, ..GpConfig::default() };
        let res = run(&nl, &dev, &seed, &cfg);
        let before = hpwl(&nl, &seed.xy);
        let after = res.trace.last().unwrap().hpwl_spread;
        assert!(after <= before, "{after} > {before}");
        assert!(res.trace.iter().all(|r| r.lambda == 0.0));
    }

    #[test]
    fn lambda_ramps_after_timing_starts() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (nl, seed) = random_design(200, &mut rng);
        let dev = device(30, 20);
        let res = run(&nl, &dev, &seed, &GpConfig::default());
        let lambdas: Vec<f64> = res.trace.iter().map(|r| r.lambda).collect();
        assert!(lambdas.windows(2).all(|w| w[1] >= w[0]));
        assert!(lambdas.iter().any(|&l| l > 0.0));
        assert!(lambdas.iter().all(|&l| l <= 0.5 + 1e-12));
        assert!(res.metrics.is_some());
    }

    #[test]
    fn assembled_wirelength_matches_hpwl() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (nl, seed) = random_design(60, &mut rng);
        let dev = device(30, 20);
        let graph = TimingGraph::from_netlist(&nl, &LogicDelays::default()).unwrap();
        let delay = DelayModelParams::default();
        let paths = compute_path_lengths(&nl).unwrap();
        let ctx = GpContext { netlist: &nl, device: &dev, graph: &graph, delay: &delay, paths: &paths };
        let objs = Objects::from_netlist(&nl);
        let sys = assemble(&ctx, &objs, &seed.xy, &[], 0.0, 1.0);
        // x^T A x - 2 b^T x + c over both axes equals the weighted HPWL
        let mut total = 0.0;
        for (axis, s) in sys.iter().enumerate() {
            assert!(s.is_symmetric());
            let p: Vec<f64> = objs.anchors(&seed.xy).iter().map(|a| if axis == 0 { a.0 } else { a.1 }).collect();
            let mut ap = vec![0.0; p.len()];
            s.matrix.mul_into(&p, &mut ap);
            let quad: f64 =
                p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>() - 2.0 * p.iter().zip(&s.rhs).map(|(a, b)| a * b).sum::<f64>();
            // constant term from fixed pins
            let mut c = 0.0;
            for n in &nl.nets {
                let coords: Vec<f64> = n.pins.iter().map(|q| if axis == 0 { seed.xy[q.inst].0 } else { seed.xy[q.inst].1 }).collect();
                for (i, j, w) in b2b_pairs(&coords) {
                    let (a, b) = (n.pins[i].inst, n.pins[j].inst);
                    match (objs.member[a].is_some(), objs.member[b].is_some()) {
                        (true, false) => c += w * coords[j].powi(2),
                        (false, true) => c += w * coords[i].powi(2),
                        _ => {}
                    }
                }
            }
            total += quad + c;
        }
        let want = hpwl(&nl, &seed.xy);
        assert!((total - want).abs() <= 1e-6 * want, "{total} vs {want}");
    }
}

//! Deterministic synthetic benchmarks.
//!
//! A design is a pipeline of logic clouds between flip-flop banks. Each
//! cloud has a depth drawn from the depth profile; its logic items (LUTs,
//! carry chains, DSPs, BRAMs) sit on levels and read from the level below.
//! Inputs enter through fixed pads on the left edge and leave through pads
//! on the right edge.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CellKind, Column, DeviceGrid, Instance, Macro, MacroKind, Net, Netlist, Pin, PinRole, Rect, SiteKind, SlotCaps};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchSpec {
    pub name: String,
    pub seed: u64,
    /// Total instance count, pads included.
    pub instances: usize,
    /// Fraction of instances that belong to macros.
    pub macro_ratio: f64,
    /// Fraction of the non-macro logic that is flip-flops.
    pub ff_fraction: f64,
    pub dsp: usize,
    /// DSPs that form two-high cascades, counted in `dsp`.
    pub dsp_cascades: usize,
    pub bram: usize,
    pub io: usize,
    /// Carry chain length range (inclusive), in sites.
    pub carry_len: (usize, usize),
    /// Extra sinks on every carry chain output.
    pub macro_fanout: usize,
    /// Flip-flops per pipeline bank.
    pub bank: usize,
    /// Cloud depth range for ordinary clouds.
    pub depth: (usize, usize),
    /// Cloud depth range for deep clouds.
    pub deep_depth: (usize, usize),
    pub deep_fraction: f64,
    pub height: u32,
    /// Target fraction of CLB capacity in use.
    pub utilization: f64,
    /// Width of a full-height blockage in the middle of the device; 0 for none.
    pub blockage_width: u32,
    pub clock_period: f64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            name: "default".into(),
            seed: 1,
            instances: 5000,
            macro_ratio: 0.2,
            ff_fraction: 0.35,
            dsp: 24,
            dsp_cascades: 4,
            bram: 12,
            io: 48,
            carry_len: (2, 8),
            macro_fanout: 2,
            bank: 24,
            depth: (4, 10),
            deep_depth: (12, 16),
            deep_fraction: 0.0,
            height: 48,
            utilization: 0.55,
            blockage_width: 0,
            clock_period: 4.0,
        }
    }
}

impl BenchSpec {
    /// Named presets: `default`, `blockage-stress`, `wns-skewed` and `small`.
    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        let base = BenchSpec { name: name.into(), seed, ..BenchSpec::default() };
        let spec = match name {
            "default" => base,
            "blockage-stress" => BenchSpec {
                instances: 1200,
                macro_ratio: 0.3,
                dsp: 8,
                dsp_cascades: 2,
                bram: 4,
                io: 24,
                macro_fanout: 6,
                bank: 12,
                height: 24,
                blockage_width: 2,
                clock_period: 3.0,
                ..base
            },
            "wns-skewed" => BenchSpec {
                instances: 1200,
                macro_ratio: 0.15,
                dsp: 6,
                dsp_cascades: 0,
                bram: 4,
                io: 24,
                bank: 12,
                depth: (2, 4),
                deep_depth: (24, 30),
                deep_fraction: 0.12,
                height: 24,
                clock_period: 3.0,
                ..base
            },
            "small" => {
                BenchSpec { instances: 400, dsp: 4, dsp_cascades: 1, bram: 2, io: 16, bank: 8, height: 16, clock_period: 3.0, ..base }
            }
            _ => return Err(Error::InfeasibleSpec(format!("unknown preset {name:?}"))),
        };
        Ok(spec)
    }
}

/// Pieces of logic that occupy one level of a cloud.
#[derive(Clone, Debug)]
enum Item {
    Lut(usize),
    Dsp(usize),
    Bram(usize),
    /// (LUT, CARRY) member pairs, bottom first.
    Carry(Vec<(usize, usize)>),
    /// Two cascaded DSPs.
    DspPair(usize, usize),
}

impl Item {
    /// Instances that take inputs from the level below.
    fn inputs(&self) -> Vec<usize> {
        match self {
            Item::Lut(i) | Item::Dsp(i) | Item::Bram(i) => vec![*i],
            Item::Carry(m) => m.iter().map(|p| p.0).collect(),
            Item::DspPair(a, _) => vec![*a],
        }
    }

    fn output(&self) -> usize {
        match self {
            Item::Lut(i) | Item::Dsp(i) | Item::Bram(i) => *i,
            Item::Carry(m) => m.last().expect("nonempty chain").1,
            Item::DspPair(_, b) => *b,
        }
    }
}

struct Builder {
    insts: Vec<Instance>,
    macros: Vec<Macro>,
    sinks: Vec<Vec<usize>>,
}

impl Builder {
    fn add(&mut self, kind: CellKind) -> usize {
        let i = self.insts.len();
        let reg = matches!(kind, CellKind::Ff | CellKind::Io);
        self.insts.push(Instance {
            id: i as u32,
            name: format!("{}{i}", kind.to_string().to_lowercase()),
            kind,
            macro_id: None,
            offset: (0, 0),
            fixed: false,
            timing_start: reg,
            timing_end: reg,
            loc: None,
        });
        self.sinks.push(Vec::new());
        i
    }

    fn member(&mut self, kind: CellKind, m: usize, dy: i32) -> usize {
        let i = self.add(kind);
        self.insts[i].macro_id = Some(m);
        self.insts[i].offset = (0, dy);
        i
    }

    fn connect(&mut self, from: usize, to: usize) {
        if from != to && !self.sinks[from].contains(&to) {
            self.sinks[from].push(to);
        }
    }
}

/// CLB columns with hard block columns interleaved at even strides; every
/// fourth CLB column is a SLICEM.
fn strip(clb: u32, dsp: u32, bram: u32) -> Vec<SiteKind> {
    let mut kinds = Vec::new();
    let special = dsp + bram;
    let stride = if special == 0 { u32::MAX } else { (clb / (special + 1)).max(1) };
    let (mut d, mut b, mut c) = (0, 0, 0);
    while c < clb || d < dsp || b < bram {
        if c < clb {
            kinds.push(if c % 4 == 3 { SiteKind::Slicem } else { SiteKind::Slicel });
            c += 1;
        }
        if stride != u32::MAX && c % stride == 0 || c >= clb {
            if d < dsp && (d <= b || b >= bram) {
                kinds.push(SiteKind::Dsp);
                d += 1;
            } else if b < bram {
                kinds.push(SiteKind::Bram);
                b += 1;
            }
        }
    }
    kinds
}

/// Column plan for the generated device.
fn device_for(spec: &BenchSpec, luts: usize, ffs: usize, carry_sites: usize) -> Result<DeviceGrid> {
    let h = spec.height.max(4);
    let util = spec.utilization.clamp(0.05, 1.0);
    let clb_sites = [luts.div_ceil(8), ffs.div_ceil(8), carry_sites].into_iter().max().unwrap_or(1) as f64 / util;
    let clb_cols = ((clb_sites / h as f64).ceil() as u32).max(2);
    let dsp_cols = if spec.dsp == 0 { 0 } else { ((spec.dsp as f64 / (h as f64 * 0.5)).ceil() as u32).max(1) };
    let bram_cols = if spec.bram == 0 { 0 } else { ((spec.bram as f64 / (h as f64 * 0.5)).ceil() as u32).max(1) };
    if (spec.io - spec.io / 2).div_ceil(2) > h as usize {
        return Err(Error::InfeasibleSpec(format!("{} pads do not fit two pad columns of height {h}", spec.io)));
    }
    // a blockage splits the device into two strips, each with its own hard
    // block columns
    let kinds: Vec<SiteKind> = if spec.blockage_width > 0 {
        let half = |n: u32| if n == 0 { 0 } else { n.div_ceil(2) };
        let mut k = strip(half(clb_cols), half(dsp_cols), half(bram_cols));
        k.extend(strip(half(clb_cols), half(dsp_cols), half(bram_cols)).into_iter().rev());
        k
    } else {
        strip(clb_cols, dsp_cols, bram_cols)
    };
    let width = kinds.len() as u32 + spec.blockage_width + 2;
    // both strips have the same length, so the gap sits in the middle
    let mid = kinds.len() / 2;
    let mut columns = vec![Column { x: 0, kind: SiteKind::Io, slots: SlotCaps { io: 2, ..Default::default() } }];
    for (k, kind) in kinds.into_iter().enumerate() {
        let slots = match kind {
            SiteKind::Dsp => SlotCaps { dsp: 1, ..Default::default() },
            SiteKind::Bram => SlotCaps { bram: 1, ..Default::default() },
            _ => SlotCaps::clb(),
        };
        let shift = if k >= mid { spec.blockage_width } else { 0 };
        columns.push(Column { x: k as u32 + 1 + shift, kind, slots });
    }
    columns.push(Column { x: width - 1, kind: SiteKind::Io, slots: SlotCaps { io: 2, ..Default::default() } });
    let blockages = if spec.blockage_width > 0 {
        let x0 = mid as u32 + 1;
        vec![Rect { x0, y0: 0, x1: x0 + spec.blockage_width, y1: h }]
    } else {
        Vec::new()
    };
    DeviceGrid::new(width, h, columns, blockages)
}

/// Generates the netlist and device of a benchmark specification.
pub fn gen_benchmark(spec: &BenchSpec) -> Result<(Netlist, DeviceGrid)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.instances;
    if spec.dsp_cascades * 2 > spec.dsp {
        return Err(Error::InfeasibleSpec("more cascaded DSPs than DSPs".into()));
    }
    if !(0.0..1.0).contains(&spec.macro_ratio) {
        return Err(Error::InfeasibleSpec(format!("macro ratio {} outside [0, 1)", spec.macro_ratio)));
    }
    let cascade_members = spec.dsp_cascades * 2;
    let target_macro = (spec.macro_ratio * n as f64).round() as usize;
    let carry_members = target_macro.saturating_sub(cascade_members) / 2 * 2;
    let fixed_part = spec.io + spec.dsp + spec.bram + carry_members;
    if fixed_part + 8 > n || spec.carry_len.0 == 0 || spec.carry_len.0 > spec.carry_len.1 || spec.io < 2 {
        return Err(Error::InfeasibleSpec(format!("{n} instances cannot hold the requested pads, hard blocks and macros")));
    }
    let rest = n - fixed_part;
    let ffs = ((rest as f64 * spec.ff_fraction).round() as usize).clamp(spec.bank.max(2), rest - 2);
    let luts = rest - ffs;

    let mut b = Builder { insts: Vec::with_capacity(n), macros: Vec::new(), sinks: Vec::with_capacity(n) };
    let mut items: Vec<Item> = Vec::new();
    let mut left = carry_members / 2;
    let mut carry_sites = 0;
    while left > 0 {
        let len = rng.gen_range(spec.carry_len.0..=spec.carry_len.1).min(left);
        let m = b.macros.len();
        let pairs: Vec<(usize, usize)> =
            (0..len).map(|dy| (b.member(CellKind::Lut, m, dy as i32), b.member(CellKind::Carry, m, dy as i32))).collect();
        let members = pairs.iter().flat_map(|&(l, c)| [l, c]).collect();
        b.macros.push(Macro { id: m as u32, kind: MacroKind::CarryChain, column: SiteKind::Slicel, members, height: len as u32 });
        for w in pairs.windows(2) {
            b.connect(w[0].1, w[1].1);
        }
        for &(l, c) in &pairs {
            b.connect(l, c);
        }
        carry_sites += len;
        items.push(Item::Carry(pairs));
        left -= len;
    }
    for _ in 0..spec.dsp_cascades {
        let m = b.macros.len();
        let (x, y) = (b.member(CellKind::Dsp, m, 0), b.member(CellKind::Dsp, m, 1));
        b.macros.push(Macro { id: m as u32, kind: MacroKind::DspCascade, column: SiteKind::Dsp, members: vec![x, y], height: 2 });
        b.connect(x, y);
        items.push(Item::DspPair(x, y));
    }
    for _ in cascade_members..spec.dsp {
        let i = b.add(CellKind::Dsp);
        items.push(Item::Dsp(i));
    }
    for _ in 0..spec.bram {
        let i = b.add(CellKind::Bram);
        items.push(Item::Bram(i));
    }
    for _ in 0..luts {
        let i = b.add(CellKind::Lut);
        items.push(Item::Lut(i));
    }
    let ff: Vec<usize> = (0..ffs).map(|_| b.add(CellKind::Ff)).collect();
    let device = device_for(spec, luts + carry_members / 2, ffs, carry_sites)?;
    let h = device.height;
    let pads: Vec<usize> = (0..spec.io).map(|_| b.add(CellKind::Io)).collect();
    let (inputs, outputs) = pads.split_at(spec.io / 2);
    for (k, &p) in pads.iter().enumerate() {
        let side = if k < spec.io / 2 { 0 } else { device.width - 1 };
        let j = if k < spec.io / 2 { k } else { k - spec.io / 2 };
        let count = if k < spec.io / 2 { spec.io / 2 } else { spec.io - spec.io / 2 };
        let y = (j / 2) as u32 * h / count.div_ceil(2) as u32;
        b.insts[p].fixed = true;
        b.insts[p].loc = Some((side as f64 + 0.5, y as f64 + 0.5));
    }

    // clouds between banks
    items.shuffle(&mut rng);
    let banks: Vec<Vec<usize>> = ff.chunks(spec.bank.max(1)).map(|c| c.to_vec()).collect();
    let clouds = banks.len();
    let mut per_cloud: Vec<Vec<Item>> = vec![Vec::new(); clouds];
    for (k, it) in items.into_iter().enumerate() {
        per_cloud[k % clouds].push(it);
    }
    let mut cloud_out: Vec<Vec<usize>> = vec![Vec::new(); clouds];
    for (c, cloud) in per_cloud.into_iter().enumerate() {
        let deep = rng.gen_bool(spec.deep_fraction.clamp(0.0, 1.0));
        let (lo, hi) = if deep { spec.deep_depth } else { spec.depth };
        let depth = rng.gen_range(lo.max(1)..=hi.max(lo.max(1))).min(cloud.len().max(1));
        let mut levels: Vec<Vec<Item>> = vec![Vec::new(); depth];
        for (k, it) in cloud.into_iter().enumerate() {
            levels[k % depth].push(it);
        }
        // inputs: the previous bank, or pads for the first cloud
        let source: Vec<usize> = if c == 0 { inputs.to_vec() } else { banks[c - 1].clone() };
        let mut below: Vec<usize> = source.clone();
        for level in &levels {
            for it in level {
                for v in it.inputs() {
                    for _ in 0..rng.gen_range(1..=2) {
                        let u = *below.choose(&mut rng).expect("nonempty level");
                        b.connect(u, v);
                    }
                }
            }
            if !level.is_empty() {
                below = level.iter().map(Item::output).collect();
            }
        }
        // unused outputs feed the next level or the bank
        for (l, level) in levels.iter().enumerate() {
            let next: Vec<usize> = levels.get(l + 1).map(|n| n.iter().flat_map(|it| it.inputs()).collect()).unwrap_or_default();
            for it in level {
                let o = it.output();
                if let Item::Carry(_) = it {
                    for _ in 0..spec.macro_fanout {
                        let t =
                            if next.is_empty() { *banks[c].choose(&mut rng).expect("bank") } else { *next.choose(&mut rng).expect("next") };
                        b.connect(o, t);
                    }
                }
                if b.sinks[o].is_empty() {
                    let t = if next.is_empty() { *banks[c].choose(&mut rng).expect("bank") } else { *next.choose(&mut rng).expect("next") };
                    b.connect(o, t);
                }
            }
        }
        cloud_out[c] = below;
    }
    for c in 0..clouds {
        for &f in &banks[c] {
            if !cloud_out[c].is_empty() {
                let u = *cloud_out[c].choose(&mut rng).expect("outputs");
                b.connect(u, f);
            }
        }
    }
    // last bank and stray flops drive the output pads
    for (k, &o) in outputs.iter().enumerate() {
        let bank = &banks[clouds - 1];
        b.connect(bank[k % bank.len()], o);
    }
    for &f in &ff {
        if b.sinks[f].is_empty() {
            let o = *outputs.choose(&mut rng).expect("outputs");
            b.connect(f, o);
        }
    }
    for &p in inputs {
        if b.sinks[p].is_empty() {
            let f = *banks[0].choose(&mut rng).expect("bank");
            b.connect(p, f);
        }
    }

    let nets: Vec<Net> = b
        .sinks
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.is_empty())
        .enumerate()
        .map(|(id, (d, s))| {
            let mut pins = vec![Pin { inst: d, role: PinRole::Driver }];
            pins.extend(s.iter().map(|&t| Pin { inst: t, role: PinRole::Sink }));
            Net { id: id as u32, weight: 1.0, pins }
        })
        .collect();
    let netlist = Netlist::new(b.insts, nets, b.macros, spec.clock_period)?;
    Ok((netlist, device))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DeviceFile, NetlistFile};
    use crate::timing::{LogicDelays, TimingGraph};

    fn macro_share(nl: &Netlist) -> f64 {
        nl.instances.iter().filter(|i| i.macro_id.is_some()).count() as f64 / nl.num_instances() as f64
    }

    #[test]
    fn no_macros_when_ratio_zero() {
        let spec = BenchSpec { macro_ratio: 0.0, dsp_cascades: 0, ..BenchSpec::preset("small", 3).unwrap() };
        let (nl, _) = gen_benchmark(&spec).unwrap();
        assert!(nl.macros.is_empty());
        assert_eq!(nl.num_instances(), spec.instances);
    }

    #[test]
    fn macro_ratio_is_met() {
        for seed in 0..4 {
            let spec = BenchSpec { macro_ratio: 0.4, ..BenchSpec::preset("small", seed).unwrap() };
            let (nl, _) = gen_benchmark(&spec).unwrap();
            assert!((macro_share(&nl) - 0.4).abs() <= 0.02, "{}", macro_share(&nl));
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = BenchSpec::preset("small", 9).unwrap();
        let dump = || {
            let (nl, dev) = gen_benchmark(&spec).unwrap();
            (
                serde_json::to_string(&NetlistFile::from_netlist(&nl)).unwrap(),
                serde_json::to_string(&DeviceFile::from_device(&dev)).unwrap(),
            )
        };
        assert_eq!(dump(), dump());
    }

    #[test]
    fn presets_build_timing_graphs() {
        for name in ["default", "blockage-stress", "wns-skewed", "small"] {
            let (nl, dev) = gen_benchmark(&BenchSpec::preset(name, 1).unwrap()).unwrap();
            TimingGraph::from_netlist(&nl, &LogicDelays::default()).unwrap();
            for kind in CellKind::ALL {
                let demand = nl.instances.iter().filter(|i| i.kind == kind).count();
                assert!(demand <= dev.capacity_for(kind), "{name}: {kind} {demand} > {}", dev.capacity_for(kind));
            }
        }
        let (_, dev) = gen_benchmark(&BenchSpec::preset("blockage-stress", 1).unwrap()).unwrap();
        assert_eq!(dev.regions().len(), 2);
        let b = dev.blockages[0];
        for kind in [SiteKind::Dsp, SiteKind::Bram] {
            assert!(dev.columns.iter().any(|c| c.kind == kind && c.x < b.x0), "{kind:?} left");
            assert!(dev.columns.iter().any(|c| c.kind == kind && c.x >= b.x1), "{kind:?} right");
        }
        assert!(dev.columns.iter().all(|c| c.x < b.x0 || c.x >= b.x1));
    }

    #[test]
    fn unknown_preset_fails() {
        assert!(BenchSpec::preset("nope", 0).is_err());
    }
}

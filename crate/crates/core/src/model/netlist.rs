use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::device::SiteKind;

/// Primitive cell type of an instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CellKind {
    Lut,
    Ff,
    Carry,
    Mux,
    Lutram,
    Dsp,
    Bram,
    Io,
}

impl CellKind {
    pub const ALL: [CellKind; 8] =
        [CellKind::Lut, CellKind::Ff, CellKind::Carry, CellKind::Mux, CellKind::Lutram, CellKind::Dsp, CellKind::Bram, CellKind::Io];

    /// Cells that live in CLB sites and go through site packing.
    pub fn is_clb(self) -> bool {
        matches!(self, CellKind::Lut | CellKind::Ff | CellKind::Carry | CellKind::Mux | CellKind::Lutram)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CellKind::Lut => "LUT",
            CellKind::Ff => "FF",
            CellKind::Carry => "CARRY",
            CellKind::Mux => "MUX",
            CellKind::Lutram => "LUTRAM",
            CellKind::Dsp => "DSP",
            CellKind::Bram => "BRAM",
            CellKind::Io => "IO",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MacroKind {
    CarryChain,
    MuxTree,
    LutramGroup,
    DspCascade,
    BramCascade,
}

impl fmt::Display for MacroKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MacroKind::CarryChain => "CARRY_CHAIN",
            MacroKind::MuxTree => "MUX_TREE",
            MacroKind::LutramGroup => "LUTRAM_GROUP",
            MacroKind::DspCascade => "DSP_CASCADE",
            MacroKind::BramCascade => "BRAM_CASCADE",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PinRole {
    Driver,
    Sink,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    /// Identifier used in files. Internal code addresses instances by position.
    pub id: u32,
    pub name: String,
    pub kind: CellKind,
    pub macro_id: Option<usize>,
    /// Site offset (dx, dy) from the macro anchor; (0, 0) outside macros.
    pub offset: (i32, i32),
    pub fixed: bool,
    pub timing_start: bool,
    pub timing_end: bool,
    /// Location of a fixed instance.
    pub loc: Option<(f64, f64)>,
}

impl Instance {
    pub fn is_endpoint(&self) -> bool {
        self.timing_start || self.timing_end
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pin {
    pub inst: usize,
    pub role: PinRole,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Net {
    pub id: u32,
    pub weight: f64,
    pub pins: Vec<Pin>,
}

impl Net {
    pub fn driver(&self) -> usize {
        self.pins.iter().find(|p| p.role == PinRole::Driver).map(|p| p.inst).expect("validated net has a driver")
    }

    pub fn sinks(&self) -> impl Iterator<Item = usize> + '_ {
        self.pins.iter().filter(|p| p.role == PinRole::Sink).map(|p| p.inst)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Macro {
    pub id: u32,
    pub kind: MacroKind,
    /// Site column type the macro must occupy.
    pub column: SiteKind,
    pub members: Vec<usize>,
    /// Number of consecutive sites spanned.
    pub height: u32,
}

/// Hypergraph of instances and nets.
#[derive(Clone, Debug)]
pub struct Netlist {
    pub instances: Vec<Instance>,
    pub nets: Vec<Net>,
    pub macros: Vec<Macro>,
    pub clock_period_ns: f64,
    inst_nets: Vec<Vec<usize>>,
    fanout: Vec<Vec<usize>>,
    fanin: Vec<Vec<usize>>,
}

impl Netlist {
    /// Builds and validates a netlist. Instance, net and macro references are
    /// dense indices.
    pub fn new(instances: Vec<Instance>, nets: Vec<Net>, macros: Vec<Macro>, clock_period_ns: f64) -> Result<Self> {
        let n = instances.len();
        if !(clock_period_ns > 0.0) {
            return Err(Error::Schema(format!("clock_period_ns must be positive, got {clock_period_ns}")));
        }
        let mut seen = HashMap::new();
        for (i, inst) in instances.iter().enumerate() {
            if let Some(prev) = seen.insert(inst.id, i) {
                return Err(Error::Schema(format!("instance id {} used twice (positions {prev} and {i})", inst.id)));
            }
            if inst.macro_id.is_none() && inst.offset != (0, 0) {
                return Err(Error::Schema(format!("instance {} has an offset but no macro", inst.id)));
            }
            if let Some(m) = inst.macro_id {
                if m >= macros.len() {
                    return Err(Error::DanglingReference(format!("instance {} refers to macro index {m}", inst.id)));
                }
            }
            if inst.fixed && inst.loc.is_none() {
                return Err(Error::Schema(format!("fixed instance {} has no loc", inst.id)));
            }
        }
        for net in &nets {
            let drivers = net.pins.iter().filter(|p| p.role == PinRole::Driver).count();
            if drivers != 1 {
                return Err(Error::Schema(format!("net {} has {drivers} drivers", net.id)));
            }
            if net.pins.len() < 2 {
                return Err(Error::Schema(format!("net {} has no sink", net.id)));
            }
            if !(net.weight > 0.0) {
                return Err(Error::Schema(format!("net {} weight must be positive", net.id)));
            }
            if let Some(p) = net.pins.iter().find(|p| p.inst >= n) {
                return Err(Error::DanglingReference(format!("net {} pin refers to instance index {}", net.id, p.inst)));
            }
        }
        let mut owner: Vec<Option<usize>> = vec![None; n];
        for (mi, m) in macros.iter().enumerate() {
            if m.members.is_empty() {
                return Err(Error::Schema(format!("macro {} has no members", m.id)));
            }
            let mut max_dy = 0;
            for &inst in &m.members {
                if inst >= n {
                    return Err(Error::DanglingReference(format!("macro {} member index {inst}", m.id)));
                }
                if let Some(prev) = owner[inst] {
                    return Err(Error::DuplicateMacroMember { inst: instances[inst].id, first: macros[prev].id, second: m.id });
                }
                owner[inst] = Some(mi);
                let it = &instances[inst];
                if it.macro_id != Some(mi) {
                    return Err(Error::Schema(format!("instance {} listed in macro {} but annotated with another macro", it.id, m.id)));
                }
                if it.offset.0 != 0 || it.offset.1 < 0 {
                    return Err(Error::Schema(format!(
                        "macro {} member {} must sit in the same column at a non-negative row offset",
                        m.id, it.id
                    )));
                }
                max_dy = max_dy.max(it.offset.1);
            }
            if m.height != max_dy as u32 + 1 {
                return Err(Error::Schema(format!("macro {} height {} does not match member span {}", m.id, m.height, max_dy + 1)));
            }
        }
        for (i, inst) in instances.iter().enumerate() {
            if inst.macro_id.is_some() && owner[i].is_none() {
                return Err(Error::Schema(format!("instance {} annotated with a macro that does not list it", inst.id)));
            }
        }

        let mut inst_nets = vec![Vec::new(); n];
        let mut fanout = vec![Vec::new(); n];
        let mut fanin = vec![Vec::new(); n];
        for (ni, net) in nets.iter().enumerate() {
            for p in &net.pins {
                if inst_nets[p.inst].last() != Some(&ni) {
                    inst_nets[p.inst].push(ni);
                }
            }
            let d = net.driver();
            for s in net.sinks() {
                if s != d {
                    fanout[d].push(s);
                    fanin[s].push(d);
                }
            }
        }
        for v in fanout.iter_mut().chain(fanin.iter_mut()) {
            v.sort_unstable();
            v.dedup();
        }
        Ok(Netlist { instances, nets, macros, clock_period_ns, inst_nets, fanout, fanin })
    }

    pub fn num_instances(&self) -> usize {
        self.instances.len()
    }

    /// Nets touching an instance.
    pub fn nets_of(&self, inst: usize) -> &[usize] {
        &self.inst_nets[inst]
    }

    /// Distinct direct fanout instances.
    pub fn fanout(&self, inst: usize) -> &[usize] {
        &self.fanout[inst]
    }

    pub fn fanin(&self, inst: usize) -> &[usize] {
        &self.fanin[inst]
    }

    /// Number of net pins on an instance.
    pub fn pin_count(&self, inst: usize) -> usize {
        self.inst_nets[inst].iter().map(|&n| self.nets[n].pins.iter().filter(|p| p.inst == inst).count()).sum()
    }

    /// Macro kind shared by two instances, if they belong to the same macro.
    pub fn shared_macro(&self, a: usize, b: usize) -> Option<MacroKind> {
        match (self.instances[a].macro_id, self.instances[b].macro_id) {
            (Some(x), Some(y)) if x == y => Some(self.macros[x].kind),
            _ => None,
        }
    }
}

//! JSON file formats for netlists, devices and placement results.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::device::{Column, DeviceGrid, Rect, SiteKind};
use crate::model::netlist::{CellKind, Instance, Macro, MacroKind, Net, Netlist, Pin, PinRole};
use crate::model::placement::PlacementState;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceRecord {
    pub id: u32,
    pub name: String,
    pub kind: CellKind,
    #[serde(rename = "macro", default)]
    pub macro_id: Option<u32>,
    #[serde(default)]
    pub offset: [i32; 2],
    #[serde(default)]
    pub fixed: bool,
    #[serde(default)]
    pub tstart: bool,
    #[serde(default)]
    pub tend: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loc: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinRecord {
    pub inst: u32,
    pub role: PinRole,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetRecord {
    pub id: u32,
    #[serde(default = "unit_weight")]
    pub weight: f64,
    pub pins: Vec<PinRecord>,
}

fn unit_weight() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacroRecord {
    pub id: u32,
    pub kind: MacroKind,
    pub column: SiteKind,
    pub height: u32,
    pub members: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetlistFile {
    pub instances: Vec<InstanceRecord>,
    pub nets: Vec<NetRecord>,
    #[serde(default)]
    pub macros: Vec<MacroRecord>,
    pub clock_period_ns: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceFile {
    pub width: u32,
    pub height: u32,
    pub columns: Vec<Column>,
    #[serde(default)]
    pub blockages: Vec<[u32; 4]>,
}

impl NetlistFile {
    pub fn into_netlist(self) -> Result<Netlist> {
        let mut inst_index = HashMap::with_capacity(self.instances.len());
        for (i, r) in self.instances.iter().enumerate() {
            if inst_index.insert(r.id, i).is_some() {
                return Err(Error::Schema(format!("duplicate instance id {}", r.id)));
            }
        }
        let mut macro_index = HashMap::with_capacity(self.macros.len());
        for (i, m) in self.macros.iter().enumerate() {
            if macro_index.insert(m.id, i).is_some() {
                return Err(Error::Schema(format!("duplicate macro id {}", m.id)));
            }
        }
        let resolve_inst = |id: u32, ctx: &str| {
            inst_index.get(&id).copied().ok_or_else(|| Error::DanglingReference(format!("{ctx} refers to unknown instance {id}")))
        };

        let mut instances = Vec::with_capacity(self.instances.len());
        for r in self.instances {
            let macro_id = match r.macro_id {
                None => None,
                Some(m) => Some(
                    *macro_index
                        .get(&m)
                        .ok_or_else(|| Error::DanglingReference(format!("instance {} refers to unknown macro {m}", r.id)))?,
                ),
            };
            instances.push(Instance {
                id: r.id,
                name: r.name,
                kind: r.kind,
                macro_id,
                offset: (r.offset[0], r.offset[1]),
                fixed: r.fixed,
                timing_start: r.tstart,
                timing_end: r.tend,
                loc: r.loc.map(|[x, y]| (x, y)),
            });
        }
        let mut nets = Vec::with_capacity(self.nets.len());
        for n in self.nets {
            let ctx = format!("net {}", n.id);
            let pins = n.pins.iter().map(|p| Ok(Pin { inst: resolve_inst(p.inst, &ctx)?, role: p.role })).collect::<Result<Vec<_>>>()?;
            nets.push(Net { id: n.id, weight: n.weight, pins });
        }
        let mut macros = Vec::with_capacity(self.macros.len());
        for m in self.macros {
            let ctx = format!("macro {}", m.id);
            let members = m.members.iter().map(|&i| resolve_inst(i, &ctx)).collect::<Result<Vec<_>>>()?;
            macros.push(Macro { id: m.id, kind: m.kind, column: m.column, members, height: m.height });
        }
        Netlist::new(instances, nets, macros, self.clock_period_ns)
    }

    pub fn from_netlist(netlist: &Netlist) -> Self {
        let instances = netlist
            .instances
            .iter()
            .map(|i| InstanceRecord {
                id: i.id,
                name: i.name.clone(),
                kind: i.kind,
                macro_id: i.macro_id.map(|m| netlist.macros[m].id),
                offset: [i.offset.0, i.offset.1],
                fixed: i.fixed,
                tstart: i.timing_start,
                tend: i.timing_end,
                loc: i.loc.map(|(x, y)| [x, y]),
            })
            .collect();
        let nets = netlist
            .nets
            .iter()
            .map(|n| NetRecord {
                id: n.id,
                weight: n.weight,
                pins: n.pins.iter().map(|p| PinRecord { inst: netlist.instances[p.inst].id, role: p.role }).collect(),
            })
            .collect();
        let macros = netlist
            .macros
            .iter()
            .map(|m| MacroRecord {
                id: m.id,
                kind: m.kind,
                column: m.column,
                height: m.height,
                members: m.members.iter().map(|&i| netlist.instances[i].id).collect(),
            })
            .collect();
        NetlistFile { instances, nets, macros, clock_period_ns: netlist.clock_period_ns }
    }
}

impl DeviceFile {
    pub fn into_device(self) -> Result<DeviceGrid> {
        let blockages = self.blockages.iter().map(|&[x0, y0, x1, y1]| Rect { x0, y0, x1, y1 }).collect();
        DeviceGrid::new(self.width, self.height, self.columns, blockages)
    }

    pub fn from_device(device: &DeviceGrid) -> Self {
        DeviceFile {
            width: device.width,
            height: device.height,
            columns: device.columns.clone(),
            blockages: device.blockages.iter().map(|b| [b.x0, b.y0, b.x1, b.y1]).collect(),
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

/// Canonical serialization used for every file this crate writes.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json_string(value)?).map_err(|e| Error::io(path, e))
}

pub fn parse_netlist(text: &str) -> Result<Netlist> {
    let file: NetlistFile = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    file.into_netlist()
}

pub fn parse_device(text: &str) -> Result<DeviceGrid> {
    let file: DeviceFile = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    file.into_device()
}

/// Reads and validates a netlist and device pair.
pub fn load_design(netlist_file: &Path, device_file: &Path) -> Result<(Netlist, DeviceGrid)> {
    let netlist = read_json::<NetlistFile>(netlist_file)?.into_netlist()?;
    let device = read_json::<DeviceFile>(device_file)?.into_device()?;
    Ok((netlist, device))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstancePlacement {
    pub x: f64,
    pub y: f64,
    pub site: Option<String>,
    pub slot: Option<u16>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub hpwl: f64,
    pub wns: f64,
    pub tns: f64,
    pub cpd: f64,
    pub runtime_s: f64,
}

/// Placement output: one entry per instance id, plus a `metrics` block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacementFile {
    #[serde(flatten)]
    pub instances: BTreeMap<String, InstancePlacement>,
    pub metrics: Metrics,
}

impl PlacementFile {
    pub fn new(netlist: &Netlist, device: &DeviceGrid, placement: &PlacementState, metrics: Metrics) -> Self {
        let instances = netlist
            .instances
            .iter()
            .enumerate()
            .map(|(i, inst)| {
                let (x, y) = placement.xy[i];
                let b = placement.binding[i];
                let entry = InstancePlacement { x, y, site: b.map(|b| device.site_name(b.site)), slot: b.map(|b| b.slot) };
                (inst.id.to_string(), entry)
            })
            .collect();
        PlacementFile { instances, metrics }
    }
}

//! Legalization by packing: rigid groups onto columns, free CLB cells into
//! sites, then BEL slots inside every site.

pub mod bels;
pub mod macros;
pub mod score;
pub mod sites;
pub mod usage;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floorplan::PathLengthInfo;
use crate::model::{DeviceGrid, Netlist, PlacementState, SiteId};
use crate::timing::{DelayModelParams, TimingGraph};

pub use bels::assign_bels;
pub use macros::{legalize_macros, rigid_groups, MacroLegalization, RigidGroup};
pub use score::{marginal_gain, score_amf, score_utp};
pub use sites::{pack_sites, packable};
pub use usage::{slot_kind_of, SiteUsage};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PackConfig {
    pub theta: f64,
    pub gamma: f64,
    /// Initial bidding radius in sites; grows by one per round.
    pub radius: usize,
    pub rounds: usize,
    /// Search nodes per site for slot assignment.
    pub bel_budget: usize,
}

impl Default for PackConfig {
    fn default() -> Self {
        PackConfig { theta: 0.01, gamma: 0.05, radius: 3, rounds: 64, bel_budget: 2000 }
    }
}

#[derive(Clone, Debug)]
pub struct PackResult {
    pub placement: PlacementState,
    pub macro_displacement: f64,
}

/// Site of the cell under a fixed instance's location.
fn fixed_site(device: &DeviceGrid, (x, y): (f64, f64)) -> Option<SiteId> {
    if x < 0.0 || y < 0.0 {
        return None;
    }
    device.site_at(x as u32, y as u32)
}

/// Turns a global placement into a fully bound one.
pub fn pack(
    netlist: &Netlist,
    device: &DeviceGrid,
    xy: &[(f64, f64)],
    graph: &TimingGraph,
    delay: &DelayModelParams,
    info: &PathLengthInfo,
    cfg: &PackConfig,
) -> Result<PackResult> {
    let n = netlist.num_instances();
    let groups = rigid_groups(netlist, xy);
    let leg = legalize_macros(netlist, device, &groups)?;
    let mut usage = leg.usage.clone();
    let mut site_of = leg.site_of.clone();
    for (i, inst) in netlist.instances.iter().enumerate() {
        if !inst.fixed {
            continue;
        }
        let loc = inst.loc.expect("validated");
        match fixed_site(device, loc) {
            Some(s) if usage.fits(device, s, [inst.kind]) => {
                usage.add(s, [inst.kind]);
                site_of[i] = Some(s);
            }
            _ => return Err(Error::InfeasibleSpec(format!("fixed instance {} has no free {} slot at {:?}", inst.name, inst.kind, loc))),
        }
    }
    let packed = pack_sites(netlist, device, xy, info, &mut usage, cfg)?;
    for (i, s) in packed.into_iter().enumerate() {
        if s.is_some() {
            site_of[i] = s;
        }
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); device.sites().len()];
    for (i, s) in site_of.iter().enumerate() {
        match s {
            Some(s) => members[s.index()].push(i),
            None => return Err(Error::Unpackable { count: 1, rounds: 0, detail: netlist.instances[i].name.clone() }),
        }
    }
    let mut snapshot = xy.to_vec();
    for (i, s) in site_of.iter().enumerate() {
        snapshot[i] = match netlist.instances[i].loc {
            Some(loc) if netlist.instances[i].fixed => loc,
            _ => device.site_center(s.expect("bound")),
        };
    }
    let slots: Vec<Result<Vec<usize>>> = members
        .par_iter()
        .enumerate()
        .map(|(s, m)| {
            if m.is_empty() {
                return Ok(Vec::new());
            }
            assign_bels(netlist, device, SiteId(s as u32), m, graph, delay, &snapshot, cfg.bel_budget)
        })
        .collect();
    let mut placement = PlacementState::new(n);
    placement.xy = xy.to_vec();
    for (s, res) in slots.into_iter().enumerate() {
        for (&i, slot) in members[s].iter().zip(res?) {
            placement.bind(device, i, SiteId(s as u32), slot);
        }
    }
    placement.apply_fixed(netlist);
    Ok(PackResult { placement, macro_displacement: leg.displacement })
}

//! Cluster scores for site packing.

use crate::floorplan::PathLengthInfo;
use crate::model::{Net, Netlist};

use super::PackConfig;

/// HPWL of a net with the pins of `members` moved to `at`.
fn moved_hpwl(net: &Net, xy: &[(f64, f64)], members: &[usize], at: (f64, f64)) -> f64 {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in &net.pins {
        let (x, y) = if members.contains(&p.inst) { at } else { xy[p.inst] };
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    net.weight * ((x1 - x0) + (y1 - y0))
}

fn touching(netlist: &Netlist, members: &[usize]) -> Vec<usize> {
    let mut nets: Vec<usize> = members.iter().flat_map(|&m| netlist.nets_of(m).iter().copied()).collect();
    nets.sort_unstable();
    nets.dedup();
    nets
}

/// Internal-pin ratio over the nets touching the cluster, minus `theta`
/// times the wirelength increase of moving the cluster onto the site.
pub fn score_utp(netlist: &Netlist, members: &[usize], site_xy: (f64, f64), xy: &[(f64, f64)], theta: f64) -> f64 {
    let mut s = 0.0;
    for n in touching(netlist, members) {
        let net = &netlist.nets[n];
        let p = net.pins.len();
        let internal = net.pins.iter().filter(|q| members.contains(&q.inst)).count();
        if p > 1 {
            s += (internal - 1) as f64 / (p - 1) as f64;
        }
        s -= theta * (moved_hpwl(net, xy, members, site_xy) - moved_hpwl(net, xy, &[], site_xy));
    }
    s
}

/// `score_utp` plus `gamma` times the summed longest-path lengths of the
/// members.
pub fn score_amf(
    netlist: &Netlist,
    members: &[usize],
    site_xy: (f64, f64),
    xy: &[(f64, f64)],
    info: &PathLengthInfo,
    cfg: &PackConfig,
) -> f64 {
    score_utp(netlist, members, site_xy, xy, cfg.theta) + cfg.gamma * members.iter().map(|&m| info.max_path_len[m] as f64).sum::<f64>()
}

/// Score change from adding `v` to `members` (which must not contain it).
pub fn marginal_gain(
    netlist: &Netlist,
    members: &[usize],
    v: usize,
    site_xy: (f64, f64),
    xy: &[(f64, f64)],
    info: &PathLengthInfo,
    cfg: &PackConfig,
    scratch: &mut Vec<usize>,
) -> f64 {
    scratch.clear();
    scratch.extend_from_slice(members);
    scratch.push(v);
    let mut g = cfg.gamma * info.max_path_len[v] as f64;
    for &n in netlist.nets_of(v) {
        let net = &netlist.nets[n];
        let p = net.pins.len();
        let k = net.pins.iter().filter(|q| members.contains(&q.inst)).count();
        let kv = net.pins.iter().filter(|q| q.inst == v).count();
        let (old_t, old_h) =
            if k > 0 { ((k - 1) as f64, moved_hpwl(net, xy, members, site_xy)) } else { (0.0, moved_hpwl(net, xy, &[], site_xy)) };
        let new_t = (k + kv - 1) as f64;
        if p > 1 {
            g += (new_t - old_t) / (p - 1) as f64;
        }
        g -= cfg.theta * (moved_hpwl(net, xy, scratch, site_xy) - old_h);
    }
    g
}

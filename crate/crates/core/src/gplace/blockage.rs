//! Guiding long-path clusters into one placement region.

use crate::error::{Error, Result};
use crate::floorplan::PathLengthInfo;
use crate::model::{DeviceGrid, Netlist, RegionRef};

#[derive(Clone, Debug, PartialEq)]
pub struct BlockageCluster {
    pub members: Vec<usize>,
    pub target: Option<usize>,
}

/// Horizontal pull of one instance toward the centre of its target region.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockageAnchor {
    pub inst: usize,
    pub region: usize,
    pub x: f64,
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StretchRecord {
    pub region: usize,
    /// Instances guided to the region but currently outside it.
    pub n_outside: usize,
    /// Instances inside the region that are not guided elsewhere.
    pub n_inside: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BlockagePlan {
    pub clusters: Vec<BlockageCluster>,
    pub anchors: Vec<BlockageAnchor>,
    pub stretch: Vec<StretchRecord>,
    /// Target region of each instance, if guided.
    pub target: Vec<Option<usize>>,
}

/// Weight of a blockage anchor: `beta * |x - x_anchor| * pins`.
pub fn blockage_weight(beta: f64, x: f64, x_anchor: f64, pins: usize) -> f64 {
    beta * (x - x_anchor).abs() * pins as f64
}

/// Clusters the successors of long-path instances by depth-first search and
/// guides each cluster that already has a majority in one region toward
/// that region.
pub fn plan_blockage(
    netlist: &Netlist,
    info: &PathLengthInfo,
    device: &DeviceGrid,
    xy: &[(f64, f64)],
    threshold_len: u32,
    beta_anchor: f64,
    max_cluster: usize,
) -> BlockagePlan {
    let n = netlist.num_instances();
    let region: Vec<Option<usize>> = xy
        .iter()
        .map(|&(x, y)| match device.region_of_clamped(x, y) {
            RegionRef::Region(r) => Some(r),
            RegionRef::Blockage => None,
        })
        .collect();
    let mut taken = vec![false; n];
    let mut tried = vec![false; n];
    let mut plan = BlockagePlan { target: vec![None; n], ..BlockagePlan::default() };
    let usable = |v: usize, taken: &[bool]| !taken[v] && !netlist.instances[v].fixed;
    let mut stack = Vec::new();
    let mut in_cluster = vec![false; n];
    // longest paths first, each from its head
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        info.max_path_len[b].cmp(&info.max_path_len[a]).then(info.dist_to_start[a].cmp(&info.dist_to_start[b])).then(a.cmp(&b))
    });
    for v in order {
        if info.max_path_len[v] <= threshold_len {
            break;
        }
        if tried[v] || !usable(v, &taken) {
            continue;
        }
        let mut members = Vec::new();
        stack.push(v);
        while let Some(u) = stack.pop() {
            if in_cluster[u] || members.len() >= max_cluster {
                continue;
            }
            in_cluster[u] = true;
            members.push(u);
            for &w in netlist.fanout(u).iter().rev() {
                if usable(w, &taken) && !in_cluster[w] {
                    stack.push(w);
                }
            }
        }
        stack.clear();
        for &m in &members {
            in_cluster[m] = false;
            tried[m] = true;
        }
        let mut counts = vec![0usize; device.regions().len()];
        for &m in &members {
            if let Some(r) = region[m] {
                counts[r] += 1;
            }
        }
        let target = counts.iter().position(|&c| 2 * c > members.len());
        if let Some(r) = target {
            let cx = device.regions()[r].center_x();
            for &m in &members {
                taken[m] = true;
                plan.target[m] = Some(r);
                let w = blockage_weight(beta_anchor, xy[m].0, cx, netlist.pin_count(m));
                plan.anchors.push(BlockageAnchor { inst: m, region: r, x: cx, weight: w });
            }
        }
        plan.clusters.push(BlockageCluster { members, target });
    }

    for r in 0..device.regions().len() {
        let n_outside = (0..n).filter(|&i| plan.target[i] == Some(r) && region[i] != Some(r)).count();
        if n_outside == 0 {
            continue;
        }
        let n_inside =
            (0..n).filter(|&i| region[i] == Some(r) && plan.target[i].map_or(true, |t| t == r) && !netlist.instances[i].fixed).count();
        plan.stretch.push(StretchRecord { region: r, n_outside, n_inside });
    }
    plan
}

/// Vertical stretch of the instances inside a region, making room for
/// `n_outside` incoming ones. The span `[y_b, y_t]` of the given
/// coordinates grows by `n_outside / n_inside` of its height, half on each
/// side; coordinates map linearly and the result is shifted (or, if it is
/// taller than `[lo, hi]`, scaled) back into `[lo, hi]`.
pub fn stretch_region(ys: &mut [f64], n_outside: usize, lo: f64, hi: f64) -> Result<()> {
    if ys.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let dr = n_outside as f64 / ys.len() as f64;
    let yb = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let yt = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let h = yt - yb;
    if h <= 0.0 || dr == 0.0 {
        return Ok(());
    }
    let mut nt = yt + dr * h / 2.0;
    let mut nb = yb - dr * h / 2.0;
    if nt - nb > hi - lo {
        nb = lo;
        nt = hi;
    } else if nb < lo {
        nt += lo - nb;
        nb = lo;
    } else if nt > hi {
        nb -= nt - hi;
        nt = hi;
    }
    for y in ys.iter_mut() {
        *y = nb + (*y - yb) / h * (nt - nb);
    }
    Ok(())
}

use crate::error::Result;
use crate::model::Netlist;
use crate::timing::graph::levelize;

/// Longest timing-path extents through each instance, in hops.
///
/// Paths run between endpoints (timing starts or ends) through non-endpoint
/// interiors. A non-endpoint with no fanin or no fanout terminates a path.
#[derive(Clone, Debug, PartialEq)]
pub struct PathLengthInfo {
    /// Hops from the farthest path start.
    pub dist_to_start: Vec<u32>,
    /// Hops to the farthest path end.
    pub dist_to_end: Vec<u32>,
    /// Instances on the longest path through each instance.
    pub max_path_len: Vec<u32>,
}

impl PathLengthInfo {
    pub fn longest(&self) -> u32 {
        self.max_path_len.iter().copied().max().unwrap_or(0)
    }
}

pub fn compute_path_lengths(netlist: &Netlist) -> Result<PathLengthInfo> {
    let n = netlist.num_instances();
    let endpoint: Vec<bool> = netlist.instances.iter().map(|i| i.is_endpoint()).collect();
    let names: Vec<String> = netlist.instances.iter().map(|i| i.name.clone()).collect();
    let interior_preds: Vec<Vec<usize>> = (0..n)
        .map(|v| if endpoint[v] { Vec::new() } else { netlist.fanin(v).iter().copied().filter(|&u| !endpoint[u]).collect() })
        .collect();
    let level = levelize(&interior_preds, &names)?;
    let mut order: Vec<usize> = (0..n).filter(|&v| !endpoint[v]).collect();
    order.sort_by_key(|&v| (level[v], v));

    let through = |v: usize, d: &[u32]| if endpoint[v] { 0 } else { d[v] };
    let mut bwd = vec![0u32; n];
    for &v in &order {
        bwd[v] = netlist.fanin(v).iter().map(|&u| 1 + through(u, &bwd)).max().unwrap_or(0);
    }
    let mut fwd = vec![0u32; n];
    for &v in order.iter().rev() {
        fwd[v] = netlist.fanout(v).iter().map(|&w| 1 + through(w, &fwd)).max().unwrap_or(0);
    }
    for v in (0..n).filter(|&v| endpoint[v]) {
        bwd[v] = netlist.fanin(v).iter().map(|&u| 1 + through(u, &bwd)).max().unwrap_or(0);
        fwd[v] = netlist.fanout(v).iter().map(|&w| 1 + through(w, &fwd)).max().unwrap_or(0);
    }
    let max_path_len = (0..n).map(|v| if endpoint[v] { bwd[v].max(fwd[v]) + 1 } else { bwd[v] + fwd[v] + 1 }).collect();
    Ok(PathLengthInfo { dist_to_start: bwd, dist_to_end: fwd, max_path_len })
}

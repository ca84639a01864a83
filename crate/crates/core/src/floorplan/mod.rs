//! Coarse floorplanning: path-length clustering, partitioning and annealed
//! assignment of partitions to device bins.

pub mod anneal;
pub mod partition;
pub mod paths;

use crate::model::Netlist;

pub use anneal::{build_bins, sa_floorplan, seed_placement, AnnealConfig, Floorplan, FloorplanBin};
pub use partition::{partition, PartitionConfig};
pub use paths::{compute_path_lengths, PathLengthInfo};

/// Disjoint instance clusters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClusterSet {
    pub cluster_of: Vec<Option<usize>>,
    pub clusters: Vec<Vec<usize>>,
}

impl ClusterSet {
    pub fn empty(num_instances: usize) -> Self {
        ClusterSet { cluster_of: vec![None; num_instances], clusters: Vec::new() }
    }
}

/// Instances ordered by longest path through them, then by distance from
/// the path start, both descending. Ties keep index order.
pub fn path_order(info: &PathLengthInfo) -> Vec<usize> {
    let mut order: Vec<usize> = (0..info.max_path_len.len()).collect();
    order.sort_by(|&a, &b| {
        info.max_path_len[b].cmp(&info.max_path_len[a]).then(info.dist_to_start[b].cmp(&info.dist_to_start[a])).then(a.cmp(&b))
    });
    order
}

/// Groups each of the top `top_fraction` instances of the path order with
/// its still-unclustered direct fanouts. Fixed instances never join a
/// cluster, and single-instance groups are dropped.
pub fn cluster_by_fanout(netlist: &Netlist, info: &PathLengthInfo, top_fraction: f64) -> ClusterSet {
    let n = netlist.num_instances();
    let mut set = ClusterSet::empty(n);
    let take = ((n as f64) * top_fraction.clamp(0.0, 1.0)).floor() as usize;
    let free = |v: usize, set: &ClusterSet| set.cluster_of[v].is_none() && !netlist.instances[v].fixed;
    for &v in path_order(info).iter().take(take) {
        if !free(v, &set) {
            continue;
        }
        let mut members = vec![v];
        members.extend(netlist.fanout(v).iter().copied().filter(|&w| free(w, &set)));
        if members.len() < 2 {
            continue;
        }
        let id = set.clusters.len();
        for &m in &members {
            set.cluster_of[m] = Some(id);
        }
        set.clusters.push(members);
    }
    set
}

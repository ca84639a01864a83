//! Recursive min-cut bisection with Fiduccia-Mattheyses refinement.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floorplan::ClusterSet;
use crate::model::Netlist;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartitionConfig {
    /// Number of partitions.
    pub k: usize,
    /// Random initial bisections tried per split.
    pub starts: usize,
    /// Allowed deviation of each final partition from an even split.
    pub balance: f64,
    pub max_passes: usize,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig { k: 32, starts: 4, balance: 0.1, max_passes: 8 }
    }
}

/// Weighted hypergraph over contracted nodes.
#[derive(Clone, Debug)]
pub(crate) struct Hypergraph {
    pub weight: Vec<u64>,
    pub nets: Vec<Vec<u32>>,
    pub node_nets: Vec<Vec<u32>>,
}

impl Hypergraph {
    pub fn new(weight: Vec<u64>, mut nets: Vec<Vec<u32>>) -> Self {
        for n in nets.iter_mut() {
            n.sort_unstable();
            n.dedup();
        }
        nets.retain(|n| n.len() >= 2);
        let mut node_nets = vec![Vec::new(); weight.len()];
        for (i, n) in nets.iter().enumerate() {
            for &v in n {
                node_nets[v as usize].push(i as u32);
            }
        }
        Hypergraph { weight, nets, node_nets }
    }

    #[cfg(test)]
    pub fn cut(&self, side: &[u8]) -> usize {
        self.nets.iter().filter(|n| n.iter().any(|&v| side[v as usize] != side[n[0] as usize])).count()
    }
}

/// Assigns each movable instance one of `cfg.k` partitions. Members of a
/// cluster or a macro always share a partition; fixed instances get `None`.
pub fn partition(netlist: &Netlist, clusters: &ClusterSet, cfg: &PartitionConfig, rng: &mut impl Rng) -> Result<Vec<Option<usize>>> {
    let n = netlist.num_instances();
    let movable: Vec<usize> = (0..n).filter(|&i| !netlist.instances[i].fixed).collect();
    if cfg.k == 0 || cfg.k > movable.len() {
        return Err(Error::PartitionCount { k: cfg.k, instances: movable.len() });
    }

    // contract clusters and macros
    let mut uf: Vec<usize> = (0..n).collect();
    fn find(uf: &mut [usize], mut v: usize) -> usize {
        while uf[v] != v {
            uf[v] = uf[uf[v]];
            v = uf[v];
        }
        v
    }
    let groups = clusters.clusters.iter().chain(netlist.macros.iter().map(|m| &m.members));
    for g in groups {
        for w in g.windows(2) {
            let (a, b) = (find(&mut uf, w[0]), find(&mut uf, w[1]));
            if a != b {
                uf[a.max(b)] = a.min(b);
            }
        }
    }
    let mut node_of = vec![u32::MAX; n];
    let mut root_node = vec![u32::MAX; n];
    let mut weight = Vec::new();
    for &i in &movable {
        let r = find(&mut uf, i);
        if root_node[r] == u32::MAX {
            root_node[r] = weight.len() as u32;
            weight.push(0);
        }
        node_of[i] = root_node[r];
        weight[root_node[r] as usize] += 1;
    }
    let nets = netlist.nets.iter().map(|net| net.pins.iter().map(|p| node_of[p.inst]).filter(|&v| v != u32::MAX).collect()).collect();
    let h = Hypergraph::new(weight, nets);

    let depth = (cfg.k as f64).log2().ceil().max(1.0);
    let eps = (1.0 + cfg.balance).powf(1.0 / depth) - 1.0;
    let mut part = vec![0usize; h.weight.len()];
    let nodes: Vec<u32> = (0..h.weight.len() as u32).collect();
    split(&h, nodes, cfg.k, 0, eps, cfg, rng, &mut part);

    let mut out = vec![None; n];
    for &i in &movable {
        out[i] = Some(part[node_of[i] as usize]);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn split(h: &Hypergraph, nodes: Vec<u32>, k: usize, base: usize, eps: f64, cfg: &PartitionConfig, rng: &mut impl Rng, part: &mut [usize]) {
    if k == 1 || nodes.len() <= 1 {
        for v in nodes {
            part[v as usize] = base;
        }
        return;
    }
    let k0 = k / 2;
    let (sub, local) = restrict(h, &nodes);
    let total: u64 = sub.weight.iter().sum();
    let target0 = total as f64 * k0 as f64 / k as f64;
    let dev = (eps * target0).max(0.5);
    let side = bisect(&sub, target0, dev, cfg.starts.max(1), cfg.max_passes, rng);
    let (mut left, mut right) = (Vec::new(), Vec::new());
    for (li, &v) in local.iter().enumerate() {
        if side[li] == 0 {
            left.push(v);
        } else {
            right.push(v);
        }
    }
    split(h, left, k0, base, eps, cfg, rng, part);
    split(h, right, k - k0, base + k0, eps, cfg, rng, part);
}

/// Sub-hypergraph induced by `nodes`; returns it with the local-to-global map.
fn restrict(h: &Hypergraph, nodes: &[u32]) -> (Hypergraph, Vec<u32>) {
    let mut local = vec![u32::MAX; h.weight.len()];
    for (li, &v) in nodes.iter().enumerate() {
        local[v as usize] = li as u32;
    }
    let mut seen = vec![false; h.nets.len()];
    let mut nets = Vec::new();
    for &v in nodes {
        for &ni in &h.node_nets[v as usize] {
            if !std::mem::replace(&mut seen[ni as usize], true) {
                nets.push(h.nets[ni as usize].iter().map(|&u| local[u as usize]).filter(|&u| u != u32::MAX).collect());
            }
        }
    }
    (Hypergraph::new(nodes.iter().map(|&v| h.weight[v as usize]).collect(), nets), nodes.to_vec())
}

/// Ranking of a bisection: balanced first, then fewer cut nets, then
/// smaller imbalance.
fn score(cut: usize, w0: u64, target0: f64, dev: f64) -> (bool, usize, u64) {
    let off = (w0 as f64 - target0).abs();
    (off > dev + 1e-9, cut, (off * 1024.0) as u64)
}

/// Two-way split of `h` with side 0 weighing about `target0`.
pub(crate) fn bisect(h: &Hypergraph, target0: f64, dev: f64, starts: usize, max_passes: usize, rng: &mut impl Rng) -> Vec<u8> {
    let mut best: Option<((bool, usize, u64), Vec<u8>)> = None;
    for _ in 0..starts {
        let mut order: Vec<usize> = (0..h.weight.len()).collect();
        order.shuffle(rng);
        let mut side = vec![1u8; h.weight.len()];
        let mut w0 = 0u64;
        for v in order {
            if (w0 + h.weight[v]) as f64 <= target0 + dev {
                side[v] = 0;
                w0 += h.weight[v];
            }
        }
        let mut fm = Fm::new(h, side, target0, dev);
        for _ in 0..max_passes {
            if !fm.pass() {
                break;
            }
        }
        let s = score(fm.cut, fm.w0, target0, dev);
        if best.as_ref().map_or(true, |(b, _)| s < *b) {
            best = Some((s, fm.side));
        }
    }
    best.expect("at least one start").1
}

struct Fm<'a> {
    h: &'a Hypergraph,
    side: Vec<u8>,
    count: Vec<[u32; 2]>,
    gain: Vec<i64>,
    locked: Vec<bool>,
    w0: u64,
    cut: usize,
    target0: f64,
    dev: f64,
    wmax: u64,
}

impl<'a> Fm<'a> {
    fn new(h: &'a Hypergraph, side: Vec<u8>, target0: f64, dev: f64) -> Self {
        let mut count = vec![[0u32; 2]; h.nets.len()];
        for (ni, net) in h.nets.iter().enumerate() {
            for &v in net {
                count[ni][side[v as usize] as usize] += 1;
            }
        }
        let w0 = (0..h.weight.len()).filter(|&v| side[v] == 0).map(|v| h.weight[v]).sum();
        let cut = count.iter().filter(|c| c[0] > 0 && c[1] > 0).count();
        let wmax = h.weight.iter().copied().max().unwrap_or(0);
        let n = h.weight.len();
        Fm { h, side, count, gain: vec![0; n], locked: vec![false; n], w0, cut, target0, dev, wmax }
    }

    fn contribution(&self, v: usize, ni: usize) -> i64 {
        let s = self.side[v] as usize;
        let c = self.count[ni];
        (c[s] == 1) as i64 - (c[1 - s] == 0) as i64
    }

    fn apply(&mut self, v: usize, heap: &mut BinaryHeap<(i64, Reverse<u32>)>) {
        let from = self.side[v] as usize;
        let to = 1 - from;
        for &ni in &self.h.node_nets[v] {
            let ni = ni as usize;
            let c = self.count[ni];
            let affects = matches!(c[from], 1 | 2) || matches!(c[to], 0 | 1);
            if affects {
                for &u in &self.h.nets[ni] {
                    let u = u as usize;
                    if u != v && !self.locked[u] {
                        self.gain[u] -= self.contribution(u, ni);
                    }
                }
            }
            let was_cut = c[0] > 0 && c[1] > 0;
            self.count[ni][from] -= 1;
            self.count[ni][to] += 1;
            let c = self.count[ni];
            let is_cut = c[0] > 0 && c[1] > 0;
            match (was_cut, is_cut) {
                (true, false) => self.cut -= 1,
                (false, true) => self.cut += 1,
                _ => {}
            }
            if affects {
                for &u in &self.h.nets[ni] {
                    let u = u as usize;
                    if u != v && !self.locked[u] {
                        self.gain[u] += self.contribution(u, ni);
                        heap.push((self.gain[u], Reverse(u as u32)));
                    }
                }
            }
        }
        self.side[v] = to as u8;
        if to == 0 {
            self.w0 += self.h.weight[v];
        } else {
            self.w0 -= self.h.weight[v];
        }
    }

    /// One FM pass; keeps the best prefix of moves. Returns whether the
    /// partition improved.
    fn pass(&mut self) -> bool {
        let n = self.h.weight.len();
        self.locked.iter_mut().for_each(|l| *l = false);
        for v in 0..n {
            self.gain[v] = self.h.node_nets[v].iter().map(|&ni| self.contribution(v, ni as usize)).sum();
        }
        let mut heap: BinaryHeap<(i64, Reverse<u32>)> = (0..n).map(|v| (self.gain[v], Reverse(v as u32))).collect();
        let start = score(self.cut, self.w0, self.target0, self.dev);
        let mut best = start;
        let mut best_len = 0;
        let mut moves = Vec::new();
        let lo = self.target0 - self.dev - self.wmax as f64;
        let hi = self.target0 + self.dev + self.wmax as f64;
        let mut deferred = Vec::new();
        while let Some((g, Reverse(v))) = heap.pop() {
            let v = v as usize;
            if self.locked[v] || g != self.gain[v] {
                continue;
            }
            let w = self.h.weight[v];
            let new_w0 = if self.side[v] == 0 { self.w0 - w } else { self.w0 + w } as f64;
            if new_w0 < lo || new_w0 > hi {
                deferred.push((g, Reverse(v as u32)));
                continue;
            }
            self.locked[v] = true;
            self.apply(v, &mut heap);
            moves.push(v);
            heap.extend(deferred.drain(..));
            let s = score(self.cut, self.w0, self.target0, self.dev);
            if s < best {
                best = s;
                best_len = moves.len();
            }
        }
        for &v in moves[best_len..].iter().rev() {
            self.locked[v] = true;
            self.undo(v);
        }
        best < start
    }

    fn undo(&mut self, v: usize) {
        let from = self.side[v] as usize;
        let to = 1 - from;
        for &ni in &self.h.node_nets[v] {
            let ni = ni as usize;
            let was_cut = self.count[ni][0] > 0 && self.count[ni][1] > 0;
            self.count[ni][from] -= 1;
            self.count[ni][to] += 1;
            let is_cut = self.count[ni][0] > 0 && self.count[ni][1] > 0;
            match (was_cut, is_cut) {
                (true, false) => self.cut -= 1,
                (false, true) => self.cut += 1,
                _ => {}
            }
        }
        self.side[v] = to as u8;
        if to == 0 {
            self.w0 += self.h.weight[v];
        } else {
            self.w0 -= self.h.weight[v];
        }
    }
}

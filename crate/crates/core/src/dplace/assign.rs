//! Shortest path through the layered candidate graph of one timing path.

use crate::model::DeviceGrid;
use crate::timing::{DelayModelParams, PinLoc, StaState, TimingGraph};

use super::candidates::{CandidateMap, Move};

/// Minimum of `unary[l][c] + pair(l, i, j)` summed along one choice per
/// layer, where `pair(l, i, j)` joins candidate `i` of layer `l - 1` to
/// candidate `j` of layer `l`. Ties keep the lower candidate index.
pub fn layered_shortest_path(unary: &[Vec<f64>], pair: impl Fn(usize, usize, usize) -> f64) -> (Vec<usize>, f64) {
    if unary.is_empty() {
        return (Vec::new(), 0.0);
    }
    let mut cost = unary[0].clone();
    let mut back: Vec<Vec<usize>> = vec![Vec::new()];
    for l in 1..unary.len() {
        let mut next = vec![f64::INFINITY; unary[l].len()];
        let mut from = vec![0; unary[l].len()];
        for (j, u) in unary[l].iter().enumerate() {
            for (i, &c) in cost.iter().enumerate() {
                let v = c + pair(l, i, j) + u;
                if v < next[j] {
                    next[j] = v;
                    from[j] = i;
                }
            }
        }
        cost = next;
        back.push(from);
    }
    let (mut j, best) = cost.iter().enumerate().fold((0, f64::INFINITY), |b, (j, &c)| if c < b.1 { (j, c) } else { b });
    let mut choice = vec![0; unary.len()];
    for l in (0..unary.len()).rev() {
        choice[l] = j;
        if l > 0 {
            j = back[l][j];
        }
    }
    (choice, best)
}

/// Everything needed to price a candidate assignment of one path.
pub struct PathCost<'a> {
    pub graph: &'a TimingGraph,
    pub params: &'a DelayModelParams,
    pub device: &'a DeviceGrid,
    pub sta: &'a StaState,
    /// Current pin locations of all instances.
    pub locs: &'a [PinLoc],
    /// Delay other paths may reach before they count against a move.
    pub limit: f64,
}

/// Result of a path optimization.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub choice: Vec<usize>,
    pub cost: f64,
    /// Cost of keeping every layer where it is.
    pub current: f64,
}

impl PathCost<'_> {
    fn loc_of(&self, moves: &[Move], v: usize) -> PinLoc {
        match moves.iter().find(|m| m.0 == v) {
            Some(&(_, s, k)) => {
                let (x, y) = self.device.slot_xy(s, k);
                PinLoc { x, y, region: self.device.region_of_clamped(x, y) }
            }
            None => self.locs[v],
        }
    }

    /// Largest delay over the edges from `u` to `v`.
    fn link(&self, u: usize, pu: PinLoc, v: usize, pv: PinLoc) -> f64 {
        self.graph
            .out_edges(u)
            .iter()
            .filter(|&&e| self.graph.edges[e].dst == v)
            .map(|&e| self.params.eval(pu, pv, self.graph.edges[e].cascade))
            .fold(0.0, f64::max)
    }

    /// Logic delays and inner path edges of a layer, plus the excess over
    /// `limit` of the longest paths through its edges to instances outside
    /// the map.
    fn unary(&self, map: &CandidateMap, l: usize, c: usize) -> f64 {
        let layer = &map.layers[l];
        let moves = &layer.cands[c].moves;
        let mut cost: f64 = layer.path.iter().map(|&v| self.graph.t_logic[v]).sum();
        for w in layer.path.windows(2) {
            cost += self.link(w[0], self.loc_of(moves, w[0]), w[1], self.loc_of(moves, w[1]));
        }
        let inside = |v: usize| map.layers.iter().any(|l| l.insts.contains(&v));
        for &(i, _, _) in moves {
            let here = self.loc_of(moves, i);
            for (&e, out) in self.graph.in_edges(i).iter().map(|e| (e, false)).chain(self.graph.out_edges(i).iter().map(|e| (e, true))) {
                let edge = self.graph.edges[e];
                let other = if out { edge.dst } else { edge.src };
                if inside(other) || !self.sta.slack[e].is_finite() {
                    continue;
                }
                let d = if out {
                    self.params.eval(here, self.locs[other], edge.cascade)
                } else {
                    self.params.eval(self.locs[other], here, edge.cascade)
                };
                let through = self.graph.clock_period - self.sta.slack[e] - self.sta.t_net[e] + d;
                cost += (through - self.limit).max(0.0);
            }
        }
        cost
    }

    fn pair(&self, map: &CandidateMap, l: usize, i: usize, j: usize) -> f64 {
        let (a, b) = (&map.layers[l - 1], &map.layers[l]);
        let u = *a.path.last().expect("nonempty layer");
        let v = b.path[0];
        self.link(u, self.loc_of(&a.cands[i].moves, u), v, self.loc_of(&b.cands[j].moves, v))
    }

    /// Cost of one full choice, computed directly.
    pub fn evaluate(&self, map: &CandidateMap, choice: &[usize]) -> f64 {
        let mut cost = 0.0;
        for l in 0..map.layers.len() {
            cost += self.unary(map, l, choice[l]);
            if l > 0 {
                cost += self.pair(map, l, choice[l - 1], choice[l]);
            }
        }
        cost
    }
}

/// Picks one candidate per layer minimizing path delay plus the boundary
/// excess of the moved instances.
pub fn shortest_path_assign(map: &CandidateMap, pc: &PathCost) -> Assignment {
    let unary: Vec<Vec<f64>> =
        map.layers.iter().enumerate().map(|(l, layer)| (0..layer.cands.len()).map(|c| pc.unary(map, l, c)).collect()).collect();
    let (choice, cost) = layered_shortest_path(&unary, |l, i, j| pc.pair(map, l, i, j));
    let current = pc.evaluate(map, &vec![0; map.layers.len()]);
    Assignment { choice, cost, current }
}

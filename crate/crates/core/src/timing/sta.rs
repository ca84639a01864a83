use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{DeviceGrid, PlacementState};
use crate::timing::delay::{DelayModelParams, PinLoc};
use crate::timing::graph::{TimingEdge, TimingGraph};

/// Levels smaller than this are swept sequentially.
const PAR_LEVEL_MIN: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingMetrics {
    pub wns: f64,
    pub tns: f64,
    pub cpd: f64,
    /// Percentile of the negative slacks used as the criticality threshold.
    pub t_thr: f64,
}

/// Arrival, required and slack values from one analysis.
#[derive(Clone, Debug, PartialEq)]
pub struct StaState {
    pub t_arr: Vec<f64>,
    pub t_req: Vec<f64>,
    /// Latest signal arrival at each vertex input over all in-edges,
    /// including edges into timing starts. 0 without fanin.
    pub input_arr: Vec<f64>,
    pub t_net: Vec<f64>,
    pub slack: Vec<f64>,
    pub metrics: TimingMetrics,
    n_thr: f64,
}

/// Pin locations for every instance at its current coordinates.
pub fn pin_locs(device: &DeviceGrid, placement: &PlacementState) -> Vec<PinLoc> {
    placement.xy.iter().map(|&(x, y)| PinLoc { x, y, region: device.region_of_clamped(x, y) }).collect()
}

pub fn net_delays(graph: &TimingGraph, params: &DelayModelParams, locs: &[PinLoc]) -> Vec<f64> {
    graph.edges.iter().map(|e| params.eval(locs[e.src], locs[e.dst], e.cascade)).collect()
}

/// Full analysis with net delays from the delay model.
pub fn run_sta(graph: &TimingGraph, params: &DelayModelParams, locs: &[PinLoc], n_thr: f64) -> StaState {
    StaState::from_net_delays(graph, net_delays(graph, params, locs), n_thr)
}

impl StaState {
    /// Full analysis with the given per-edge net delays.
    pub fn from_net_delays(graph: &TimingGraph, t_net: Vec<f64>, n_thr: f64) -> StaState {
        assert_eq!(t_net.len(), graph.edges.len());
        let n = graph.num_vertices();
        let mut st = StaState {
            t_arr: vec![0.0; n],
            t_req: vec![f64::INFINITY; n],
            input_arr: vec![0.0; n],
            t_net,
            slack: vec![0.0; graph.edges.len()],
            metrics: TimingMetrics { wns: 0.0, tns: 0.0, cpd: 0.0, t_thr: 0.0 },
            n_thr,
        };
        for level in &graph.levels {
            let vals = sweep(level, |v| st.arrival_of(graph, v));
            for (&v, (arr, inp)) in level.iter().zip(vals) {
                st.t_arr[v] = arr;
                st.input_arr[v] = inp;
            }
        }
        for v in 0..n {
            if graph.is_start[v] {
                st.input_arr[v] = st.input_of(graph, v);
            }
        }
        for level in &graph.heights {
            let vals = sweep(level, |v| st.required_of(graph, v));
            for (&v, req) in level.iter().zip(vals) {
                st.t_req[v] = req;
            }
        }
        for e in 0..graph.edges.len() {
            st.slack[e] = st.edge_slack(graph, e);
        }
        st.metrics = st.compute_metrics(graph);
        st
    }

    fn input_of(&self, graph: &TimingGraph, v: usize) -> f64 {
        let ins = graph.in_edges(v);
        if ins.is_empty() {
            return 0.0;
        }
        ins.iter().fold(f64::NEG_INFINITY, |m, &e| {
            let u = graph.edges[e].src;
            m.max(self.t_arr[u] + graph.t_logic[u] + self.t_net[e])
        })
    }

    /// (T_arr, input arrival) of a non-start vertex, or (0, _) for a start.
    fn arrival_of(&self, graph: &TimingGraph, v: usize) -> (f64, f64) {
        let inp = self.input_of(graph, v);
        (if graph.is_start[v] { 0.0 } else { inp }, inp)
    }

    fn required_of(&self, graph: &TimingGraph, v: usize) -> f64 {
        if graph.is_end[v] {
            return graph.clock_period;
        }
        let m = graph.out_edges(v).iter().fold(f64::INFINITY, |m, &e| m.min(self.t_req[graph.edges[e].dst] - self.t_net[e]));
        m - graph.t_logic[v]
    }

    fn edge_slack(&self, graph: &TimingGraph, e: usize) -> f64 {
        let TimingEdge { src, dst, .. } = graph.edges[e];
        self.t_req[dst] - self.t_arr[src] - graph.t_logic[src] - self.t_net[e]
    }

    fn compute_metrics(&self, graph: &TimingGraph) -> TimingMetrics {
        let mut wns = f64::INFINITY;
        let mut tns = 0.0;
        let mut neg = Vec::new();
        for &s in &self.slack {
            wns = wns.min(s);
            if s < 0.0 {
                tns += s;
                neg.push(s);
            }
        }
        if !wns.is_finite() {
            // nothing constrained
            wns = graph.clock_period;
        }
        let mut cpd = 0.0f64;
        for v in 0..graph.num_vertices() {
            if graph.is_end[v] {
                cpd = cpd.max(self.input_arr[v] + graph.t_logic[v]);
            }
        }
        TimingMetrics { wns, tns, cpd, t_thr: percentile(&mut neg, self.n_thr) }
    }

    /// Re-analyses after the instances in `moved` changed location. The
    /// result is identical to a full run on the new locations.
    pub fn update(&mut self, graph: &TimingGraph, params: &DelayModelParams, locs: &[PinLoc], moved: &[usize]) {
        let n = graph.num_vertices();
        let mut edge_dirty = vec![false; graph.edges.len()];
        let mut changed_edges = Vec::new();
        for &v in moved {
            for &e in graph.in_edges(v).iter().chain(graph.out_edges(v)) {
                if edge_dirty[e] {
                    continue;
                }
                edge_dirty[e] = true;
                let edge = graph.edges[e];
                let d = params.eval(locs[edge.src], locs[edge.dst], edge.cascade);
                if d != self.t_net[e] {
                    self.t_net[e] = d;
                    changed_edges.push(e);
                }
            }
        }
        if changed_edges.is_empty() {
            return;
        }

        // forward
        let mut slack_dirty = vec![false; graph.edges.len()];
        let mut queued = vec![false; n];
        let mut by_level: Vec<Vec<usize>> = vec![Vec::new(); graph.levels.len()];
        let mut starts = Vec::new();
        let enqueue_fwd = |v: usize, queued: &mut Vec<bool>, by_level: &mut Vec<Vec<usize>>, starts: &mut Vec<usize>| {
            if !queued[v] {
                queued[v] = true;
                if graph.is_start[v] {
                    starts.push(v);
                } else {
                    by_level[graph.level[v] as usize].push(v);
                }
            }
        };
        for &e in &changed_edges {
            slack_dirty[e] = true;
            enqueue_fwd(graph.edges[e].dst, &mut queued, &mut by_level, &mut starts);
        }
        for l in 0..by_level.len() {
            let level = std::mem::take(&mut by_level[l]);
            for v in level {
                let (arr, inp) = self.arrival_of(graph, v);
                self.input_arr[v] = inp;
                if arr != self.t_arr[v] {
                    self.t_arr[v] = arr;
                    for &e in graph.out_edges(v) {
                        slack_dirty[e] = true;
                        enqueue_fwd(graph.edges[e].dst, &mut queued, &mut by_level, &mut starts);
                    }
                }
            }
        }
        for v in starts {
            self.input_arr[v] = self.input_of(graph, v);
        }

        // backward
        let mut queued = vec![false; n];
        let mut by_height: Vec<Vec<usize>> = vec![Vec::new(); graph.heights.len()];
        for &e in &changed_edges {
            let u = graph.edges[e].src;
            if !queued[u] {
                queued[u] = true;
                by_height[graph.height[u] as usize].push(u);
            }
        }
        for h in 0..by_height.len() {
            let bucket = std::mem::take(&mut by_height[h]);
            for v in bucket {
                let req = self.required_of(graph, v);
                if req != self.t_req[v] {
                    self.t_req[v] = req;
                    for &e in graph.in_edges(v) {
                        slack_dirty[e] = true;
                        let u = graph.edges[e].src;
                        if graph.is_required_edge(e) && !queued[u] {
                            queued[u] = true;
                            by_height[graph.height[u] as usize].push(u);
                        }
                    }
                }
            }
        }

        for (e, dirty) in slack_dirty.into_iter().enumerate() {
            if dirty {
                self.slack[e] = self.edge_slack(graph, e);
            }
        }
        self.metrics = self.compute_metrics(graph);
    }

    /// Edges with negative slack, in edge order.
    pub fn negative_edges(&self) -> Vec<usize> {
        (0..self.slack.len()).filter(|&e| self.slack[e] < 0.0).collect()
    }

    /// The `count` slowest timing paths, each listed from its start vertex to
    /// its end vertex. Ends are ranked by input arrival plus own logic delay.
    pub fn critical_paths(&self, graph: &TimingGraph, count: usize) -> Vec<Vec<usize>> {
        let mut ends: Vec<usize> = (0..graph.num_vertices()).filter(|&v| graph.is_end[v]).collect();
        ends.sort_by(|&a, &b| {
            let ka = self.input_arr[a] + graph.t_logic[a];
            let kb = self.input_arr[b] + graph.t_logic[b];
            kb.total_cmp(&ka).then(a.cmp(&b))
        });
        ends.truncate(count);
        ends.into_iter().map(|end| self.trace_back(graph, end)).collect()
    }

    fn trace_back(&self, graph: &TimingGraph, end: usize) -> Vec<usize> {
        let mut path = vec![end];
        let mut v = end;
        let mut first = true;
        loop {
            if !first && graph.is_start[v] {
                break;
            }
            first = false;
            let best = graph
                .in_edges(v)
                .iter()
                .copied()
                .filter(|&e| graph.is_arrival_edge(e) || v == end)
                .map(|e| (e, self.t_arr[graph.edges[e].src] + graph.t_logic[graph.edges[e].src] + self.t_net[e]))
                .fold(None, |b: Option<(usize, f64)>, (e, a)| match b {
                    Some((_, ba)) if ba >= a => b,
                    _ => Some((e, a)),
                });
            let Some((e, _)) = best else { break };
            v = graph.edges[e].src;
            if path.contains(&v) {
                break;
            }
            path.push(v);
        }
        path.reverse();
        path
    }
}

fn sweep<T: Send, F: Fn(usize) -> T + Sync>(level: &[usize], f: F) -> Vec<T> {
    if level.len() >= PAR_LEVEL_MIN {
        level.par_iter().map(|&v| f(v)).collect()
    } else {
        level.iter().map(|&v| f(v)).collect()
    }
}

/// Linear-interpolated percentile of the given values. Empty input yields a
/// tiny negative number so the threshold stays below zero.
pub fn percentile(values: &mut [f64], pct: f64) -> f64 {
    if values.is_empty() {
        return -1e-9;
    }
    values.sort_by(f64::total_cmp);
    let pos = pct / 100.0 * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    values[lo] + (pos - lo as f64) * (values[hi] - values[lo])
}

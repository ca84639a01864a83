use crate::error::{Error, Result};
use crate::model::{MacroKind, Netlist};
use crate::timing::LogicDelays;

/// Driver-to-sink connection of one net.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimingEdge {
    pub src: usize,
    pub dst: usize,
    pub net: usize,
    /// Set when both ends share a macro, so the cascade deduction applies.
    pub cascade: Option<MacroKind>,
}

/// Levelized timing DAG over instances.
///
/// Two orderings are kept. Arrival propagation ignores edges into timing
/// starts; required-time propagation ignores edges out of timing ends. Both
/// resulting graphs must be acyclic.
#[derive(Clone, Debug)]
pub struct TimingGraph {
    pub edges: Vec<TimingEdge>,
    pub t_logic: Vec<f64>,
    pub is_start: Vec<bool>,
    pub is_end: Vec<bool>,
    pub clock_period: f64,
    pub(crate) names: Vec<String>,
    pub(crate) in_edges: Vec<Vec<usize>>,
    pub(crate) out_edges: Vec<Vec<usize>>,
    /// Arrival level: 0 for vertices with no arrival predecessor.
    pub(crate) level: Vec<u32>,
    pub(crate) levels: Vec<Vec<usize>>,
    /// Required height: 0 for vertices with no required successor.
    pub(crate) height: Vec<u32>,
    pub(crate) heights: Vec<Vec<usize>>,
}

impl TimingGraph {
    pub fn from_netlist(netlist: &Netlist, logic: &LogicDelays) -> Result<Self> {
        let mut edges = Vec::new();
        for (ni, net) in netlist.nets.iter().enumerate() {
            let d = net.driver();
            for s in net.sinks() {
                if s != d {
                    edges.push(TimingEdge { src: d, dst: s, net: ni, cascade: netlist.shared_macro(d, s) });
                }
            }
        }
        let inst = &netlist.instances;
        TimingGraph::from_parts(
            inst.iter().map(|i| i.name.clone()).collect(),
            inst.iter().map(|i| logic.get(i.kind)).collect(),
            inst.iter().map(|i| i.timing_start).collect(),
            inst.iter().map(|i| i.timing_end).collect(),
            edges,
            netlist.clock_period_ns,
        )
    }

    /// Builds a graph from raw vertex attributes and edges.
    pub fn from_parts(
        names: Vec<String>,
        t_logic: Vec<f64>,
        is_start: Vec<bool>,
        is_end: Vec<bool>,
        edges: Vec<TimingEdge>,
        clock_period: f64,
    ) -> Result<Self> {
        let n = names.len();
        assert!(t_logic.len() == n && is_start.len() == n && is_end.len() == n);
        let mut in_edges = vec![Vec::new(); n];
        let mut out_edges = vec![Vec::new(); n];
        for (e, edge) in edges.iter().enumerate() {
            if edge.src >= n || edge.dst >= n {
                return Err(Error::DanglingReference(format!("timing edge {e} refers to a missing vertex")));
            }
            out_edges[edge.src].push(e);
            in_edges[edge.dst].push(e);
        }
        let arr_pred = |v: usize| -> Vec<usize> {
            if is_start[v] {
                Vec::new()
            } else {
                in_edges[v].iter().map(|&e| edges[e].src).collect()
            }
        };
        let preds: Vec<Vec<usize>> = (0..n).map(arr_pred).collect();
        let level = levelize(&preds, &names)?;
        let succs: Vec<Vec<usize>> =
            (0..n).map(|v| if is_end[v] { Vec::new() } else { out_edges[v].iter().map(|&e| edges[e].dst).collect() }).collect();
        let height = levelize(&succs, &names)?;
        Ok(TimingGraph {
            levels: buckets(&level),
            heights: buckets(&height),
            edges,
            t_logic,
            is_start,
            is_end,
            clock_period,
            names,
            in_edges,
            out_edges,
            level,
            height,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.t_logic.len()
    }

    pub fn in_edges(&self, v: usize) -> &[usize] {
        &self.in_edges[v]
    }

    pub fn out_edges(&self, v: usize) -> &[usize] {
        &self.out_edges[v]
    }

    /// Arrival-propagation level of a vertex.
    pub fn topo_level(&self, v: usize) -> u32 {
        self.level[v]
    }

    pub fn name(&self, v: usize) -> &str {
        &self.names[v]
    }

    /// True when the edge feeds arrival propagation (its sink is not a start).
    pub(crate) fn is_arrival_edge(&self, e: usize) -> bool {
        !self.is_start[self.edges[e].dst]
    }

    /// True when the edge feeds required-time propagation (its source is not an end).
    pub(crate) fn is_required_edge(&self, e: usize) -> bool {
        !self.is_end[self.edges[e].src]
    }
}

/// Longest-path level of each vertex given its dependencies, or a cycle
/// witness in dependency order.
pub(crate) fn levelize(deps: &[Vec<usize>], names: &[String]) -> Result<Vec<u32>> {
    let n = deps.len();
    let mut rdeps = vec![Vec::new(); n];
    let mut pending: Vec<usize> = deps.iter().map(Vec::len).collect();
    for (v, ds) in deps.iter().enumerate() {
        for &d in ds {
            rdeps[d].push(v);
        }
    }
    let mut level = vec![0u32; n];
    let mut queue: Vec<usize> = (0..n).filter(|&v| pending[v] == 0).collect();
    let mut head = 0;
    while head < queue.len() {
        let v = queue[head];
        head += 1;
        for &w in &rdeps[v] {
            level[w] = level[w].max(level[v] + 1);
            pending[w] -= 1;
            if pending[w] == 0 {
                queue.push(w);
            }
        }
    }
    if queue.len() == n {
        return Ok(level);
    }
    // Every unresolved vertex has an unresolved dependency, so walking them
    // must revisit a vertex.
    let mut pos = vec![usize::MAX; n];
    let mut walk = Vec::new();
    let mut v = (0..n).find(|&v| pending[v] > 0).expect("unresolved vertex");
    while pos[v] == usize::MAX {
        pos[v] = walk.len();
        walk.push(v);
        v = *deps[v].iter().find(|&&d| pending[d] > 0).expect("unresolved dependency");
    }
    let mut cycle: Vec<String> = walk[pos[v]..].iter().rev().map(|&u| names[u].clone()).collect();
    cycle.push(cycle[0].clone());
    Err(Error::TimingCycle { witness: cycle })
}

fn buckets(level: &[u32]) -> Vec<Vec<usize>> {
    let depth = level.iter().max().map_or(0, |&l| l as usize + 1);
    let mut out = vec![Vec::new(); depth];
    for (v, &l) in level.iter().enumerate() {
        out[l as usize].push(v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, starts: &[usize], ends: &[usize], edges: &[(usize, usize)]) -> Result<TimingGraph> {
        TimingGraph::from_parts(
            (0..n).map(|i| format!("v{i}")).collect(),
            vec![1.0; n],
            (0..n).map(|i| starts.contains(&i)).collect(),
            (0..n).map(|i| ends.contains(&i)).collect(),
            edges.iter().map(|&(src, dst)| TimingEdge { src, dst, net: 0, cascade: None }).collect(),
            10.0,
        )
    }

    #[test]
    fn levels_respect_arrival_edges() {
        let g = graph(4, &[0], &[3], &[(0, 1), (1, 2), (0, 2), (2, 3)]).unwrap();
        for e in &g.edges {
            assert!(g.topo_level(e.src) < g.topo_level(e.dst));
        }
        assert_eq!(g.topo_level(3), 3);
    }

    #[test]
    fn register_breaks_feedback() {
        // 0 is a register that is both start and end
        let g = graph(3, &[0], &[0], &[(0, 1), (1, 2), (2, 0)]).unwrap();
        assert_eq!(g.topo_level(0), 0);
        assert_eq!(g.topo_level(2), 2);
    }

    #[test]
    fn combinational_loop_reports_witness() {
        let err = graph(4, &[0], &[3], &[(0, 1), (1, 2), (2, 1), (2, 3)]).unwrap_err();
        match err {
            Error::TimingCycle { witness } => {
                assert_eq!(witness.first(), witness.last());
                let mut inner: Vec<_> = witness[..witness.len() - 1].to_vec();
                inner.sort();
                assert_eq!(inner, vec!["v1", "v2"]);
            }
            other => panic!("unexpected {other}"),
        }
    }
}

//! Pseudo nets: legalization anchors, blockage anchors and timing edges.

use crate::timing::{StaState, TimingConfig, TimingGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PseudoKind {
    Legalize,
    Blockage,
    Timing,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PseudoEnd {
    Inst(usize),
    /// Fixed point; a `None` coordinate leaves that axis unconstrained.
    Anchor {
        x: Option<f64>,
        y: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PseudoNet {
    pub kind: PseudoKind,
    pub inst: usize,
    pub other: PseudoEnd,
    pub weight: f64,
}

/// Criticality of a timing edge.
///
/// Zero for non-negative slack, otherwise `(1 - slack / dly_max)^C` with
/// `C = max(alpha, beta_crit * slack / t_thr)`. With `wns_aware` off the
/// exponent is the constant `alpha`.
pub fn criticality_weight(slack: f64, cfg: &TimingConfig, t_thr: f64, dly_max: f64, wns_aware: bool) -> f64 {
    if !(slack < 0.0) {
        return 0.0;
    }
    let c = if wns_aware { cfg.alpha.max(cfg.beta_crit * slack / t_thr) } else { cfg.alpha };
    (1.0 - slack / dly_max).powf(c)
}

/// One pin-to-pin pseudo net per negative-slack timing edge.
pub fn build_timing_pseudonets(graph: &TimingGraph, sta: &StaState, cfg: &TimingConfig, wns_aware: bool) -> Vec<PseudoNet> {
    sta.negative_edges()
        .into_iter()
        .filter_map(|e| {
            let edge = graph.edges[e];
            let w = criticality_weight(sta.slack[e], cfg, sta.metrics.t_thr, graph.clock_period, wns_aware);
            (w > 0.0).then_some(PseudoNet { kind: PseudoKind::Timing, inst: edge.src, other: PseudoEnd::Inst(edge.dst), weight: w })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::timing::TimingEdge;

    #[test]
    fn non_negative_slack_has_no_weight() {
        let cfg = TimingConfig::default();
        assert_eq!(criticality_weight(0.3, &cfg, -1.0, 5.0, true), 0.0);
        assert_eq!(criticality_weight(0.0, &cfg, -1.0, 5.0, true), 0.0);
    }

    #[test]
    fn worst_case_substitution() {
        let cfg = TimingConfig::default();
        let w = criticality_weight(-4.0, &cfg, -4.0, 4.0, true);
        assert!((w - 8.0).abs() < 1e-12);
        let w = criticality_weight(-4.0, &cfg, -4.0, 4.0, false);
        assert!((w - 2f64.powf(0.9)).abs() < 1e-12);
    }

    #[test]
    fn monotone_in_slack() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let cfg = TimingConfig { alpha: rng.gen_range(0.1..2.0), beta_crit: rng.gen_range(0.1..5.0), n_thr: 30.0 };
            let t_thr = -rng.gen_range(0.01..3.0);
            let d = rng.gen_range(0.5..10.0);
            let mut prev = f64::INFINITY;
            for k in 0..400 {
                let s = -3.0 * d + k as f64 * (3.0 * d) / 400.0;
                let w = criticality_weight(s, &cfg, t_thr, d, true);
                assert!(w > 0.0 && w <= prev);
                prev = w;
            }
        }
    }

    #[test]
    fn one_pseudo_net_per_negative_edge() {
        let g = TimingGraph::from_parts(
            vec!["a".into(), "b".into(), "c".into()],
            vec![0.0; 3],
            vec![true, false, false],
            vec![false, false, true],
            vec![TimingEdge { src: 0, dst: 1, net: 0, cascade: None }, TimingEdge { src: 1, dst: 2, net: 1, cascade: None }],
            1.0,
        )
        .unwrap();
        let cfg = TimingConfig::default();
        let sta = StaState::from_net_delays(&g, vec![0.0, 0.5], cfg.n_thr);
        assert!(build_timing_pseudonets(&g, &sta, &cfg, true).is_empty());
        let sta = StaState::from_net_delays(&g, vec![1.0, 1.0], cfg.n_thr);
        let nets = build_timing_pseudonets(&g, &sta, &cfg, true);
        assert_eq!(nets.len(), sta.negative_edges().len());
        assert_eq!(nets[0].weight, criticality_weight(sta.slack[0], &cfg, sta.metrics.t_thr, 1.0, true));
    }
}

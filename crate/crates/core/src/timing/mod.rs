//! Net-delay model, logic delays and static timing analysis.

pub mod delay;
pub mod graph;
pub mod sta;

use serde::{Deserialize, Serialize};

use crate::model::CellKind;

pub use delay::{eval_net_delay, fit_delay_model, DelayFit, DelayModelParams, DelaySample, FitConfig, PinLoc};
pub use graph::{TimingEdge, TimingGraph};
pub use sta::{net_delays, pin_locs, run_sta, StaState, TimingMetrics};

/// Intrinsic delay of each cell kind, in ns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogicDelays {
    pub lut: f64,
    pub ff: f64,
    pub carry: f64,
    pub mux: f64,
    pub lutram: f64,
    pub dsp: f64,
    pub bram: f64,
    pub io: f64,
}

impl Default for LogicDelays {
    fn default() -> Self {
        LogicDelays { lut: 0.1, ff: 0.1, carry: 0.05, mux: 0.05, lutram: 0.3, dsp: 0.8, bram: 0.9, io: 0.2 }
    }
}

impl LogicDelays {
    pub fn get(&self, kind: CellKind) -> f64 {
        match kind {
            CellKind::Lut => self.lut,
            CellKind::Ff => self.ff,
            CellKind::Carry => self.carry,
            CellKind::Mux => self.mux,
            CellKind::Lutram => self.lutram,
            CellKind::Dsp => self.dsp,
            CellKind::Bram => self.bram,
            CellKind::Io => self.io,
        }
    }
}

/// Criticality weighting parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimingConfig {
    /// Lower bound of the criticality exponent.
    pub alpha: f64,
    /// Scale of the slack-dependent exponent.
    pub beta_crit: f64,
    /// Percentile of negative slacks used as the threshold, in percent.
    pub n_thr: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig { alpha: 0.9, beta_crit: 3.0, n_thr: 30.0 }
    }
}

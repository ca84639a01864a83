use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema violation: {0}")]
    Schema(String),

    #[error("dangling reference: {0}")]
    DanglingReference(String),

    #[error("instance {inst} is a member of macros {first} and {second}")]
    DuplicateMacroMember { inst: u32, first: u32, second: u32 },

    #[error("coordinate ({x}, {y}) lies outside the {width}x{height} grid")]
    OutOfGrid { x: f64, y: f64, width: u32, height: u32 },

    #[error("delay-model interval {interval} has a rank-deficient design matrix")]
    RankDeficient { interval: usize },

    #[error("delay-model interval {interval} has {found} samples, need at least {needed}")]
    InsufficientSamples { interval: usize, found: usize, needed: usize },

    #[error("timing cycle not cut by an endpoint: {}", format_witness(.witness))]
    TimingCycle { witness: Vec<String> },

    #[error("partition count {k} is invalid for {instances} instances")]
    PartitionCount { k: usize, instances: usize },

    #[error("demand for {resource} ({demand}) exceeds device capacity ({capacity})")]
    CapacityExceeded { resource: String, demand: f64, capacity: f64 },

    #[error("region stretch needs at least one inside instance")]
    EmptyRegion,

    #[error("no legal column position for macro {macro_id} ({kind})")]
    MacroLegalization { macro_id: u32, kind: String },

    #[error("{count} instances left unpacked after {rounds} rounds; first: {detail}")]
    Unpackable { count: usize, rounds: usize, detail: String },

    #[error("no kind-compatible slot assignment for site {site}")]
    NoCompatibleAssignment { site: String },

    #[error("illegal detailed-placement move: {0}")]
    IllegalMove(String),

    #[error("infeasible benchmark specification: {0}")]
    InfeasibleSpec(String),

    #[error("{phase}: {source}")]
    Phase {
        phase: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn format_witness(w: &[String]) -> String {
    w.join(" -> ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn in_phase(self, phase: &'static str) -> Self {
        Error::Phase { phase, source: Box::new(self) }
    }

    /// True for errors caused by an input that cannot be placed at all
    /// (as opposed to a failure inside one of the placement phases).
    pub fn is_infeasible(&self) -> bool {
        match self {
            Error::CapacityExceeded { .. } | Error::InfeasibleSpec(_) | Error::MacroLegalization { .. } => true,
            Error::Phase { source, .. } => source.is_infeasible(),
            _ => false,
        }
    }
}

//! End-to-end placement flow, benchmark generation and rendering.

pub mod bench;
pub mod svg;

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dplace::{detailed_place, DpContext, DpIteration, DpSchedule};
use crate::error::{Error, Result};
use crate::floorplan::{
    build_bins, cluster_by_fanout, compute_path_lengths, partition, sa_floorplan, seed_placement, AnnealConfig, ClusterSet, PartitionConfig,
};
use crate::gplace::{global_place, GpConfig, GpContext, GpIteration};
use crate::model::{check_legality, hpwl, DeviceGrid, Metrics, Netlist, PlacementFile, PlacementState};
use crate::pack::{pack, PackConfig};
use crate::timing::{pin_locs, run_sta, DelayModelParams, LogicDelays, StaState, TimingGraph};

pub use bench::{gen_benchmark, BenchSpec};
pub use svg::{render_svg, write_svg};

/// Phases to run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Phases {
    pub floorplan: bool,
    pub global: bool,
    pub pack: bool,
    pub detailed: bool,
}

impl Default for Phases {
    fn default() -> Self {
        Phases { floorplan: true, global: true, pack: true, detailed: true }
    }
}

/// Everything a run reads besides the design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
    pub out_dir: PathBuf,
    pub phases: Phases,
    /// Fraction of instances, in path order, that seed fanout clusters.
    pub cluster_fraction: f64,
    pub logic: LogicDelays,
    pub delay: DelayModelParams,
    pub partition: PartitionConfig,
    pub anneal: AnnealConfig,
    pub global: GpConfig,
    pub pack: PackConfig,
    pub detailed: DpSchedule,
    /// Critical paths drawn in the SVG.
    pub svg_paths: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            threads: 1,
            out_dir: PathBuf::from("out"),
            phases: Phases::default(),
            cluster_fraction: 0.05,
            logic: LogicDelays::default(),
            delay: DelayModelParams::default(),
            partition: PartitionConfig::default(),
            anneal: AnnealConfig::default(),
            global: GpConfig::default(),
            pack: PackConfig::default(),
            detailed: DpSchedule::default(),
            svg_paths: 10,
        }
    }
}

impl RunConfig {
    /// Reads a TOML or JSON file, chosen by extension. Missing keys keep
    /// their defaults.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Ok(serde_json::from_str(&text)?),
            _ => Ok(toml::from_str(&text)?),
        }
    }

    /// Applies ablation `k`:
    ///
    /// | k | change |
    /// |---|--------|
    /// | 0 | none |
    /// | 1 | no fanout clustering before partitioning |
    /// | 2 | no blockage-aware pseudo nets or region stretching |
    /// | 3 | timing weights without the WNS-dependent exponent |
    /// | 4 | packing scores without the timing term |
    /// | 5 | square windows only, half-width 3 |
    /// | 6 | square windows only, half-width 5 |
    pub fn ablate(mut self, k: usize) -> Result<Self> {
        match k {
            0 => {}
            1 => self.cluster_fraction = 0.0,
            2 => self.global.blockage_aware = false,
            3 => self.global.wns_aware = false,
            4 => self.pack.gamma = 0.0,
            5 => {
                self.detailed.sectors = false;
                self.detailed.r_square = 3.0;
            }
            6 => {
                self.detailed.sectors = false;
                self.detailed.r_square = 5.0;
            }
            _ => return Err(Error::Schema(format!("unknown ablation cfg{k}; expected cfg0 to cfg6"))),
        }
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.phases.detailed && !self.phases.pack {
            return Err(Error::Schema("detailed placement needs a packed placement; enable pack".into()));
        }
        self.delay.validate()
    }
}

/// Metrics after one phase, recomputed from scratch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub phase: String,
    pub seconds: f64,
    pub hpwl: f64,
    pub wns: f64,
    pub tns: f64,
    pub cpd: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LegalitySummary {
    pub legal: bool,
    pub unbound: usize,
    pub double_bindings: usize,
    pub kind_mismatches: usize,
    pub macro_offset_errors: usize,
    pub out_of_grid: usize,
    pub moved_fixed: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub threads: usize,
    pub phases: Vec<PhaseRecord>,
    pub gp_trace: Vec<GpIteration>,
    pub dp_trace: Vec<DpIteration>,
    pub macro_displacement: Option<f64>,
    pub legality: Option<LegalitySummary>,
    /// Negative-slack timing edges whose ends lie in different regions.
    pub cross_region_negative_edges: usize,
    /// Phase-tagged message of the error that stopped the run.
    pub error: Option<String>,
}

impl RunReport {
    /// Record of the last phase that ran.
    pub fn last(&self) -> Option<&PhaseRecord> {
        self.phases.last()
    }

    pub fn phase(&self, name: &str) -> Option<&PhaseRecord> {
        self.phases.iter().find(|p| p.phase == name)
    }

    pub fn total_seconds(&self) -> f64 {
        self.phases.iter().map(|p| p.seconds).sum()
    }
}

/// Placement and report of a completed run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub placement: PlacementState,
    pub report: RunReport,
}

/// A failed run: the phase-tagged error and the report up to the failure.
#[derive(Debug)]
pub struct PipelineError {
    pub error: Error,
    pub report: RunReport,
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for PipelineError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Uniform random coordinates for movable instances, macro members stacked
/// on their anchor, fixed instances at their locations.
pub fn random_placement(netlist: &Netlist, device: &DeviceGrid, rng: &mut impl Rng) -> PlacementState {
    let (w, h) = (device.width as f64, device.height as f64);
    let mut anchors: Vec<Option<(f64, f64)>> = vec![None; netlist.macros.len()];
    let mut ps = PlacementState::new(netlist.num_instances());
    for (i, inst) in netlist.instances.iter().enumerate() {
        ps.xy[i] = match inst.macro_id {
            _ if inst.fixed => continue,
            None => (rng.gen_range(0.0..w), rng.gen_range(0.0..h)),
            Some(m) => {
                let span = (netlist.macros[m].height as f64).min(h);
                let a = *anchors[m].get_or_insert_with(|| (rng.gen_range(0.0..w), rng.gen_range(0.0..=h - span)));
                (a.0, a.1 + inst.offset.1 as f64)
            }
        };
    }
    ps.apply_fixed(netlist);
    ps
}

/// Timing analysis of a placement at its current coordinates.
pub fn analyze(graph: &TimingGraph, delay: &DelayModelParams, device: &DeviceGrid, placement: &PlacementState, n_thr: f64) -> StaState {
    run_sta(graph, delay, &pin_locs(device, placement), n_thr)
}

/// Negative-slack edges whose source and sink lie in different regions.
pub fn cross_region_negative_edges(graph: &TimingGraph, sta: &StaState, device: &DeviceGrid, placement: &PlacementState) -> usize {
    let locs = pin_locs(device, placement);
    sta.negative_edges().into_iter().filter(|&e| locs[graph.edges[e].src].region != locs[graph.edges[e].dst].region).count()
}

struct Run<'a> {
    netlist: &'a Netlist,
    device: &'a DeviceGrid,
    graph: TimingGraph,
    cfg: &'a RunConfig,
    report: RunReport,
}

impl Run<'_> {
    fn record(&mut self, phase: &str, started: Instant, placement: &PlacementState) {
        let seconds = started.elapsed().as_secs_f64();
        let sta = analyze(&self.graph, &self.cfg.delay, self.device, placement, self.cfg.global.timing.n_thr);
        let m = sta.metrics;
        log::info!(
            "{phase}: {seconds:.2}s hpwl {:.1} wns {:.3} tns {:.3} cpd {:.3}",
            hpwl(self.netlist, &placement.xy),
            m.wns,
            m.tns,
            m.cpd
        );
        self.report.phases.push(PhaseRecord {
            phase: phase.into(),
            seconds,
            hpwl: hpwl(self.netlist, &placement.xy),
            wns: m.wns,
            tns: m.tns,
            cpd: m.cpd,
        });
        self.report.cross_region_negative_edges = cross_region_negative_edges(&self.graph, &sta, self.device, placement);
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(stream);
        rng
    }

    fn execute(&mut self) -> Result<PlacementState> {
        let (nl, dev, cfg) = (self.netlist, self.device, self.cfg);
        let t = Instant::now();
        let mut placement = random_placement(nl, dev, &mut self.rng(0));
        self.record("load", t, &placement);
        let paths = compute_path_lengths(nl).map_err(|e| e.in_phase("load"))?;

        let movable = nl.instances.iter().filter(|i| !i.fixed).count();
        if cfg.phases.floorplan && movable > 0 {
            let t = Instant::now();
            let fp = || -> Result<PlacementState> {
                let mut rng = self.rng(1);
                let clusters = if cfg.cluster_fraction > 0.0 {
                    cluster_by_fanout(nl, &paths, cfg.cluster_fraction)
                } else {
                    ClusterSet::empty(nl.num_instances())
                };
                let pc = PartitionConfig { k: cfg.partition.k.min(movable).max(1), ..cfg.partition.clone() };
                let part = partition(nl, &clusters, &pc, &mut rng)?;
                let target = ((pc.k as f64) * cfg.anneal.bins_per_partition).ceil().max(1.0) as usize;
                let bins = build_bins(dev, target);
                let plan = sa_floorplan(nl, &part, pc.k, bins, &cfg.anneal, (dev.width + dev.height) as f64, &mut rng)?;
                Ok(seed_placement(nl, dev, &part, &plan, &mut rng))
            };
            placement = fp().map_err(|e| e.in_phase("floorplan"))?;
            self.record("floorplan", t, &placement);
        }

        if cfg.phases.global {
            let t = Instant::now();
            let ctx = GpContext { netlist: nl, device: dev, graph: &self.graph, delay: &cfg.delay, paths: &paths };
            let res = global_place(&ctx, &placement, &cfg.global).map_err(|e| e.in_phase("global"))?;
            placement = res.placement;
            self.report.gp_trace = res.trace;
            self.record("global", t, &placement);
        }

        if cfg.phases.pack {
            let t = Instant::now();
            let res = pack(nl, dev, &placement.xy, &self.graph, &cfg.delay, &paths, &cfg.pack).map_err(|e| e.in_phase("pack"))?;
            placement = res.placement;
            self.report.macro_displacement = Some(res.macro_displacement);
            self.record("pack", t, &placement);
        }

        if cfg.phases.detailed {
            let t = Instant::now();
            let ctx = DpContext { netlist: nl, device: dev, graph: &self.graph, delay: &cfg.delay, n_thr: cfg.global.timing.n_thr };
            let res = detailed_place(&ctx, &placement, &cfg.detailed).map_err(|e| e.in_phase("detailed"))?;
            placement = res.placement;
            self.report.dp_trace = res.trace;
            self.record("detailed", t, &placement);
        }

        if cfg.phases.pack {
            let r = check_legality(nl, dev, &placement);
            self.report.legality = Some(LegalitySummary {
                legal: r.is_legal(),
                unbound: r.unbound.len(),
                double_bindings: r.double_bindings,
                kind_mismatches: r.kind_mismatches.len(),
                macro_offset_errors: r.macro_offset_errors.len(),
                out_of_grid: r.out_of_grid.len(),
                moved_fixed: r.moved_fixed.len(),
            });
        }
        Ok(placement)
    }
}

/// Runs the enabled phases in order: floorplan, global placement, packing,
/// detailed placement. The input metrics come from a seeded random
/// placement. With one thread and a fixed seed the result is reproducible.
pub fn run_pipeline(netlist: &Netlist, device: &DeviceGrid, cfg: &RunConfig) -> std::result::Result<RunOutput, PipelineError> {
    let mut report = RunReport { seed: cfg.seed, threads: cfg.threads, ..RunReport::default() };
    let fail = |error: Error, mut report: RunReport| {
        report.error = Some(error.to_string());
        PipelineError { error, report }
    };
    let setup = || -> Result<(TimingGraph, rayon::ThreadPool)> {
        cfg.validate()?;
        let graph = TimingGraph::from_netlist(netlist, &cfg.logic)?;
        let pool =
            rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build().map_err(|e| Error::Schema(format!("thread pool: {e}")))?;
        Ok((graph, pool))
    };
    let (graph, pool) = match setup() {
        Ok(v) => v,
        Err(e) => return Err(fail(e.in_phase("load"), report)),
    };
    let mut run = Run { netlist, device, graph, cfg, report: std::mem::take(&mut report) };
    let res = pool.install(|| run.execute());
    match res {
        Ok(placement) => Ok(RunOutput { placement, report: run.report }),
        Err(e) => Err(fail(e, run.report)),
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `placement.json` and `report.json` to `cfg.out_dir`, plus the
/// iteration traces as CSV and an SVG picture when asked.
pub fn write_outputs(netlist: &Netlist, device: &DeviceGrid, cfg: &RunConfig, out: &RunOutput, svg: bool, trace: bool) -> Result<()> {
    let dir = &cfg.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let last = out.report.last();
    let metrics = Metrics {
        hpwl: last.map_or(0.0, |p| p.hpwl),
        wns: last.map_or(0.0, |p| p.wns),
        tns: last.map_or(0.0, |p| p.tns),
        cpd: last.map_or(0.0, |p| p.cpd),
        runtime_s: out.report.total_seconds(),
    };
    crate::model::io::write_json(&dir.join("placement.json"), &PlacementFile::new(netlist, device, &out.placement, metrics))?;
    crate::model::io::write_json(&dir.join("report.json"), &out.report)?;
    if trace {
        write_csv(&dir.join("gp_trace.csv"), &out.report.gp_trace)?;
        write_csv(&dir.join("dp_trace.csv"), &out.report.dp_trace)?;
    }
    if svg {
        let graph = TimingGraph::from_netlist(netlist, &cfg.logic)?;
        write_svg(&dir.join("placement.svg"), netlist, device, &out.placement, &graph, &cfg.delay, cfg.svg_paths)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (Netlist, DeviceGrid) {
        gen_benchmark(&BenchSpec { instances: 150, io: 8, dsp: 2, dsp_cascades: 1, bram: 1, ..BenchSpec::preset("small", 2).unwrap() })
            .unwrap()
    }

    fn quick() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.partition.k = 4;
        cfg.anneal.max_stages = 20;
        cfg.global.max_iters = 12;
        cfg.detailed.n_dpi = 4;
        cfg.detailed.final_paths = 4;
        cfg
    }

    #[test]
    fn load_only_reports_input_metrics() {
        let (nl, dev) = small();
        let cfg = RunConfig { phases: Phases { floorplan: false, global: false, pack: false, detailed: false }, ..quick() };
        let out = run_pipeline(&nl, &dev, &cfg).unwrap();
        assert_eq!(out.report.phases.len(), 1);
        assert_eq!(out.report.phases[0].phase, "load");
        assert!(out.report.legality.is_none() && out.report.dp_trace.is_empty());
    }

    #[test]
    fn full_run_is_legal_and_beats_random() {
        let (nl, dev) = small();
        let out = run_pipeline(&nl, &dev, &quick()).unwrap();
        let names: Vec<_> = out.report.phases.iter().map(|p| p.phase.as_str()).collect();
        assert_eq!(names, ["load", "floorplan", "global", "pack", "detailed"]);
        assert!(out.report.legality.as_ref().unwrap().legal);
        let r = &out.report;
        assert!(r.phase("detailed").unwrap().cpd <= r.phase("pack").unwrap().cpd + 1e-9);
        assert!(r.phase("detailed").unwrap().cpd < r.phase("load").unwrap().cpd);
        // reported metrics match a fresh analysis of the returned placement
        let graph = TimingGraph::from_netlist(&nl, &LogicDelays::default()).unwrap();
        let sta = analyze(&graph, &DelayModelParams::default(), &dev, &out.placement, 30.0);
        assert_eq!(sta.metrics.cpd, r.last().unwrap().cpd);
        assert_eq!(hpwl(&nl, &out.placement.xy), r.last().unwrap().hpwl);
    }

    #[test]
    fn detailed_without_pack_is_rejected() {
        let (nl, dev) = small();
        let cfg = RunConfig { phases: Phases { pack: false, ..Phases::default() }, ..quick() };
        let err = run_pipeline(&nl, &dev, &cfg).unwrap_err();
        assert!(err.report.error.unwrap().starts_with("load:"));
    }

    #[test]
    fn phase_errors_are_tagged_and_keep_partial_report() {
        let (nl, dev) = small();
        let mut cfg = quick();
        cfg.pack.rounds = 0;
        let err = run_pipeline(&nl, &dev, &cfg).unwrap_err();
        assert!(matches!(err.error, Error::Phase { phase: "pack", .. }), "{}", err.error);
        let names: Vec<_> = err.report.phases.iter().map(|p| p.phase.as_str()).collect();
        assert_eq!(names, ["load", "floorplan", "global"]);
    }

    #[test]
    fn ablations_touch_one_knob_each() {
        let base = RunConfig::default();
        for k in 1..=6 {
            assert_ne!(base.clone().ablate(k).unwrap(), base);
        }
        assert_eq!(base.clone().ablate(0).unwrap(), base);
        assert!(base.ablate(7).is_err());
    }

    #[test]
    fn config_files_fill_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "seed = 7\n[detailed]\nn_dpi = 3\n").unwrap();
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!((cfg.seed, cfg.detailed.n_dpi, cfg.detailed.d_ncp), (7, 3, 20));
        let j = dir.path().join("c.json");
        std::fs::write(&j, serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(RunConfig::load(&j).unwrap(), cfg);
    }

    #[test]
    fn outputs_are_written() {
        let (nl, dev) = small();
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig { out_dir: dir.path().to_path_buf(), ..quick() };
        let out = run_pipeline(&nl, &dev, &cfg).unwrap();
        write_outputs(&nl, &dev, &cfg, &out, true, true).unwrap();
        for f in ["placement.json", "report.json", "gp_trace.csv", "dp_trace.csv", "placement.svg"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let back: RunReport = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(back, out.report);
    }
}

//! `place`: run the placer on a design, generate benchmarks, fit delay models.
//!
//! Exit codes: 0 success, 1 bad arguments or unreadable input, 2 infeasible
//! design, 3 phase failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tplace::flow::{gen_benchmark, run_pipeline, write_outputs, BenchSpec, RunConfig};
use tplace::model::io::{read_json, write_json};
use tplace::model::{load_design, DeviceFile, NetlistFile};
use tplace::timing::delay::read_samples_csv;
use tplace::timing::{fit_delay_model, FitConfig};

#[derive(Parser, Debug)]
#[command(name = "place", version, about = "Timing-driven mixed-size FPGA placement")]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: PlaceArgs,
}

#[derive(Args, Debug)]
struct PlaceArgs {
    /// Netlist JSON.
    #[arg(long)]
    design: Option<PathBuf>,
    /// Device JSON.
    #[arg(long)]
    device: Option<PathBuf>,
    /// Run configuration (TOML, or JSON by extension).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ablation: cfg0 to cfg6.
    #[arg(long)]
    ablate: Option<String>,
    /// Also write placement.svg.
    #[arg(long)]
    svg: bool,
    /// Also write the iteration traces as CSV.
    #[arg(long)]
    trace: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic benchmark.
    Gen {
        /// default, blockage-stress, wns-skewed or small.
        #[arg(long, default_value = "default")]
        preset: String,
        /// Full specification (JSON); overrides the preset.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit delay-model coefficients to measured samples.
    FitDelay {
        /// CSV with dx,dy,region_src,region_dst,cascade,delay_ns.
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Input(String),
    Infeasible(String),
    Phase(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Infeasible(_) => 2,
            Failure::Phase(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Infeasible(m) | Failure::Phase(m) => m,
        }
    }
}

fn input(e: tplace::Error) -> Failure {
    if e.is_infeasible() {
        Failure::Infeasible(e.to_string())
    } else {
        Failure::Input(e.to_string())
    }
}

fn parse_ablation(s: &str) -> Result<usize, Failure> {
    s.strip_prefix("cfg").unwrap_or(s).parse().map_err(|_| Failure::Input(format!("--ablate expects cfg0 to cfg6, got {s:?}")))
}

fn place(args: PlaceArgs) -> Result<(), Failure> {
    let (Some(design), Some(device)) = (&args.design, &args.device) else {
        return Err(Failure::Input("--design and --device are required".into()));
    };
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p).map_err(input)?,
        None => RunConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.threads {
        cfg.threads = t;
    }
    if let Some(o) = &args.out {
        cfg.out_dir = o.clone();
    }
    if let Some(a) = &args.ablate {
        cfg = cfg.ablate(parse_ablation(a)?).map_err(input)?;
    }
    let (netlist, dev) = load_design(design, device).map_err(input)?;
    match run_pipeline(&netlist, &dev, &cfg) {
        Ok(out) => {
            write_outputs(&netlist, &dev, &cfg, &out, args.svg, args.trace).map_err(input)?;
            if let Some(last) = out.report.last() {
                println!("hpwl {:.2} wns {:.4} tns {:.4} cpd {:.4}", last.hpwl, last.wns, last.tns, last.cpd);
            }
            Ok(())
        }
        Err(e) => {
            // keep what finished for inspection
            let dir = &cfg.out_dir;
            if std::fs::create_dir_all(dir).is_ok() {
                if let Err(w) = write_json(&dir.join("report.json"), &e.report) {
                    log::warn!("could not write partial report: {w}");
                }
            }
            if e.error.is_infeasible() {
                Err(Failure::Infeasible(e.to_string()))
            } else {
                Err(Failure::Phase(e.to_string()))
            }
        }
    }
}

fn generate(preset: &str, spec: Option<&Path>, seed: u64, out: &Path) -> Result<(), Failure> {
    let spec: BenchSpec = match spec {
        Some(p) => read_json(p).map_err(input)?,
        None => BenchSpec::preset(preset, seed).map_err(|e| Failure::Input(e.to_string()))?,
    };
    let (netlist, device) = gen_benchmark(&spec).map_err(input)?;
    std::fs::create_dir_all(out).map_err(|e| Failure::Input(format!("{}: {e}", out.display())))?;
    write_json(&out.join("netlist.json"), &NetlistFile::from_netlist(&netlist)).map_err(input)?;
    write_json(&out.join("device.json"), &DeviceFile::from_device(&device)).map_err(input)?;
    println!(
        "{} instances, {} nets, {} macros on {}x{}",
        netlist.num_instances(),
        netlist.nets.len(),
        netlist.macros.len(),
        device.width,
        device.height
    );
    Ok(())
}

fn fit(samples: &Path, out: &Path) -> Result<(), Failure> {
    let samples = read_samples_csv(samples).map_err(input)?;
    let fit = fit_delay_model(&samples, &FitConfig::default()).map_err(input)?;
    write_json(out, &fit.params).map_err(input)?;
    println!("mean |residual| {:.4} ns, residual std {:.4} ns", fit.mean_abs_error, fit.residual_std);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let res = match cli.command {
        Some(Command::Gen { preset, spec, seed, out }) => generate(&preset, spec.as_deref(), seed, &out),
        Some(Command::FitDelay { samples, out }) => fit(&samples, &out),
        None => place(cli.run),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

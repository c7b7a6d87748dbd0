use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use photomimo_core::cost::CostReport;
use photomimo_core::mimo::{Detector, Modulation};
use photomimo_harness::run::{precision_label, RunReport};
use photomimo_harness::spec::{ArithmeticKind, CoreDims, GemmDims, InverterKind};
use photomimo_harness::{run_experiment, ExperimentKind, ExperimentSpec, HarnessError, RunOptions};
use serde::de::DeserializeOwned;

/// Photonic MIMO detection emulator: SER sweeps, cost tables and inversion demos.
#[derive(Debug, Parser)]
#[command(name = "photomimo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// SER versus SNR for one detector configuration.
    SerSweep(SerArgs),
    /// SER versus SNR for an exact baseline and each photonic bit depth.
    PrecisionSweep(SerArgs),
    /// SER versus SNR for several base-station antenna counts.
    AntennaSweep(SerArgs),
    /// Use count and runtime of GEMM workloads on the photonic core.
    GemmBench(GemmArgs),
    /// Power draw of photonic core configurations.
    Power(PowerArgs),
    /// Residual per step of Neumann and Newton inversion of one Gram matrix.
    InvertDemo(SerArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON experiment spec; flags below override its fields.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed for all random draws.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte-Carlo trials per grid point.
    #[arg(long)]
    trials: Option<u64>,
    /// Output directory (overrides the spec's output_dir).
    #[arg(long, value_name = "DIR", env = "PHOTOMIMO_OUT_DIR")]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Suppress per-point progress on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Args)]
struct HardwareArgs {
    /// WDM channels per waveguide (D).
    #[arg(long)]
    d: Option<usize>,
    /// Rings per channel row (R).
    #[arg(long)]
    r: Option<usize>,
}

#[derive(Debug, Args)]
struct SerArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    hardware: HardwareArgs,
    /// Base-station antennas (M).
    #[arg(long)]
    m: Option<usize>,
    /// Single-antenna users (K).
    #[arg(long)]
    k: Option<usize>,
    /// qpsk or qam16.
    #[arg(long, value_parser = parse_enum::<Modulation>)]
    modulation: Option<Modulation>,
    /// zf, mmse or ml.
    #[arg(long, value_parser = parse_enum::<Detector>)]
    detector: Option<Detector>,
    /// exact, neumann or newton.
    #[arg(long, value_parser = parse_enum::<InverterKind>)]
    inverter: Option<InverterKind>,
    /// Neumann terms or Newton iterations.
    #[arg(long)]
    terms: Option<usize>,
    /// exact or photonic.
    #[arg(long, value_parser = parse_enum::<ArithmeticKind>)]
    arithmetic: Option<ArithmeticKind>,
    /// Comma-separated SNR grid in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
    snr: Option<Vec<f64>>,
    /// Photonic precision in bits; a comma-separated list for precision-sweep.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    bits: Option<Vec<u32>>,
    /// Comma-separated antenna counts for antenna-sweep.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    antennas: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
struct GemmArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    hardware: HardwareArgs,
    /// Rows of the left operand; with --n and --k replaces the default benchmarks.
    #[arg(long, requires_all = ["n", "k"])]
    m: Option<usize>,
    /// Inner dimension.
    #[arg(long, requires_all = ["m", "k"])]
    n: Option<usize>,
    /// Columns of the right operand.
    #[arg(long, requires_all = ["m", "n"])]
    k: Option<usize>,
}

#[derive(Debug, Args)]
struct PowerArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    hardware: HardwareArgs,
}

fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn base_spec(kind: ExperimentKind, common: &CommonArgs) -> Result<ExperimentSpec, HarnessError> {
    let mut spec = match &common.config {
        Some(path) => {
            let spec = ExperimentSpec::load(path)?;
            if spec.kind != kind {
                return Err(HarnessError::Config {
                    origin: path.display().to_string(),
                    message: format!("kind is {}, but the {} command was run", spec.kind, kind),
                });
            }
            spec
        }
        None => ExperimentSpec::new(kind),
    };
    if let Some(seed) = common.seed {
        spec.master_seed = seed;
    }
    if let Some(trials) = common.trials {
        spec.trials = trials;
    }
    if let Some(out) = &common.out {
        spec.output_dir = out.clone();
    }
    Ok(spec)
}

fn grid_override(spec: &ExperimentSpec, hw: &HardwareArgs) -> Option<Vec<CoreDims>> {
    (hw.d.is_some() || hw.r.is_some()).then(|| {
        vec![CoreDims {
            channels_d: hw.d.unwrap_or(spec.hardware.channels_d),
            rings_r: hw.r.unwrap_or(spec.hardware.rings_r),
        }]
    })
}

fn build_spec(command: &Command) -> Result<(ExperimentSpec, &CommonArgs), HarnessError> {
    let (kind, common) = match command {
        Command::SerSweep(a) => (ExperimentKind::SerSweep, &a.common),
        Command::PrecisionSweep(a) => (ExperimentKind::PrecisionSweep, &a.common),
        Command::AntennaSweep(a) => (ExperimentKind::AntennaSweep, &a.common),
        Command::InvertDemo(a) => (ExperimentKind::InvertDemo, &a.common),
        Command::GemmBench(a) => (ExperimentKind::GemmBench, &a.common),
        Command::Power(a) => (ExperimentKind::PowerTable, &a.common),
    };
    let mut spec = base_spec(kind, common)?;
    match command {
        Command::SerSweep(a) | Command::PrecisionSweep(a) | Command::AntennaSweep(a) | Command::InvertDemo(a) => {
            let hw = &a.hardware;
            if let Some(d) = hw.d {
                spec.hardware.channels_d = d;
            }
            if let Some(r) = hw.r {
                spec.hardware.rings_r = r;
            }
            let mimo = &mut spec.mimo;
            if let Some(m) = a.m {
                mimo.m_antennas = m;
            }
            if let Some(k) = a.k {
                mimo.k_users = k;
            }
            if let Some(v) = a.modulation {
                mimo.modulation = v;
            }
            if let Some(v) = a.detector {
                mimo.detector = v;
            }
            if let Some(v) = a.inverter {
                mimo.inverter = v;
            }
            if let Some(v) = a.terms {
                mimo.terms = v;
            }
            if let Some(v) = a.arithmetic {
                mimo.arithmetic = v;
            }
            if let Some(snr) = &a.snr {
                spec.snr_grid_db = snr.clone();
            }
            if let Some(bits) = &a.bits {
                if kind == ExperimentKind::PrecisionSweep {
                    spec.sweep.precision_bits = bits.clone();
                } else if let [b] = bits.as_slice() {
                    spec.hardware.precision_bits = *b;
                } else {
                    return Err(HarnessError::Config {
                        origin: "--bits".into(),
                        message: "takes a single value outside precision-sweep".into(),
                    });
                }
            }
            if let Some(antennas) = &a.antennas {
                spec.sweep.antennas = antennas.clone();
            }
        }
        Command::GemmBench(a) => {
            if let Some(grid) = grid_override(&spec, &a.hardware) {
                spec.sweep.hardware_grid = grid;
            }
            if let (Some(m), Some(n), Some(k)) = (a.m, a.n, a.k) {
                spec.sweep.gemm = vec![GemmDims {
                    name: format!("{m}x{n}x{k}"),
                    m,
                    n,
                    k,
                }];
            }
        }
        Command::Power(a) => {
            if let Some(grid) = grid_override(&spec, &a.hardware) {
                spec.sweep.hardware_grid = grid;
            }
        }
    }
    Ok((spec, common))
}

fn print_report(kind: ExperimentKind, report: &RunReport) {
    match kind {
        ExperimentKind::PowerTable => {
            for row in report.rows.iter().filter(|r| r.metric == "power_mw") {
                let mw = row.value;
                println!(
                    "D={:<4} R={:<4} power={:>9} mW  ({} W)",
                    row.params["d"],
                    row.params["r"],
                    mw,
                    photomimo_core::cost::power_display_watts(mw)
                );
            }
        }
        ExperimentKind::GemmBench => {
            println!("{}", CostReport::CSV_HEADER);
            for c in &report.costs {
                println!("{}", c.csv_row());
            }
            for c in &report.costs {
                println!(
                    "D={} R={} {}x{}x{}: {} uses, {:.3} ms",
                    c.d,
                    c.r,
                    c.m,
                    c.n,
                    c.k,
                    c.use_count,
                    c.t_total_ps / 1e9
                );
            }
        }
        ExperimentKind::InvertDemo => {
            for t in &report.traces {
                println!("{} ({} arithmetic)", t.method, t.arithmetic);
                for (step, r) in t.residuals.iter().enumerate() {
                    println!("  step {step}: residual {r:.6e}");
                }
            }
        }
        _ => {
            println!("series\tsnr_db\tprecision\tsymbol_errors\tser");
            for p in &report.ser {
                println!(
                    "{}\t{}\t{}\t{}\t{:.6}",
                    p.series,
                    p.snr_db,
                    precision_label(p.precision_bits),
                    p.outcome.errors,
                    p.ser()
                );
            }
        }
    }
    for path in [Some(&report.csv), Some(&report.json), report.svg.as_ref()].into_iter().flatten() {
        println!("wrote {}", path.display());
    }
}

fn run(cli: &Cli) -> Result<(), HarnessError> {
    let (spec, common) = build_spec(&cli.command)?;
    let opts = RunOptions {
        workers: common.workers,
        progress: !common.quiet,
    };
    let report = run_experiment(&spec, &opts)?;
    print_report(spec.kind, &report);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

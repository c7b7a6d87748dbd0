//! Experiment execution and result persistence.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use photomimo_core::cost::{self, CostReport, GPU_POWER_W, QUOTED_PROPAGATION_PS};
use photomimo_core::inverse::{neumann_inverse_with, newton_inverse_with, InverseOptions};
use photomimo_core::mimo::{
    run_ser_trial, sample_rayleigh_channel, trial_seed, Arithmetic, Detector, DetectorSpec, ModulationSet,
    TrialOutcome,
};
use photomimo_core::{ExactArithmetic, HardwareConfig, MatMul, PhotonicArithmetic};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{HarnessError, Result};
use crate::spec::{ArithmeticKind, ExperimentKind, ExperimentSpec};
use crate::svg::{Chart, Series};

pub const SER_CSV_HEADER: &str = "snr_db,detector,inverter,precision_bits,m_antennas,k_users,trials,symbol_errors,ser";
pub const POWER_CSV_HEADER: &str = "d,r,power_mw,power_w";
pub const RESIDUAL_CSV_HEADER: &str = "method,arithmetic,step,residual";

/// One measured quantity, keyed by `(experiment, params, metric)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub params: BTreeMap<String, Value>,
    pub metric: String,
    pub value: f64,
    pub trials: u64,
    pub seed: u64,
}

impl ResultRow {
    fn key(&self) -> String {
        format!(
            "{}/{}/{}",
            self.experiment,
            serde_json::to_string(&self.params).expect("params serialise"),
            self.metric
        )
    }
}

/// Append-only row store that refuses duplicate keys.
#[derive(Debug, Default)]
pub struct ResultLog {
    rows: Vec<ResultRow>,
    keys: HashSet<String>,
}

impl ResultLog {
    pub fn push(&mut self, row: ResultRow) -> Result<()> {
        let key = row.key();
        if !self.keys.insert(key.clone()) {
            return Err(HarnessError::DuplicateRow(key));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[ResultRow] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<ResultRow> {
        self.rows
    }
}

/// SER measured at one grid point of one series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SerPoint {
    pub series: String,
    pub detector: Detector,
    pub inverter: String,
    /// `None` for exact (f64) arithmetic.
    pub precision_bits: Option<u32>,
    pub m_antennas: usize,
    pub k_users: usize,
    pub snr_db: f64,
    pub trials: u64,
    pub outcome: TrialOutcome,
}

impl SerPoint {
    pub fn ser(&self) -> f64 {
        self.outcome.ser()
    }

    fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.snr_db,
            detector_label(self.detector),
            self.inverter,
            precision_label(self.precision_bits),
            self.m_antennas,
            self.k_users,
            self.trials,
            self.outcome.errors,
            self.ser()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualTrace {
    pub method: String,
    pub arithmetic: String,
    /// Residual of the initial estimate followed by one per term/iteration.
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` lets the pool pick.
    pub workers: Option<usize>,
    /// Echo each finished grid point to stderr.
    pub progress: bool,
}

#[derive(Debug)]
pub struct RunReport {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub svg: Option<PathBuf>,
    pub rows: Vec<ResultRow>,
    pub ser: Vec<SerPoint>,
    pub costs: Vec<CostReport>,
    pub traces: Vec<ResidualTrace>,
}

impl RunReport {
    /// SER points of the series labelled `series`, in grid order.
    pub fn series(&self, series: &str) -> Vec<&SerPoint> {
        self.ser.iter().filter(|p| p.series == series).collect()
    }
}

pub fn detector_label(d: Detector) -> &'static str {
    match d {
        Detector::Zf => "zf",
        Detector::Mmse => "mmse",
        Detector::Ml => "ml",
    }
}

pub fn precision_label(bits: Option<u32>) -> String {
    bits.map_or_else(|| "exact".to_string(), |b| b.to_string())
}

struct CsvSink {
    path: PathBuf,
    out: BufWriter<File>,
}

impl CsvSink {
    fn create(path: PathBuf, spec: &ExperimentSpec, header: &str) -> Result<Self> {
        let file = File::create(&path).map_err(|source| HarnessError::Io {
            path: path.clone(),
            source,
        })?;
        let mut sink = Self {
            path,
            out: BufWriter::new(file),
        };
        sink.line(&format!("# spec: {}", spec.to_json_line()))?;
        sink.line(&format!("# master_seed: {}", spec.master_seed))?;
        sink.line(header)?;
        Ok(sink)
    }

    /// Writes and flushes one line, so an interrupted run keeps every
    /// finished row.
    fn line(&mut self, text: &str) -> Result<()> {
        writeln!(self.out, "{text}")
            .and_then(|_| self.out.flush())
            .map_err(|source| HarnessError::Io {
                path: self.path.clone(),
                source,
            })
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

struct SerSeries {
    label: String,
    detector: DetectorSpec,
    precision_bits: Option<u32>,
    m_antennas: usize,
}

fn arithmetic_bits(a: &Arithmetic) -> Option<u32> {
    match a {
        Arithmetic::Exact => None,
        Arithmetic::Photonic(cfg) => Some(cfg.precision_bits),
    }
}

fn series_label(d: &DetectorSpec, m: usize, with_m: bool) -> String {
    let mut label = format!("{}-{}-{}", detector_label(d.detector), d.inverter.label(), precision_label(arithmetic_bits(&d.arithmetic)));
    if with_m {
        label.push_str(&format!("-m{m}"));
    }
    label
}

fn ser_series(spec: &ExperimentSpec) -> Vec<SerSeries> {
    let mimo = &spec.mimo;
    let make = |detector: DetectorSpec, m: usize, with_m: bool| SerSeries {
        label: series_label(&detector, m, with_m),
        precision_bits: arithmetic_bits(&detector.arithmetic),
        detector,
        m_antennas: m,
    };
    match spec.kind {
        ExperimentKind::SerSweep => vec![make(mimo.detector_spec(&spec.hardware), mimo.m_antennas, false)],
        ExperimentKind::PrecisionSweep => {
            let baseline = DetectorSpec {
                detector: mimo.detector,
                inverter: mimo.inverter(),
                arithmetic: Arithmetic::Exact,
            };
            std::iter::once(make(baseline, mimo.m_antennas, false))
                .chain(spec.sweep.precision_bits_or_default().into_iter().map(|bits| {
                    let detector = DetectorSpec {
                        detector: mimo.detector,
                        inverter: mimo.inverter(),
                        arithmetic: Arithmetic::Photonic(spec.hardware.clone().with_precision(bits)),
                    };
                    make(detector, mimo.m_antennas, false)
                }))
                .collect()
        }
        ExperimentKind::AntennaSweep => spec
            .sweep
            .antennas_or_default()
            .into_iter()
            .map(|m| make(mimo.detector_spec(&spec.hardware), m, true))
            .collect(),
        _ => unreachable!("not a SER experiment"),
    }
}

/// Sums `trials` independent trials. Trial `t` always uses
/// `trial_seed(master, t)` and the sum is over integers, so the result does
/// not depend on the number of workers.
pub fn ser_point(
    m_antennas: usize,
    k_users: usize,
    snr_db: f64,
    modulation: &ModulationSet,
    detector: &DetectorSpec,
    trials: u64,
    master_seed: u64,
) -> Result<TrialOutcome> {
    (0..trials)
        .into_par_iter()
        .map(|t| run_ser_trial(m_antennas, k_users, snr_db, modulation, detector, trial_seed(master_seed, t)))
        .try_reduce(TrialOutcome::default, |a, b| Ok(a + b))
        .map_err(HarnessError::from)
}

fn run_ser(spec: &ExperimentSpec, opts: &RunOptions, log: &mut ResultLog, report: &mut RunReport) -> Result<()> {
    let modulation = ModulationSet::new(spec.mimo.modulation);
    let mut csv = CsvSink::create(report.csv.clone(), spec, SER_CSV_HEADER)?;
    let k = spec.mimo.k_users;
    for series in ser_series(spec) {
        for &snr_db in &spec.snr_grid_db {
            let outcome = ser_point(series.m_antennas, k, snr_db, &modulation, &series.detector, spec.trials, spec.master_seed)?;
            let point = SerPoint {
                series: series.label.clone(),
                detector: series.detector.detector,
                inverter: series.detector.inverter.label(),
                precision_bits: series.precision_bits,
                m_antennas: series.m_antennas,
                k_users: k,
                snr_db,
                trials: spec.trials,
                outcome,
            };
            csv.line(&point.csv_row())?;
            if opts.progress {
                eprintln!("{}  ser={:.6}", series.label, point.ser());
            }
            let params: BTreeMap<String, Value> = [
                ("snr_db", json!(snr_db)),
                ("detector", json!(detector_label(point.detector))),
                ("inverter", json!(point.inverter)),
                ("precision_bits", json!(precision_label(point.precision_bits))),
                ("m_antennas", json!(point.m_antennas)),
                ("k_users", json!(k)),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
            for (metric, value) in [("ser", point.ser()), ("symbol_errors", outcome.errors as f64)] {
                log.push(ResultRow {
                    experiment: spec.kind.id().to_string(),
                    params: params.clone(),
                    metric: metric.to_string(),
                    value,
                    trials: spec.trials,
                    seed: spec.master_seed,
                })?;
            }
            report.ser.push(point);
        }
    }

    let labels: Vec<String> = {
        let mut seen = Vec::new();
        for p in &report.ser {
            if !seen.contains(&p.series) {
                seen.push(p.series.clone());
            }
        }
        seen
    };
    let chart = Chart {
        title: format!("SER, {} users, {}", k, spec.mimo.modulation.label()),
        x_label: "SNR (dB)".into(),
        y_label: "SER".into(),
        log_y: true,
        description: spec.to_json_line(),
        series: labels
            .into_iter()
            .map(|label| Series {
                points: report.series(&label).iter().map(|p| (p.snr_db, p.ser())).collect(),
                label,
            })
            .collect(),
    };
    let svg = report.csv.with_extension("svg");
    write_file(&svg, &chart.render())?;
    report.svg = Some(svg);
    Ok(())
}

fn run_power(spec: &ExperimentSpec, log: &mut ResultLog, report: &mut RunReport) -> Result<()> {
    let mut csv = CsvSink::create(report.csv.clone(), spec, POWER_CSV_HEADER)?;
    for dims in spec.sweep.hardware_grid_or_default(spec.kind) {
        let (d, r) = (dims.channels_d, dims.rings_r);
        let mw = cost::power_total(d, r);
        let watts = cost::power_display_watts(mw);
        csv.line(&format!("{d},{r},{mw},{watts}"))?;
        let params: BTreeMap<String, Value> = [("d".to_string(), json!(d)), ("r".to_string(), json!(r))].into();
        for (metric, value) in [("power_mw", mw), ("power_w", watts)] {
            log.push(ResultRow {
                experiment: spec.kind.id().to_string(),
                params: params.clone(),
                metric: metric.to_string(),
                value,
                trials: 1,
                seed: spec.master_seed,
            })?;
        }
    }
    for (gpu, watts) in GPU_POWER_W {
        csv.line(&format!("# baseline: {gpu} {watts} W"))?;
    }
    Ok(())
}

fn run_gemm(spec: &ExperimentSpec, log: &mut ResultLog, report: &mut RunReport) -> Result<()> {
    let mut csv = CsvSink::create(report.csv.clone(), spec, CostReport::CSV_HEADER)?;
    let benches = spec.sweep.gemm_or_default();
    let grid = spec.sweep.hardware_grid_or_default(spec.kind);
    let mut series: Vec<Series> = benches
        .iter()
        .map(|b| Series {
            label: b.name.clone(),
            points: Vec::new(),
        })
        .collect();
    for dims in &grid {
        let cfg = HardwareConfig {
            channels_d: dims.channels_d,
            rings_r: dims.rings_r,
            ..spec.hardware.clone()
        };
        for (bench, s) in benches.iter().zip(&mut series) {
            let rep = CostReport::new(bench.m, bench.n, bench.k, &cfg);
            csv.line(&rep.csv_row())?;
            s.points.push(((cfg.channels_d * cfg.rings_r) as f64, rep.t_total_ps / 1e9));
            let params: BTreeMap<String, Value> = [
                ("benchmark", json!(bench.name)),
                ("d", json!(rep.d)),
                ("r", json!(rep.r)),
                ("m", json!(rep.m)),
                ("n", json!(rep.n)),
                ("k", json!(rep.k)),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
            for (metric, value) in [
                ("power_mw", rep.power_mw),
                ("use_count", rep.use_count as f64),
                ("t_total_ps", rep.t_total_ps),
                ("t_propagation_ps", rep.t_propagation_ps),
            ] {
                log.push(ResultRow {
                    experiment: spec.kind.id().to_string(),
                    params: params.clone(),
                    metric: metric.to_string(),
                    value,
                    trials: 1,
                    seed: spec.master_seed,
                })?;
            }
            report.costs.push(rep);
        }
    }
    csv.line(&format!("# quoted propagation time for R=100: {QUOTED_PROPAGATION_PS} ps"))?;
    let chart = Chart {
        title: "GEMM runtime".into(),
        x_label: "D x R".into(),
        y_label: "time (ms)".into(),
        log_y: true,
        description: spec.to_json_line(),
        series,
    };
    let svg = report.csv.with_extension("svg");
    write_file(&svg, &chart.render())?;
    report.svg = Some(svg);
    Ok(())
}

fn run_invert(spec: &ExperimentSpec, log: &mut ResultLog, report: &mut RunReport) -> Result<()> {
    let mut csv = CsvSink::create(report.csv.clone(), spec, RESIDUAL_CSV_HEADER)?;
    let h = sample_rayleigh_channel(spec.mimo.m_antennas, spec.mimo.k_users, spec.master_seed);
    let gram = h.gram();
    // every step is reported, so no early stop
    let opts = InverseOptions {
        stop_on_divergence: false,
        ..InverseOptions::default()
    };
    let mut engines: Vec<(String, Box<dyn MatMul>)> = vec![("exact".to_string(), Box::new(ExactArithmetic))];
    if spec.mimo.arithmetic == ArithmeticKind::Photonic {
        engines.push((
            format!("photonic{}", spec.hardware.precision_bits),
            Box::new(PhotonicArithmetic::new(spec.hardware.clone())),
        ));
    }
    let steps = spec.mimo.terms;
    for (arith, engine) in &engines {
        let (_, neumann) = neumann_inverse_with(engine.as_ref(), &gram, steps, &opts)?;
        let (_, newton) = newton_inverse_with(engine.as_ref(), &gram, steps, None, &opts)?;
        for (method, rep) in [("neumann", neumann), ("newton", newton)] {
            for (step, residual) in rep.residuals.iter().enumerate() {
                csv.line(&format!("{method},{arith},{step},{residual}"))?;
                log.push(ResultRow {
                    experiment: spec.kind.id().to_string(),
                    params: [
                        ("method".to_string(), json!(method)),
                        ("arithmetic".to_string(), json!(arith)),
                        ("step".to_string(), json!(step)),
                    ]
                    .into(),
                    metric: "residual".to_string(),
                    value: *residual,
                    trials: 1,
                    seed: spec.master_seed,
                })?;
            }
            report.traces.push(ResidualTrace {
                method: method.to_string(),
                arithmetic: arith.clone(),
                residuals: rep.residuals,
            });
        }
    }
    Ok(())
}

/// Runs `spec`, writing `<kind>.csv`, `<kind>.json` and, for sweeps,
/// `<kind>.svg` into `spec.output_dir`.
pub fn run_experiment(spec: &ExperimentSpec, opts: &RunOptions) -> Result<RunReport> {
    spec.validate()?;
    let dir = &spec.output_dir;
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.clone(),
        source,
    })?;
    let base = dir.join(spec.kind.id());
    let mut report = RunReport {
        csv: base.with_extension("csv"),
        json: base.with_extension("json"),
        svg: None,
        rows: Vec::new(),
        ser: Vec::new(),
        costs: Vec::new(),
        traces: Vec::new(),
    };
    let mut log = ResultLog::default();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.unwrap_or(0))
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    pool.install(|| match spec.kind {
        k if k.is_ser_sweep() => run_ser(spec, opts, &mut log, &mut report),
        ExperimentKind::PowerTable => run_power(spec, &mut log, &mut report),
        ExperimentKind::GemmBench => run_gemm(spec, &mut log, &mut report),
        ExperimentKind::InvertDemo => run_invert(spec, &mut log, &mut report),
        _ => unreachable!(),
    })?;

    let mut footer = serde_json::Map::new();
    match spec.kind {
        ExperimentKind::PowerTable => {
            footer.insert(
                "gpu_baselines_w".into(),
                GPU_POWER_W.iter().map(|(name, w)| (name.to_string(), json!(w))).collect(),
            );
        }
        ExperimentKind::GemmBench => {
            footer.insert("quoted_propagation_ps".into(), json!(QUOTED_PROPAGATION_PS));
        }
        _ => {}
    }
    let doc = json!({
        "experiment": spec.kind.id(),
        "spec": spec,
        "master_seed": spec.master_seed,
        "rows": log.rows(),
        "footer": footer,
    });
    write_file(&report.json, &serde_json::to_string_pretty(&doc).expect("results serialise"))?;
    report.rows = log.into_rows();
    Ok(report)
}

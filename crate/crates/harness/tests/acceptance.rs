//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::path::Path;
use std::time::{Duration, Instant};

use photomimo_core::cost::{n_use, power_display_watts, total_time};
use photomimo_core::inverse::{neumann_inverse_with, newton_inverse_with, InverseOptions};
use photomimo_core::mimo::{sample_rayleigh_channel, Detector, Modulation};
use photomimo_core::photonic::{photonic_matmul, tile_plan};
use photomimo_core::{ComplexMatrix, ExactArithmetic, HardwareConfig, C64};
use photomimo_harness::spec::{ArithmeticKind, CoreDims, InverterKind};
use photomimo_harness::stats::diff_ci95_halfwidth;
use photomimo_harness::{run_experiment, ExperimentKind, ExperimentSpec, RunOptions, RunReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MASTER_SEED: u64 = 2024;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn run(spec: &ExperimentSpec, workers: usize) -> RunReport {
    let opts = RunOptions {
        workers: Some(workers),
        progress: false,
    };
    run_experiment(spec, &opts).expect("experiment runs")
}

fn power_table(dir: &Path) -> Outcome {
    let mut spec = ExperimentSpec::new(ExperimentKind::PowerTable);
    spec.output_dir = dir.to_path_buf();
    spec.sweep.hardware_grid = [(32, 32), (64, 32), (64, 64)]
        .map(|(channels_d, rings_r)| CoreDims { channels_d, rings_r })
        .to_vec();
    let report = run(&spec, 1);
    let watts: Vec<f64> = report
        .rows
        .iter()
        .filter(|r| r.metric == "power_mw")
        .map(|r| power_display_watts(r.value))
        .collect();
    let expected = [100.0, 195.0, 385.0];
    let pass = watts.len() == 3 && watts.iter().zip(expected).all(|(w, e)| (w - e).abs() <= 1.0);
    outcome(pass, format!("{watts:?} W vs {expected:?} W"))
}

fn use_count_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEED);
    let mut mismatches = 0;
    for _ in 0..100 {
        let (m, n, k) = (rng.random_range(1..=20_000), rng.random_range(1..=20_000), rng.random_range(1..=4_000));
        let cfg = HardwareConfig::with_dims(rng.random_range(1..=64), rng.random_range(1..=100));
        let plan = tile_plan(m, n, k, &cfg);
        let formula = 8 * k as u64 * (m as u64).div_ceil(cfg.channels_d as u64) * (n as u64).div_ceil(cfg.rings_r as u64);
        if plan.use_count as u64 != formula || n_use(m, n, k, &cfg) != formula {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{mismatches}/100 tuples mismatched"))
}

fn gemm_timing(dir: &Path) -> Outcome {
    let mut spec = ExperimentSpec::new(ExperimentKind::GemmBench);
    spec.output_dir = dir.to_path_buf();
    spec.sweep.hardware_grid = vec![CoreDims {
        channels_d: 32,
        rings_r: 32,
    }];
    let report = run(&spec, 1);
    let ms: Vec<f64> = report.costs.iter().map(|c| c.t_total_ps / 1e9).collect();
    let values_ok = ms.len() == 2 && format!("{:.2}", ms[0]) == "23.10" && format!("{:.3}", ms[1]) == "0.963";

    let mut monotone = true;
    for &(m, n, k) in &[(7680, 1500, 2560), (10752, 1, 3584), (1000, 999, 17)] {
        for d in [1, 2, 4, 8, 16, 32] {
            for r in [1, 2, 4, 8, 16, 32] {
                let t = total_time(m, n, k, &HardwareConfig::with_dims(d, r));
                monotone &= total_time(m, n, k, &HardwareConfig::with_dims(2 * d, r)) <= t;
                monotone &= total_time(m, n, k, &HardwareConfig::with_dims(d, 2 * r)) <= t;
            }
        }
    }
    outcome(values_ok && monotone, format!("benchmarks {ms:?} ms, monotone={monotone}"))
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEED + 4);
    let mut worst: f64 = 0.0;
    let mut ragged = 0;
    for _ in 0..200 {
        let (m, n, k) = (rng.random_range(1..=64), rng.random_range(1..=64), rng.random_range(1..=16));
        let cfg = HardwareConfig::with_dims(rng.random_range(2..=16), rng.random_range(2..=16)).with_precision(24);
        if m % cfg.channels_d != 0 || n % cfg.rings_r != 0 {
            ragged += 1;
        }
        let a = random_matrix(&mut rng, m, n);
        let b = random_matrix(&mut rng, n, k);
        let (got, _) = photonic_matmul(&a, &b, &cfg).expect("valid config");
        worst = worst.max(got.relative_error(&a.matmul(&b).unwrap()));
    }
    outcome(
        worst <= 1e-5 && ragged > 0,
        format!("worst relative error {worst:.2e}, {ragged}/200 with partial edge tiles"),
    )
}

fn inversion_convergence() -> Outcome {
    let opts = InverseOptions {
        stop_on_divergence: false,
        ..InverseOptions::default()
    };
    let (mut neumann_ok, mut newton_ok) = (0, 0);
    for seed in 0..100 {
        let gram = sample_rayleigh_channel(64, 8, MASTER_SEED + seed).gram();
        let (_, neumann) = neumann_inverse_with(&ExactArithmetic, &gram, 5, &opts).unwrap();
        if neumann.residuals.windows(2).all(|w| w[1] < w[0]) {
            neumann_ok += 1;
        }
        let (_, newton) = newton_inverse_with(&ExactArithmetic, &gram, 8, None, &opts).unwrap();
        // Pairs whose predicted residual is at roundoff level carry no
        // information about the convergence order.
        let quadratic = newton
            .residuals
            .windows(2)
            .filter(|w| w[0] < 0.5 && w[0] * w[0] > 1e-13)
            .all(|w| w[1] <= 1.5 * w[0] * w[0]);
        let reached = newton.residuals.iter().any(|&r| r < 0.5);
        if quadratic && reached {
            newton_ok += 1;
        }
    }
    outcome(
        neumann_ok >= 95 && newton_ok >= 95,
        format!("neumann monotone {neumann_ok}/100, newton quadratic {newton_ok}/100"),
    )
}

fn precision_spec(dir: &Path) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(ExperimentKind::PrecisionSweep);
    spec.output_dir = dir.to_path_buf();
    spec.master_seed = MASTER_SEED;
    spec.trials = 10_000;
    spec.mimo.m_antennas = 64;
    spec.mimo.k_users = 8;
    spec.mimo.modulation = Modulation::Qpsk;
    spec.sweep.precision_bits = vec![6, 8];
    spec
}

fn precision_ordering(report: &RunReport) -> Outcome {
    let exact = report.series("mmse-neumann3-exact");
    let six = report.series("mmse-neumann3-6");
    let eight = report.series("mmse-neumann3-8");
    let top = exact.len() - 1;
    let ordered = six[top].ser() > eight[top].ser();
    let mut outside = Vec::new();
    for (e, p) in exact.iter().zip(&eight) {
        let half = diff_ci95_halfwidth(p.ser(), p.outcome.symbols, e.ser(), e.outcome.symbols);
        if (p.ser() - e.ser()).abs() > half {
            outside.push(e.snr_db);
        }
    }
    outcome(
        ordered && outside.is_empty(),
        format!(
            "at {} dB SER 6-bit {:.5} vs 8-bit {:.5}; 8-bit outside exact CI at {:?}",
            exact[top].snr_db,
            six[top].ser(),
            eight[top].ser(),
            outside
        ),
    )
}

fn antenna_scaling(dir: &Path) -> Outcome {
    let mut spec = ExperimentSpec::new(ExperimentKind::AntennaSweep);
    spec.output_dir = dir.to_path_buf();
    spec.master_seed = MASTER_SEED;
    spec.trials = 10_000;
    spec.mimo.inverter = InverterKind::Exact;
    spec.mimo.arithmetic = ArithmeticKind::Exact;
    spec.sweep.antennas = vec![32, 64, 128];
    let report = run(&spec, 1);
    let s32 = report.series("mmse-exact-exact-m32");
    let s64 = report.series("mmse-exact-exact-m64");
    let s128 = report.series("mmse-exact-exact-m128");
    let violations: Vec<f64> = s32
        .iter()
        .zip(&s64)
        .zip(&s128)
        .filter(|((a, b), c)| !(c.ser() <= b.ser() && b.ser() <= a.ser()))
        .map(|((a, _), _)| a.snr_db)
        .collect();
    outcome(
        violations.is_empty() && s32.len() == spec.snr_grid_db.len(),
        format!("ordering violated at {violations:?} dB"),
    )
}

fn ml_optimality(dir: &Path) -> Outcome {
    let sweep = |detector: Detector| {
        let mut spec = ExperimentSpec::new(ExperimentKind::SerSweep);
        spec.output_dir = dir.join(format!("{detector:?}"));
        spec.master_seed = MASTER_SEED;
        spec.trials = 1_000;
        spec.snr_grid_db = vec![-6.0, -3.0, 0.0, 3.0, 6.0, 9.0];
        spec.mimo.m_antennas = 4;
        spec.mimo.k_users = 2;
        spec.mimo.detector = detector;
        spec.mimo.inverter = InverterKind::Exact;
        spec.mimo.arithmetic = ArithmeticKind::Exact;
        run(&spec, 1).ser
    };
    let ml = sweep(Detector::Ml);
    let mmse = sweep(Detector::Mmse);
    let pairs: Vec<(f64, f64)> = ml.iter().zip(&mmse).map(|(a, b)| (a.ser(), b.ser())).collect();
    let pass = pairs.iter().all(|(a, b)| a <= b);
    outcome(pass, format!("(ML, MMSE) SER per point {pairs:?}"))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let dir = tmp.path();
    let mut failures = 0;
    let mut report_line = |id: u32, name: &str, limit: Duration, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let out = f();
        let elapsed = start.elapsed();
        let pass = out.pass && elapsed <= limit;
        if !pass {
            failures += 1;
        }
        println!(
            "criterion {id} {name}: {} ({:.2?}, limit {:?}) {}",
            if pass { "PASS" } else { "FAIL" },
            elapsed,
            limit,
            out.detail
        );
    };
    let secs = Duration::from_secs;

    report_line(1, "power table", secs(1), &mut || power_table(&dir.join("c1")));
    report_line(2, "use-count identity", secs(10), &mut use_count_identity);
    report_line(3, "gemm timing", secs(1), &mut || gemm_timing(&dir.join("c3")));
    report_line(4, "photonic oracle equivalence", secs(60), &mut oracle_equivalence);
    report_line(5, "inversion convergence", secs(60), &mut inversion_convergence);

    // Criteria 6 and 9 share the sweep: one worker, then two, same directory
    // so the embedded spec is identical.
    let spec = precision_spec(&dir.join("c6"));
    let mut first_csv = Vec::new();
    report_line(6, "precision ordering", secs(600), &mut || {
        let report = run(&spec, 1);
        first_csv = std::fs::read(&report.csv).expect("csv written");
        precision_ordering(&report)
    });
    report_line(7, "antenna scaling", secs(600), &mut || antenna_scaling(&dir.join("c7")));
    report_line(8, "ML optimality", secs(60), &mut || ml_optimality(&dir.join("c8")));
    report_line(9, "determinism across worker counts", secs(600), &mut || {
        let report = run(&spec, 2);
        let second = std::fs::read(&report.csv).expect("csv written");
        outcome(
            !first_csv.is_empty() && first_csv == second,
            format!("{} bytes, identical={}", second.len(), first_csv == second),
        )
    });

    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}

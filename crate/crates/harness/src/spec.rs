//! Experiment configuration: the JSON schema read by `--config`.

use std::fmt;
use std::path::{Path, PathBuf};

use photomimo_core::inverse::Inverter;
use photomimo_core::mimo::{Arithmetic, Detector, DetectorSpec, Modulation};
use photomimo_core::photonic::{validate_config, Severity};
use photomimo_core::HardwareConfig;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const DEFAULT_TRIALS: u64 = 10_000;
pub const DEFAULT_OUTPUT_DIR: &str = "results";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    SerSweep,
    PrecisionSweep,
    AntennaSweep,
    GemmBench,
    PowerTable,
    InvertDemo,
}

impl ExperimentKind {
    pub fn id(self) -> &'static str {
        match self {
            ExperimentKind::SerSweep => "ser_sweep",
            ExperimentKind::PrecisionSweep => "precision_sweep",
            ExperimentKind::AntennaSweep => "antenna_sweep",
            ExperimentKind::GemmBench => "gemm_bench",
            ExperimentKind::PowerTable => "power_table",
            ExperimentKind::InvertDemo => "invert_demo",
        }
    }

    pub fn is_ser_sweep(self) -> bool {
        matches!(
            self,
            ExperimentKind::SerSweep | ExperimentKind::PrecisionSweep | ExperimentKind::AntennaSweep
        )
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InverterKind {
    Exact,
    Neumann,
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArithmeticKind {
    Exact,
    Photonic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MimoSpec {
    pub m_antennas: usize,
    pub k_users: usize,
    pub modulation: Modulation,
    pub detector: Detector,
    pub inverter: InverterKind,
    /// Neumann terms or Newton iterations.
    pub terms: usize,
    pub arithmetic: ArithmeticKind,
}

impl Default for MimoSpec {
    fn default() -> Self {
        Self {
            m_antennas: 64,
            k_users: 8,
            modulation: Modulation::Qpsk,
            detector: Detector::Mmse,
            inverter: InverterKind::Neumann,
            terms: 3,
            arithmetic: ArithmeticKind::Photonic,
        }
    }
}

impl MimoSpec {
    pub fn inverter(&self) -> Inverter {
        match self.inverter {
            InverterKind::Exact => Inverter::Exact,
            InverterKind::Neumann => Inverter::Neumann { terms: self.terms },
            InverterKind::Newton => Inverter::Newton {
                iterations: self.terms,
            },
        }
    }

    pub fn detector_spec(&self, hardware: &HardwareConfig) -> DetectorSpec {
        DetectorSpec {
            detector: self.detector,
            inverter: self.inverter(),
            arithmetic: match self.arithmetic {
                ArithmeticKind::Exact => Arithmetic::Exact,
                ArithmeticKind::Photonic => Arithmetic::Photonic(hardware.clone()),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoreDims {
    #[serde(rename = "channels_D")]
    pub channels_d: usize,
    #[serde(rename = "rings_R")]
    pub rings_r: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GemmDims {
    pub name: String,
    pub m: usize,
    pub n: usize,
    pub k: usize,
}

/// Sweep axes beyond the SNR grid. Empty lists take per-kind defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub precision_bits: Vec<u32>,
    pub antennas: Vec<usize>,
    pub hardware_grid: Vec<CoreDims>,
    pub gemm: Vec<GemmDims>,
}

impl SweepSpec {
    pub fn precision_bits_or_default(&self) -> Vec<u32> {
        if self.precision_bits.is_empty() {
            vec![6, 8]
        } else {
            self.precision_bits.clone()
        }
    }

    pub fn antennas_or_default(&self) -> Vec<usize> {
        if self.antennas.is_empty() {
            vec![32, 64, 128]
        } else {
            self.antennas.clone()
        }
    }

    pub fn hardware_grid_or_default(&self, kind: ExperimentKind) -> Vec<CoreDims> {
        if !self.hardware_grid.is_empty() {
            return self.hardware_grid.clone();
        }
        let dims: &[(usize, usize)] = match kind {
            ExperimentKind::PowerTable => &[(32, 32), (64, 32), (64, 64)],
            _ => &[(8, 8), (16, 16), (32, 32), (64, 32), (64, 64)],
        };
        dims.iter()
            .map(|&(channels_d, rings_r)| CoreDims { channels_d, rings_r })
            .collect()
    }

    pub fn gemm_or_default(&self) -> Vec<GemmDims> {
        if !self.gemm.is_empty() {
            return self.gemm.clone();
        }
        vec![
            GemmDims {
                name: "benchmark1".into(),
                m: 7680,
                n: 1500,
                k: 2560,
            },
            GemmDims {
                name: "benchmark2".into(),
                m: 10752,
                n: 1,
                k: 3584,
            },
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub hardware: HardwareConfig,
    #[serde(default)]
    pub mimo: MimoSpec,
    #[serde(default)]
    pub snr_grid_db: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub sweep: SweepSpec,
}

fn default_trials() -> u64 {
    DEFAULT_TRIALS
}

fn default_output_dir() -> PathBuf {
    PathBuf::from(DEFAULT_OUTPUT_DIR)
}

/// −24 dB to −14 dB in 2 dB steps.
pub fn default_snr_grid() -> Vec<f64> {
    (0..6).map(|i| -24.0 + 2.0 * i as f64).collect()
}

impl ExperimentSpec {
    /// Spec with every field at its default and the default SNR grid.
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            hardware: HardwareConfig::default(),
            mimo: MimoSpec::default(),
            snr_grid_db: default_snr_grid(),
            trials: DEFAULT_TRIALS,
            master_seed: 0,
            output_dir: default_output_dir(),
            sweep: SweepSpec::default(),
        }
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config {
            origin: origin.display().to_string(),
            message: e.to_string(),
        })?;
        spec.validate().map_err(|e| match e {
            HarnessError::Config { message, .. } => HarnessError::Config {
                origin: origin.display().to_string(),
                message,
            },
            other => other,
        })?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text, path)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("spec serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, message: String| {
            Err(HarnessError::Config {
                origin: "spec".into(),
                message: format!("field `{field}`: {message}"),
            })
        };
        if self.trials == 0 {
            return fail("trials", "must be at least 1".into());
        }
        if self.kind.is_ser_sweep() {
            if self.snr_grid_db.is_empty() {
                return fail("snr_grid_db", format!("must be non-empty for {}", self.kind));
            }
            if let Some(x) = self.snr_grid_db.iter().find(|x| !x.is_finite()) {
                return fail("snr_grid_db", format!("{x} is not a finite number"));
            }
            if self.mimo.m_antennas == 0 || self.mimo.k_users == 0 {
                return fail("mimo", "m_antennas and k_users must be positive".into());
            }
            if self.sweep.antennas.contains(&0) {
                return fail("sweep.antennas", "antenna counts must be positive".into());
            }
        }
        if let Some(f) = validate_config(&self.hardware)
            .into_iter()
            .find(|f| f.severity == Severity::Error)
        {
            return fail(&format!("hardware.{}", f.field), f.message);
        }
        for dims in &self.sweep.hardware_grid {
            let cfg = HardwareConfig::with_dims(dims.channels_d, dims.rings_r);
            if let Some(f) = validate_config(&cfg).into_iter().find(|f| f.severity == Severity::Error) {
                return fail(&format!("sweep.hardware_grid.{}", f.field), f.message);
            }
        }
        for bits in &self.sweep.precision_bits {
            let cfg = self.hardware.clone().with_precision(*bits);
            if let Err(e) = cfg.check() {
                return fail("sweep.precision_bits", e.to_string());
            }
        }
        for g in &self.sweep.gemm {
            if g.m == 0 || g.n == 0 || g.k == 0 {
                return fail("sweep.gemm", format!("{}: dimensions must be positive", g.name));
            }
        }
        Ok(())
    }
}

//! Massive-MIMO uplink: Rayleigh channels, constellations, AWGN, and the ZF,
//! MMSE and ML detectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inverse::Inverter;
use crate::matrix::{ComplexMatrix, ExactArithmetic, MatMul, C64};
use crate::photonic::{HardwareConfig, PhotonicArithmetic};

/// Largest number of candidate vectors [`ml_detect`] will enumerate.
pub const ML_SEARCH_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    Qpsk,
    Qam16,
}

impl Modulation {
    pub fn label(self) -> &'static str {
        match self {
            Modulation::Qpsk => "qpsk",
            Modulation::Qam16 => "qam16",
        }
    }
}

/// A unit-energy constellation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationSet {
    pub name: Modulation,
    pub points: Vec<C64>,
}

impl ModulationSet {
    pub fn new(name: Modulation) -> Self {
        let points = match name {
            Modulation::Qpsk => {
                let a = std::f64::consts::FRAC_1_SQRT_2;
                vec![C64::new(a, a), C64::new(-a, a), C64::new(-a, -a), C64::new(a, -a)]
            }
            Modulation::Qam16 => {
                let levels = [-3.0, -1.0, 1.0, 3.0];
                let norm = 10f64.sqrt();
                levels
                    .iter()
                    .flat_map(|&i| levels.iter().map(move |&q| C64::new(i / norm, q / norm)))
                    .collect()
            }
        };
        Self { name, points }
    }

    pub fn qpsk() -> Self {
        Self::new(Modulation::Qpsk)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the nearest point; ties go to the lowest index.
    pub fn slice(&self, z: C64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    pub fn symbols(&self, indices: &[usize]) -> ComplexMatrix {
        ComplexMatrix::column(indices.iter().map(|&i| self.points[i]).collect())
    }
}

/// One uplink realisation `y = H x + n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionProblem {
    pub h: ComplexMatrix,
    pub sigma2: f64,
    pub x: ComplexMatrix,
    pub y: ComplexMatrix,
    pub true_indices: Vec<usize>,
}

/// Noise variance for a per-symbol SNR in dB with unit-energy symbols.
pub fn noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `M × K` matrix of i.i.d. CN(0, 1) entries.
pub fn sample_rayleigh_channel(m_antennas: usize, k_users: usize, seed: u64) -> ComplexMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rayleigh_channel_from(&mut rng, m_antennas, k_users)
}

pub fn rayleigh_channel_from<R: Rng + ?Sized>(rng: &mut R, m_antennas: usize, k_users: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(m_antennas, k_users, |_, _| complex_gaussian(rng))
}

impl DetectionProblem {
    /// Draws channel, symbols and noise, in that order, from `rng`. The noise
    /// is drawn at unit variance and scaled, so the same stream gives the same
    /// noise direction at every SNR.
    pub fn sample<R: Rng + ?Sized>(
        rng: &mut R,
        m_antennas: usize,
        k_users: usize,
        snr_db: f64,
        modulation: &ModulationSet,
    ) -> Self {
        let h = rayleigh_channel_from(rng, m_antennas, k_users);
        let true_indices: Vec<usize> = (0..k_users).map(|_| rng.random_range(0..modulation.len())).collect();
        let x = modulation.symbols(&true_indices);
        let sigma2 = noise_variance(snr_db);
        let std = sigma2.sqrt();
        let noise = ComplexMatrix::from_fn(m_antennas, 1, |_, _| complex_gaussian(rng) * std);
        let y = &(&h * &x) + &noise;
        Self {
            h,
            sigma2,
            x,
            y,
            true_indices,
        }
    }
}

fn gram_on<E: MatMul + ?Sized>(engine: &E, h: &ComplexMatrix) -> Result<ComplexMatrix> {
    engine.matmul(&h.hermitian(), h)
}

/// Zero-forcing detection matrix `(Hᴴ H)⁻¹ Hᴴ`.
pub fn zf_matrix(h: &ComplexMatrix) -> Result<ComplexMatrix> {
    h.gram().exact_inverse()?.matmul(&h.hermitian())
}

/// MMSE detection matrix `(Hᴴ H + σ² I)⁻¹ Hᴴ` in exact arithmetic.
pub fn mmse_matrix(h: &ComplexMatrix, sigma2: f64, inverter: Inverter) -> Result<ComplexMatrix> {
    if sigma2.is_nan() || sigma2 < 0.0 {
        return Err(Error::domain("mmse_matrix", format!("noise variance {sigma2} is negative")));
    }
    let mut g = h.gram();
    for i in 0..g.rows() {
        g[(i, i)] += C64::new(sigma2, 0.0);
    }
    let inv = inverter.invert(&ExactArithmetic, &g)?;
    inv.matmul(&h.hermitian())
}

/// MMSE detection matrix with every product on `engine`; the inverter sees
/// `Hᴴ H + σ² I` as produced by the engine.
pub fn mmse_matrix_with<E: MatMul + ?Sized>(
    engine: &E,
    h: &ComplexMatrix,
    sigma2: f64,
    inverter: Inverter,
) -> Result<ComplexMatrix> {
    if sigma2.is_nan() || sigma2 < 0.0 {
        return Err(Error::domain("mmse_matrix", format!("noise variance {sigma2} is negative")));
    }
    let mut g = gram_on(engine, h)?;
    for i in 0..g.rows() {
        g[(i, i)] += C64::new(sigma2, 0.0);
    }
    let inv = inverter.invert(engine, &g)?;
    engine.matmul(&inv, &h.hermitian())
}

/// `x̂ = A y` followed by per-entry slicing.
pub fn detect_linear(a: &ComplexMatrix, y: &ComplexMatrix, modulation: &ModulationSet) -> Result<Vec<usize>> {
    detect_linear_with(&ExactArithmetic, a, y, modulation)
}

pub fn detect_linear_with<E: MatMul + ?Sized>(
    engine: &E,
    a: &ComplexMatrix,
    y: &ComplexMatrix,
    modulation: &ModulationSet,
) -> Result<Vec<usize>> {
    if y.cols() != 1 {
        return Err(Error::shape("detect_linear", format!("y is {:?}, expected a column", y.shape())));
    }
    let x_hat = engine.matmul(a, y)?;
    Ok(x_hat.as_slice().iter().map(|&z| modulation.slice(z)).collect())
}

/// Exhaustive maximum-likelihood search over all `|S|^K` symbol vectors.
/// Candidates are visited in lexicographic index order and only a strictly
/// smaller distance replaces the incumbent.
pub fn ml_detect(h: &ComplexMatrix, y: &ComplexMatrix, modulation: &ModulationSet) -> Result<Vec<usize>> {
    let (m, k) = h.shape();
    if y.shape() != (m, 1) {
        return Err(Error::shape(
            "ml_detect",
            format!("channel is {m}x{k} but y is {:?}", y.shape()),
        ));
    }
    let size = (modulation.len() as f64).powi(k as i32);
    if size > ML_SEARCH_LIMIT {
        return Err(Error::Capacity {
            size,
            limit: ML_SEARCH_LIMIT,
        });
    }
    let q = modulation.len();
    let mut idx = vec![0usize; k];
    let mut best = idx.clone();
    let mut best_d = f64::INFINITY;
    let mut r = vec![C64::new(0.0, 0.0); m];
    loop {
        for (i, ri) in r.iter_mut().enumerate() {
            let mut acc = y[(i, 0)];
            for (u, &s) in idx.iter().enumerate() {
                acc -= h[(i, u)] * modulation.points[s];
            }
            *ri = acc;
        }
        let d: f64 = r.iter().map(|z| z.norm_sqr()).sum();
        if d < best_d {
            best_d = d;
            best.copy_from_slice(&idx);
        }
        // odometer increment, last user fastest
        let mut pos = k;
        loop {
            if pos == 0 {
                return Ok(best);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < q {
                break;
            }
            idx[pos] = 0;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detector {
    Zf,
    Mmse,
    Ml,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Arithmetic {
    Exact,
    Photonic(HardwareConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorSpec {
    pub detector: Detector,
    pub inverter: Inverter,
    pub arithmetic: Arithmetic,
}

impl DetectorSpec {
    pub fn exact_mmse() -> Self {
        Self {
            detector: Detector::Mmse,
            inverter: Inverter::Exact,
            arithmetic: Arithmetic::Exact,
        }
    }

    pub fn photonic_mmse(inverter: Inverter, config: HardwareConfig) -> Self {
        Self {
            detector: Detector::Mmse,
            inverter,
            arithmetic: Arithmetic::Photonic(config),
        }
    }

    pub fn ml() -> Self {
        Self {
            detector: Detector::Ml,
            inverter: Inverter::Exact,
            arithmetic: Arithmetic::Exact,
        }
    }

    /// Detects the symbol indices of `problem`.
    pub fn detect(&self, problem: &DetectionProblem, modulation: &ModulationSet) -> Result<Vec<usize>> {
        match &self.arithmetic {
            Arithmetic::Exact => self.detect_on(&ExactArithmetic, problem, modulation),
            Arithmetic::Photonic(cfg) => {
                self.detect_on(&PhotonicArithmetic::new(cfg.clone()), problem, modulation)
            }
        }
    }

    fn detect_on<E: MatMul + ?Sized>(
        &self,
        engine: &E,
        problem: &DetectionProblem,
        modulation: &ModulationSet,
    ) -> Result<Vec<usize>> {
        let a = match self.detector {
            Detector::Ml => return ml_detect(&problem.h, &problem.y, modulation),
            Detector::Zf => mmse_matrix_with(engine, &problem.h, 0.0, self.inverter)?,
            Detector::Mmse => mmse_matrix_with(engine, &problem.h, problem.sigma2, self.inverter)?,
        };
        detect_linear_with(engine, &a, &problem.y, modulation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub errors: u64,
    pub symbols: u64,
}

impl std::ops::Add for TrialOutcome {
    type Output = TrialOutcome;

    fn add(self, rhs: TrialOutcome) -> TrialOutcome {
        TrialOutcome {
            errors: self.errors + rhs.errors,
            symbols: self.symbols + rhs.symbols,
        }
    }
}

impl TrialOutcome {
    pub fn ser(&self) -> f64 {
        if self.symbols == 0 {
            0.0
        } else {
            self.errors as f64 / self.symbols as f64
        }
    }
}

/// Seed of trial `index` under `master`: a SplitMix64 finaliser over both, so
/// trial streams do not depend on how trials are scheduled.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index)
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One channel realisation carrying one symbol vector; returns the number of
/// mis-detected user symbols.
pub fn run_ser_trial(
    m_antennas: usize,
    k_users: usize,
    snr_db: f64,
    modulation: &ModulationSet,
    detector: &DetectorSpec,
    seed: u64,
) -> Result<TrialOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let problem = DetectionProblem::sample(&mut rng, m_antennas, k_users, snr_db, modulation);
    let detected = detector.detect(&problem, modulation)?;
    let errors = detected
        .iter()
        .zip(&problem.true_indices)
        .filter(|(a, b)| a != b)
        .count() as u64;
    Ok(TrialOutcome {
        errors,
        symbols: k_users as u64,
    })
}

/// Per-element dominance of a Gram matrix: smallest diagonal magnitude over
/// largest off-diagonal magnitude.
pub fn dominance_ratio(g: &ComplexMatrix) -> f64 {
    let n = g.rows();
    let mut min_diag = f64::INFINITY;
    let mut max_off: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let v = g[(i, j)].norm();
            if i == j {
                min_diag = min_diag.min(v);
            } else {
                max_off = max_off.max(v);
            }
        }
    }
    if max_off == 0.0 {
        f64::INFINITY
    } else {
        min_diag / max_off
    }
}

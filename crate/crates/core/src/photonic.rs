//! Behavioral model of the broadcast-and-weight multiply-accumulate core.
//!
//! A single use of the core multiplies a `D × R` block of nonnegative
//! intensities by `R` signed weights and emits `D` sums. Arbitrary complex
//! products are mapped onto it in three steps:
//!
//! 1. split each complex product into four real products (`rr`, `ii`, `ri`, `ir`);
//! 2. lift every real LHS into the nonnegative range by a constant shift and
//!    add a compensation product `shift·1 × (−B)`;
//! 3. tile the result over `D` output rows and `R` inner-dimension slabs, with
//!    zero padding at the edges.
//!
//! Values are normalised per tile by their largest magnitude before the
//! quantizers see them, and the analog summation itself is treated as exact.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, MatMul, C64};

/// Largest number of wavelength channels a single waveguide can carry.
pub const MAX_RINGS: usize = 100;

/// Largest supported quantizer depth; beyond this the level grid is finer than
/// an `f64` mantissa.
pub const MAX_PRECISION_BITS: u32 = 52;

/// Number of single-use invocations per tile: four real products, each with a
/// shifted and a compensation half.
pub const BRANCHES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareConfig {
    /// Parallel multiplexed waveguides (`D`).
    #[serde(rename = "channels_D")]
    pub channels_d: usize,
    /// Wavelengths, i.e. MRR pairs, per waveguide (`R`).
    #[serde(rename = "rings_R")]
    pub rings_r: usize,
    /// Magnitude bits of the modulator control, sign bit excluded.
    pub precision_bits: u32,
    /// Ring radius in μm.
    pub mrr_radius: f64,
    pub finesse: f64,
    pub n_eff: f64,
    /// Time per single use of the core in ps.
    pub t_single_use: f64,
    /// Number of MRRs that can be manufactured on one chip.
    pub mrr_budget: usize,
}

impl Default for HardwareConfig {
    fn default() -> Self {
        Self {
            channels_d: 8,
            rings_r: 8,
            precision_bits: 8,
            mrr_radius: 10.0,
            finesse: 368.0,
            n_eff: 2.4,
            t_single_use: 100.0,
            mrr_budget: 1024,
        }
    }
}

impl HardwareConfig {
    pub fn with_dims(channels_d: usize, rings_r: usize) -> Self {
        Self {
            channels_d,
            rings_r,
            ..Self::default()
        }
    }

    pub fn with_precision(mut self, bits: u32) -> Self {
        self.precision_bits = bits;
        self
    }

    /// Total MRR count: `R` modulators plus `R` weights on each of `D` waveguides.
    pub fn mrr_count(&self) -> usize {
        2 * self.channels_d * self.rings_r
    }

    /// Fails with [`Error::Config`] if [`validate_config`] reports any error.
    pub fn check(&self) -> Result<()> {
        let errors: Vec<String> = validate_config(self)
            .into_iter()
            .filter(|f| f.severity == Severity::Error)
            .map(|f| f.to_string())
            .collect();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors.join("; ")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Finding {
    pub severity: Severity,
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{level}: {}: {}", self.field, self.message)
    }
}

pub fn validate_config(cfg: &HardwareConfig) -> Vec<Finding> {
    let mut out = Vec::new();
    let mut err = |field, message: String| {
        out.push(Finding {
            severity: Severity::Error,
            field,
            message,
        })
    };
    if cfg.channels_d == 0 {
        err("channels_D", "must be positive".into());
    }
    if cfg.rings_r == 0 {
        err("rings_R", "must be positive".into());
    }
    if cfg.rings_r > MAX_RINGS {
        err(
            "rings_R",
            format!("{} exceeds the {MAX_RINGS}-channel limit per waveguide", cfg.rings_r),
        );
    }
    if cfg.precision_bits == 0 || cfg.precision_bits > MAX_PRECISION_BITS {
        err(
            "precision_bits",
            format!("{} not in 1..={MAX_PRECISION_BITS}", cfg.precision_bits),
        );
    }
    for (field, value) in [
        ("mrr_radius", cfg.mrr_radius),
        ("finesse", cfg.finesse),
        ("n_eff", cfg.n_eff),
        ("t_single_use", cfg.t_single_use),
    ] {
        if !(value > 0.0 && value.is_finite()) {
            err(field, format!("{value} is not a positive number"));
        }
    }
    if cfg.mrr_budget == 0 {
        err("mrr_budget", "must be positive".into());
    }
    if cfg.mrr_budget > 0 && cfg.mrr_count() > cfg.mrr_budget {
        out.push(Finding {
            severity: Severity::Warning,
            field: "mrr_budget",
            message: format!(
                "2·D·R = {} MRRs exceeds the manufacturable budget of {}",
                cfg.mrr_count(),
                cfg.mrr_budget
            ),
        });
    }
    out
}

/// Dense real matrix, row-major. Used for the real-valued branches.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::shape(
                "RealMatrix::from_vec",
                format!("{rows}x{cols} with {} entries", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows[0].as_ref().len();
        let data: Vec<f64> = rows.iter().flat_map(|r| r.as_ref().to_vec()).collect();
        Self::from_vec(rows.len(), cols, data).expect("from_rows: ragged or empty input")
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Exact real product.
    pub fn matmul(&self, rhs: &RealMatrix) -> Result<RealMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::shape(
                "RealMatrix::matmul",
                format!("{}x{} times {}x{}", self.rows, self.cols, rhs.rows, rhs.cols),
            ));
        }
        let mut out = vec![0.0; self.rows * rhs.cols];
        for i in 0..self.rows {
            for p in 0..self.cols {
                let a = self.get(i, p);
                for j in 0..rhs.cols {
                    out[i * rhs.cols + j] += a * rhs.get(p, j);
                }
            }
        }
        Ok(Self {
            rows: self.rows,
            cols: rhs.cols,
            data: out,
        })
    }

    fn re(m: &ComplexMatrix) -> Self {
        Self {
            rows: m.rows(),
            cols: m.cols(),
            data: m.re_parts(),
        }
    }

    fn im(m: &ComplexMatrix) -> Self {
        Self {
            rows: m.rows(),
            cols: m.cols(),
            data: m.im_parts(),
        }
    }
}

/// One of the four real products of a complex product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Product {
    Rr,
    Ii,
    Ri,
    Ir,
}

impl Product {
    pub const ALL: [Product; 4] = [Product::Rr, Product::Ii, Product::Ri, Product::Ir];
}

/// Which half of the negative-shift identity a single use computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Shifted,
    Compensation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BranchTag {
    pub product: Product,
    pub part: Part,
}

impl BranchTag {
    pub fn all() -> impl Iterator<Item = BranchTag> {
        Product::ALL.into_iter().flat_map(|product| {
            [Part::Shifted, Part::Compensation]
                .into_iter()
                .map(move |part| BranchTag { product, part })
        })
    }

    fn from_index(idx: usize) -> Self {
        BranchTag {
            product: Product::ALL[idx / 2],
            part: if idx.is_multiple_of(2) {
                Part::Shifted
            } else {
                Part::Compensation
            },
        }
    }
}

/// Operands of one real product.
#[derive(Debug, Clone, PartialEq)]
pub struct RealProduct {
    pub product: Product,
    pub lhs: RealMatrix,
    pub rhs: RealMatrix,
}

/// The four real products whose results recombine into `A × B` as
/// `real = rr − ii`, `imag = ri + ir`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexDecomposition {
    pub products: [RealProduct; 4],
}

impl ComplexDecomposition {
    /// Combines per-product results, given in [`Product::ALL`] order.
    pub fn recombine(results: &[RealMatrix; 4]) -> ComplexMatrix {
        let [rr, ii, ri, ir] = results;
        let data = (0..rr.data.len())
            .map(|i| C64::new(rr.data[i] - ii.data[i], ri.data[i] + ir.data[i]))
            .collect();
        ComplexMatrix::from_vec(rr.rows, rr.cols, data).expect("recombine: consistent shapes")
    }
}

pub fn complex_decompose(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexDecomposition> {
    if a.cols() != b.rows() {
        return Err(Error::shape(
            "complex_decompose",
            format!("{}x{} times {}x{}", a.rows(), a.cols(), b.rows(), b.cols()),
        ));
    }
    let (ar, ai) = (RealMatrix::re(a), RealMatrix::im(a));
    let (br, bi) = (RealMatrix::re(b), RealMatrix::im(b));
    let pair = |product, lhs: &RealMatrix, rhs: &RealMatrix| RealProduct {
        product,
        lhs: lhs.clone(),
        rhs: rhs.clone(),
    };
    Ok(ComplexDecomposition {
        products: [
            pair(Product::Rr, &ar, &br),
            pair(Product::Ii, &ai, &bi),
            pair(Product::Ri, &ar, &bi),
            pair(Product::Ir, &ai, &br),
        ],
    })
}

/// Lifts `a` into the nonnegative range: returns `a + shift·1` and
/// `shift = max(0, −min a)`, so that `a × B = shifted × B + shift·1 × (−B)`.
pub fn negative_shift(a: &RealMatrix) -> (RealMatrix, f64) {
    let shift = (-a.min()).max(0.0);
    if shift == 0.0 {
        return (a.clone(), 0.0);
    }
    // max(0) guards the −0.0/rounding corner at the minimum entry itself.
    (a.map(|x| (x + shift).max(0.0)), shift)
}

/// A single use of the core.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileJob {
    /// Rows of the LHS (and of the output) this use covers; at most `D` long.
    pub lhs_rows: Range<usize>,
    /// Inner-dimension slab; at most `R` long.
    pub lhs_cols: Range<usize>,
    pub rhs_col: usize,
    pub branch: BranchTag,
}

/// Schedule of single uses realising an `m × n` by `n × k` product.
///
/// Jobs are generated on demand in a fixed order (branch, output column, row
/// block, slab), so even very large plans are cheap to hold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TilePlan {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub d: usize,
    pub r: usize,
    pub use_count: usize,
}

impl TilePlan {
    pub fn row_blocks(&self) -> usize {
        self.m.div_ceil(self.d)
    }

    pub fn slabs(&self) -> usize {
        self.n.div_ceil(self.r)
    }

    pub fn len(&self) -> usize {
        self.use_count
    }

    pub fn is_empty(&self) -> bool {
        self.use_count == 0
    }

    /// The `idx`-th job in execution order.
    pub fn job(&self, idx: usize) -> TileJob {
        assert!(idx < self.use_count, "job index {idx} out of range");
        let ix = self.job_indices(idx);
        TileJob {
            lhs_rows: ix.block * self.d..((ix.block + 1) * self.d).min(self.m),
            lhs_cols: ix.slab * self.r..((ix.slab + 1) * self.r).min(self.n),
            rhs_col: ix.col,
            branch: BranchTag::from_index(ix.branch),
        }
    }

    pub fn jobs(&self) -> impl ExactSizeIterator<Item = TileJob> + '_ {
        (0..self.use_count).map(move |i| self.job(i))
    }
}

/// Tiles an `m × n` by `n × k` product for the given core. Always accounts for
/// all eight branches.
pub fn tile_plan(m: usize, n: usize, k: usize, cfg: &HardwareConfig) -> TilePlan {
    assert!(m > 0 && n > 0 && k > 0, "tile_plan: dimensions must be positive");
    assert!(
        cfg.channels_d > 0 && cfg.rings_r > 0,
        "tile_plan: hardware dimensions must be positive"
    );
    let (d, r) = (cfg.channels_d, cfg.rings_r);
    TilePlan {
        m,
        n,
        k,
        d,
        r,
        use_count: BRANCHES * k * m.div_ceil(d) * n.div_ceil(r),
    }
}

fn levels(bits: u32, op: &'static str) -> Result<f64> {
    if bits == 0 || bits > MAX_PRECISION_BITS {
        return Err(Error::domain(op, format!("precision of {bits} bits not supported")));
    }
    Ok(((1u64 << bits) - 1) as f64)
}

/// Rounds `v ∈ [0, 1]` to the nearest of `2^bits` evenly spaced levels,
/// halves rounding up.
pub fn quantize_intensity(v: f64, bits: u32) -> Result<f64> {
    let top = levels(bits, "quantize_intensity")?;
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::domain("quantize_intensity", format!("{v} outside [0, 1]")));
    }
    Ok((v * top + 0.5).floor() / top)
}

/// Sign-magnitude quantization of `v ∈ [−1, 1]` with `bits` magnitude bits.
pub fn quantize_weight(v: f64, bits: u32) -> Result<f64> {
    if !(-1.0..=1.0).contains(&v) {
        return Err(Error::domain("quantize_weight", format!("{v} outside [-1, 1]")));
    }
    let mag = quantize_intensity(v.abs(), bits)?;
    Ok(if v < 0.0 { -mag } else { mag })
}

/// Normalisation applied to one single use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleRecord {
    pub intensity_scale: f64,
    pub weight_scale: f64,
    pub shift: f64,
}

impl ScaleRecord {
    pub fn new(intensity_scale: f64, weight_scale: f64, shift: f64) -> Result<Self> {
        if !(intensity_scale > 0.0 && weight_scale > 0.0 && shift >= 0.0) {
            return Err(Error::domain(
                "ScaleRecord",
                format!("scales must be positive and shift nonnegative, got {intensity_scale}, {weight_scale}, {shift}"),
            ));
        }
        Ok(Self {
            intensity_scale,
            weight_scale,
            shift,
        })
    }
}

fn max_or_one(values: impl Iterator<Item = f64>) -> f64 {
    let m = values.fold(0.0, f64::max);
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Sum of quantized products for one waveguide, rescaled to physical units.
/// Shared by [`single_use_mac`] and the tiled executor so both produce the
/// same bits.
#[inline]
fn waveguide_sum(q_lhs: &[f64], q_rhs: &[f64], scale: f64) -> f64 {
    q_lhs.iter().zip(q_rhs).map(|(a, b)| a * b).sum::<f64>() * scale
}

/// One use of the core: `lhs` is a `d × r` block of nonnegative intensities
/// (row-major), `rhs` the `r` signed weights.
pub fn single_use_mac(
    lhs: &RealMatrix,
    rhs: &[f64],
    cfg: &HardwareConfig,
    scales: &ScaleRecord,
) -> Result<Vec<f64>> {
    if lhs.rows > cfg.channels_d || lhs.cols > cfg.rings_r || rhs.len() != lhs.cols {
        return Err(Error::shape(
            "single_use_mac",
            format!(
                "{}x{} tile with {} weights on a {}x{} core",
                lhs.rows,
                lhs.cols,
                rhs.len(),
                cfg.channels_d,
                cfg.rings_r
            ),
        ));
    }
    let bits = cfg.precision_bits;
    let q_rhs = rhs
        .iter()
        .map(|&w| quantize_weight(w / scales.weight_scale, bits))
        .collect::<Result<Vec<f64>>>()
        .map_err(|e| Error::domain("single_use_mac", format!("weight scale violated: {e}")))?;
    let scale = scales.intensity_scale * scales.weight_scale;
    let mut out = Vec::with_capacity(lhs.rows);
    let mut q_row = vec![0.0; lhs.cols];
    for i in 0..lhs.rows {
        for (q, &x) in q_row.iter_mut().zip(&lhs.data[i * lhs.cols..(i + 1) * lhs.cols]) {
            *q = quantize_intensity(x / scales.intensity_scale, bits).map_err(|e| {
                Error::domain("single_use_mac", format!("intensity scale violated: {e}"))
            })?;
        }
        out.push(waveguide_sum(&q_row, &q_rhs, scale));
    }
    Ok(out)
}

/// Quantized, normalised copy of one real product's operands, laid out per
/// tile so every job reads contiguous slices.
struct PreparedBranch {
    /// Per (row block, slab): `d × r` quantized intensities, zero padded.
    lhs_tiles: Vec<Vec<f64>>,
    lhs_scales: Vec<f64>,
    /// Per (slab, column): `r` quantized weights, zero padded.
    rhs_segments: Vec<Vec<f64>>,
    rhs_scales: Vec<f64>,
    skip: bool,
}

impl PreparedBranch {
    fn new(lhs: &RealMatrix, rhs: &RealMatrix, plan: &TilePlan, bits: u32, negate_rhs: bool) -> Result<Self> {
        let (d, r) = (plan.d, plan.r);
        let (blocks, slabs) = (plan.row_blocks(), plan.slabs());
        let skip = lhs.is_zero() || rhs.is_zero();

        let mut lhs_tiles = Vec::with_capacity(blocks * slabs);
        let mut lhs_scales = Vec::with_capacity(blocks * slabs);
        let mut rhs_segments = Vec::with_capacity(slabs * plan.k);
        let mut rhs_scales = Vec::with_capacity(slabs * plan.k);
        if skip {
            return Ok(Self {
                lhs_tiles,
                lhs_scales,
                rhs_segments,
                rhs_scales,
                skip,
            });
        }

        for block in 0..blocks {
            let rows = block * d..((block + 1) * d).min(plan.m);
            for slab in 0..slabs {
                let cols = slab * r..((slab + 1) * r).min(plan.n);
                let s = max_or_one(rows.clone().flat_map(|i| cols.clone().map(move |j| lhs.get(i, j))));
                let mut tile = vec![0.0; d * r];
                for (ti, i) in rows.clone().enumerate() {
                    for (tj, j) in cols.clone().enumerate() {
                        tile[ti * r + tj] = quantize_intensity(lhs.get(i, j) / s, bits)?;
                    }
                }
                lhs_tiles.push(tile);
                lhs_scales.push(s);
            }
        }
        let sign = if negate_rhs { -1.0 } else { 1.0 };
        for slab in 0..slabs {
            let inner = slab * r..((slab + 1) * r).min(plan.n);
            for col in 0..plan.k {
                let s = max_or_one(inner.clone().map(|p| rhs.get(p, col).abs()));
                let mut seg = vec![0.0; r];
                for (t, p) in inner.clone().enumerate() {
                    seg[t] = quantize_weight(sign * rhs.get(p, col) / s, bits)?;
                }
                rhs_segments.push(seg);
                rhs_scales.push(s);
            }
        }
        Ok(Self {
            lhs_tiles,
            lhs_scales,
            rhs_segments,
            rhs_scales,
            skip,
        })
    }
}

/// Runs `a × b` through the emulated core and returns the result together
/// with the executed plan.
pub fn photonic_matmul(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    cfg: &HardwareConfig,
) -> Result<(ComplexMatrix, TilePlan)> {
    cfg.check()?;
    let decomposition = complex_decompose(a, b)?;
    let (m, n, k) = (a.rows(), a.cols(), b.cols());
    let plan = tile_plan(m, n, k, cfg);
    let bits = cfg.precision_bits;

    // Eight prepared branches in BranchTag::from_index order.
    let mut branches = Vec::with_capacity(BRANCHES);
    for product in &decomposition.products {
        let (shifted, shift) = negative_shift(&product.lhs);
        branches.push(PreparedBranch::new(&shifted, &product.rhs, &plan, bits, false)?);
        let compensation = RealMatrix::filled(m, n, shift);
        branches.push(PreparedBranch::new(&compensation, &product.rhs, &plan, bits, true)?);
    }

    let mut partial = vec![vec![0.0; m * k]; BRANCHES];
    let slabs = plan.slabs();
    let r = plan.r;
    for idx in 0..plan.use_count {
        let job = plan.job_indices(idx);
        let prepared = &branches[job.branch];
        if prepared.skip {
            continue;
        }
        let tile_id = job.block * slabs + job.slab;
        let seg_id = job.slab * k + job.col;
        let tile = &prepared.lhs_tiles[tile_id];
        let seg = &prepared.rhs_segments[seg_id];
        let scale = prepared.lhs_scales[tile_id] * prepared.rhs_scales[seg_id];
        let out = &mut partial[job.branch];
        let row0 = job.block * plan.d;
        for (ti, i) in (row0..(row0 + plan.d).min(m)).enumerate() {
            out[i * k + job.col] += waveguide_sum(&tile[ti * r..(ti + 1) * r], seg, scale);
        }
    }

    let results: Vec<RealMatrix> = (0..4)
        .map(|p| {
            let data = partial[2 * p]
                .iter()
                .zip(&partial[2 * p + 1])
                .map(|(s, c)| s + c)
                .collect();
            RealMatrix { rows: m, cols: k, data }
        })
        .collect();
    let results: [RealMatrix; 4] = results.try_into().expect("four products");
    Ok((ComplexDecomposition::recombine(&results), plan))
}

struct JobIndices {
    branch: usize,
    col: usize,
    block: usize,
    slab: usize,
}

impl TilePlan {
    fn job_indices(&self, idx: usize) -> JobIndices {
        let slabs = self.slabs();
        let blocks = self.row_blocks();
        JobIndices {
            slab: idx % slabs,
            block: (idx / slabs) % blocks,
            col: (idx / (slabs * blocks)) % self.k,
            branch: idx / (slabs * blocks * self.k),
        }
    }
}

/// [`MatMul`] backend that routes every product through [`photonic_matmul`].
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonicArithmetic {
    pub config: HardwareConfig,
}

impl PhotonicArithmetic {
    pub fn new(config: HardwareConfig) -> Self {
        Self { config }
    }
}

impl MatMul for PhotonicArithmetic {
    fn matmul(&self, a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
        photonic_matmul(a, b, &self.config).map(|(m, _)| m)
    }
}

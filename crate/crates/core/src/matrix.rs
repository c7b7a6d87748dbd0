//! Dense complex matrices in row-major storage.
//!
//! Everything here runs in full double precision and serves as the reference
//! arithmetic the photonic emulator is compared against.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Relative pivot threshold below which [`ComplexMatrix::exact_inverse`]
/// reports the input as singular.
pub const SINGULAR_PIVOT_RTOL: f64 = 1e-12;

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::shape(
                "from_vec",
                format!("dimensions must be positive, got {rows}x{cols}"),
            ));
        }
        if data.len() != rows * cols {
            return Err(Error::shape(
                "from_vec",
                format!("{rows}x{cols} needs {} entries, got {}", rows * cols, data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged or empty input; meant
    /// for literals in tests and examples.
    pub fn from_rows<R: AsRef<[C64]>>(rows: &[R]) -> Self {
        let r = rows.len();
        assert!(r > 0, "from_rows: no rows");
        let c = rows[0].as_ref().len();
        assert!(c > 0, "from_rows: empty row");
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            let row = row.as_ref();
            assert_eq!(row.len(), c, "from_rows: ragged input");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    /// Real-valued literal helper.
    pub fn from_real_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let converted: Vec<Vec<C64>> = rows
            .iter()
            .map(|row| row.as_ref().iter().map(|&x| C64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&converted)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        assert!(rows > 0 && cols > 0, "from_fn: dimensions must be positive");
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "zeros: dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |i, j| if i == j { diag[i] } else { ZERO })
    }

    /// Column vector from entries.
    pub fn column(entries: Vec<C64>) -> Self {
        let n = entries.len();
        Self::from_vec(n, 1, entries).expect("column: empty vector")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    /// Real parts as a row-major `f64` vector.
    pub fn re_parts(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.re).collect()
    }

    /// Imaginary parts as a row-major `f64` vector.
    pub fn im_parts(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.im).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    /// Exact product `self × rhs`.
    pub fn matmul(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::shape(
                "matmul",
                format!(
                    "{}x{} times {}x{}",
                    self.rows, self.cols, rhs.rows, rhs.cols
                ),
            ));
        }
        let mut out = vec![ZERO; self.rows * rhs.cols];
        for i in 0..self.rows {
            let out_row = &mut out[i * rhs.cols..(i + 1) * rhs.cols];
            for (p, &a) in self.row(i).iter().enumerate() {
                if a == ZERO {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(p)) {
                    *o += a * b;
                }
            }
        }
        Ok(Self {
            rows: self.rows,
            cols: rhs.cols,
            data: out,
        })
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> ComplexMatrix {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    /// `hᴴ h`, filled from the upper triangle so the result is Hermitian
    /// bit for bit (with an exactly real diagonal).
    pub fn gram(&self) -> ComplexMatrix {
        let n = self.cols;
        let mut g = Self::zeros(n, n);
        for i in 0..n {
            let mut d = 0.0;
            for p in 0..self.rows {
                d += self[(p, i)].norm_sqr();
            }
            g[(i, i)] = C64::new(d, 0.0);
            for j in i + 1..n {
                let mut acc = ZERO;
                for p in 0..self.rows {
                    acc += self[(p, i)].conj() * self[(p, j)];
                }
                g[(i, j)] = acc;
                g[(j, i)] = acc.conj();
            }
        }
        g
    }

    /// Inverse through LU decomposition with partial pivoting.
    pub fn exact_inverse(&self) -> Result<ComplexMatrix> {
        if !self.is_square() {
            return Err(Error::shape(
                "exact_inverse",
                format!("matrix is {}x{}, expected square", self.rows, self.cols),
            ));
        }
        let n = self.rows;
        let scale = self.max_abs();
        if scale == 0.0 {
            return Err(Error::singular("exact_inverse", "zero matrix"));
        }
        let threshold = SINGULAR_PIVOT_RTOL * scale;

        let mut lu = self.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (pivot_row, pivot_mag) = (k..n)
                .map(|i| (i, lu[i * n + k].norm()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot_mag < threshold {
                return Err(Error::singular(
                    "exact_inverse",
                    format!("pivot {pivot_mag:.3e} at column {k} below {threshold:.3e}"),
                ));
            }
            if pivot_row != k {
                for j in 0..n {
                    lu.swap(k * n + j, pivot_row * n + j);
                }
                perm.swap(k, pivot_row);
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let factor = lu[i * n + k] / pivot;
                lu[i * n + k] = factor;
                if factor == ZERO {
                    continue;
                }
                for j in k + 1..n {
                    let u = lu[k * n + j];
                    lu[i * n + j] -= factor * u;
                }
            }
        }

        // Solve L U x = P e_col for each column of the identity.
        let mut inv = Self::zeros(n, n);
        let mut x = vec![ZERO; n];
        for col in 0..n {
            for i in 0..n {
                let mut acc = if perm[i] == col { ONE } else { ZERO };
                for j in 0..i {
                    acc -= lu[i * n + j] * x[j];
                }
                x[i] = acc;
            }
            for i in (0..n).rev() {
                let mut acc = x[i];
                for j in i + 1..n {
                    acc -= lu[i * n + j] * x[j];
                }
                x[i] = acc / lu[i * n + i];
            }
            for i in 0..n {
                inv[(i, col)] = x[i];
            }
        }
        Ok(inv)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `‖self − other‖_F / ‖other‖_F`; falls back to the absolute difference
    /// when `other` is zero.
    pub fn relative_error(&self, other: &ComplexMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape(), "relative_error: shape mismatch");
        let diff = (self - other).frobenius_norm();
        let base = other.frobenius_norm();
        if base == 0.0 {
            diff
        } else {
            diff / base
        }
    }

    /// Largest entrywise magnitude of `self − other`.
    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff: shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.shape(), rhs.shape(), "add: shape mismatch");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.shape(), rhs.shape(), "sub: shape mismatch");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

/// Operator form of [`ComplexMatrix::matmul`]; panics on shape mismatch.
impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs).expect("matrix product shape mismatch")
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for z in self.row(i) {
                write!(f, "{:+.4}{:+.4}j ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Anything that can multiply two complex matrices. The detection pipeline and
/// the iterative inverters are generic over this so the same code runs on
/// exact arithmetic and on the emulated photonic core.
pub trait MatMul {
    fn matmul(&self, a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix>;
}

/// Exact double-precision arithmetic.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactArithmetic;

impl MatMul for ExactArithmetic {
    fn matmul(&self, a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
        a.matmul(b)
    }
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> ComplexMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexMatrix::from_fn(rows, cols, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    /// Diagonally loaded random matrix; condition number stays small.
    pub fn well_conditioned(n: usize, seed: u64) -> ComplexMatrix {
        let mut m = random_matrix(n, n, seed);
        for i in 0..n {
            m[(i, i)] += C64::new(2.0 * n as f64, 0.0);
        }
        m
    }
}

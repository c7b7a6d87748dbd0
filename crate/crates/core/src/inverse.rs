//! Iterative matrix-inverse approximations built purely from matrix products:
//! the truncated Neumann series around the diagonal and Newton iteration.
//!
//! Both routines take a [`MatMul`] backend for the products that would run on
//! the accelerator. Residual diagnostics (`‖I − X A‖_F`) are always computed in
//! exact arithmetic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, ExactArithmetic, MatMul, C64};

/// Residual tolerance used by the convenience entry points.
pub const DEFAULT_TOLERANCE: f64 = 1e-6;

/// Number of consecutive residual increases that marks a run as diverging.
pub const DIVERGENCE_PATIENCE: usize = 3;

/// Default power-iteration length for [`spectral_radius_estimate`].
pub const DEFAULT_POWER_ITERATIONS: usize = 50;

/// Diagonal / hollow decomposition of a square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagSplit {
    pub diag: ComplexMatrix,
    pub offdiag: ComplexMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// `‖I − X A‖_F` for the initial estimate followed by one entry per
    /// term or iteration actually performed.
    pub residuals: Vec<f64>,
    pub terms_used: usize,
    pub converged: bool,
    /// Index into `residuals` of the returned iterate.
    pub best_index: usize,
    pub diverged: bool,
}

impl ConvergenceReport {
    pub fn final_residual(&self) -> f64 {
        self.residuals[self.best_index]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Inverter {
    Exact,
    Neumann { terms: usize },
    Newton { iterations: usize },
}

impl Inverter {
    pub fn label(&self) -> String {
        match self {
            Inverter::Exact => "exact".to_string(),
            Inverter::Neumann { terms } => format!("neumann{terms}"),
            Inverter::Newton { iterations } => format!("newton{iterations}"),
        }
    }

    /// Inverts `a` with this strategy, running products on `engine`.
    pub fn invert<E: MatMul + ?Sized>(&self, engine: &E, a: &ComplexMatrix) -> Result<ComplexMatrix> {
        match *self {
            Inverter::Exact => a.exact_inverse(),
            Inverter::Neumann { terms } => {
                neumann_inverse_with(engine, a, terms, &InverseOptions::default()).map(|(m, _)| m)
            }
            Inverter::Newton { iterations } => {
                newton_inverse_with(engine, a, iterations, None, &InverseOptions::default())
                    .map(|(m, _)| m)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct InverseOptions {
    /// `converged` is set when the best residual is at or below this value.
    pub tolerance: f64,
    /// Whether to stop early after [`DIVERGENCE_PATIENCE`] consecutive
    /// residual increases.
    pub stop_on_divergence: bool,
    /// General preconditioner `X` for the Neumann expansion
    /// `Σ (X⁻¹(X − A))ⁿ X⁻¹`. `None` means the diagonal of `A`.
    pub preconditioner: Option<ComplexMatrix>,
}

impl Default for InverseOptions {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            stop_on_divergence: true,
            preconditioner: None,
        }
    }
}

pub fn diag_split(a: &ComplexMatrix) -> Result<DiagSplit> {
    if !a.is_square() {
        return Err(Error::shape(
            "diag_split",
            format!("matrix is {}x{}, expected square", a.rows(), a.cols()),
        ));
    }
    let n = a.rows();
    let zero = C64::new(0.0, 0.0);
    let diag = ComplexMatrix::from_fn(n, n, |i, j| if i == j { a[(i, j)] } else { zero });
    let offdiag = ComplexMatrix::from_fn(n, n, |i, j| if i == j { zero } else { a[(i, j)] });
    Ok(DiagSplit { diag, offdiag })
}

/// Reciprocal of the diagonal of `a` as a diagonal matrix.
pub fn inverse_diagonal(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !a.is_square() {
        return Err(Error::shape(
            "inverse_diagonal",
            format!("matrix is {}x{}, expected square", a.rows(), a.cols()),
        ));
    }
    let mut recip = Vec::with_capacity(a.rows());
    for (i, d) in a.diagonal().into_iter().enumerate() {
        if d.norm() == 0.0 {
            return Err(Error::singular(
                "inverse_diagonal",
                format!("zero diagonal entry at index {i}"),
            ));
        }
        recip.push(d.inv());
    }
    Ok(ComplexMatrix::from_diagonal(&recip))
}

/// `‖I − X A‖_F`, evaluated exactly.
pub fn left_residual(approx_inverse: &ComplexMatrix, a: &ComplexMatrix) -> f64 {
    let prod = approx_inverse * a;
    (&ComplexMatrix::identity(a.rows()) - &prod).frobenius_norm()
}

/// Tracks residuals, the best iterate, and the divergence rule.
struct Tracker {
    residuals: Vec<f64>,
    best: ComplexMatrix,
    best_index: usize,
    rising: usize,
    diverged: bool,
    stop_on_divergence: bool,
}

impl Tracker {
    fn new(initial: ComplexMatrix, residual: f64, stop_on_divergence: bool) -> Self {
        Self {
            residuals: vec![residual],
            best: initial,
            best_index: 0,
            rising: 0,
            diverged: false,
            stop_on_divergence,
        }
    }

    /// Records an iterate; returns `false` when the run should stop.
    fn push(&mut self, iterate: &ComplexMatrix, residual: f64) -> bool {
        let prev = *self.residuals.last().expect("tracker starts non-empty");
        self.residuals.push(residual);
        // NaN never compares as an improvement.
        if residual < self.residuals[self.best_index] {
            self.best = iterate.clone();
            self.best_index = self.residuals.len() - 1;
        }
        if residual > prev || residual.is_nan() {
            self.rising += 1;
        } else {
            self.rising = 0;
        }
        if self.rising >= DIVERGENCE_PATIENCE {
            self.diverged = true;
            return !self.stop_on_divergence;
        }
        true
    }

    fn finish(self, tolerance: f64) -> (ComplexMatrix, ConvergenceReport) {
        let best_residual = self.residuals[self.best_index];
        let report = ConvergenceReport {
            terms_used: self.residuals.len() - 1,
            converged: !self.diverged && best_residual <= tolerance,
            best_index: self.best_index,
            diverged: self.diverged,
            residuals: self.residuals,
        };
        (self.best, report)
    }
}

/// Truncated Neumann series `Σ_{n=0..terms} (−D⁻¹ A_off)ⁿ D⁻¹` in exact
/// arithmetic, `D` being the diagonal of `a`.
pub fn neumann_inverse(a: &ComplexMatrix, terms: usize) -> Result<(ComplexMatrix, ConvergenceReport)> {
    neumann_inverse_with(&ExactArithmetic, a, terms, &InverseOptions::default())
}

/// Neumann series with explicit backend and options.
///
/// Accumulates in Horner form, `S₀ = X⁻¹`, `S_{j+1} = X⁻¹ + T S_j` with
/// `T = X⁻¹(X − A)`, so each added term costs one product on `engine` and every
/// partial sum `S_j` is itself the `j`-term approximation.
pub fn neumann_inverse_with<E: MatMul + ?Sized>(
    engine: &E,
    a: &ComplexMatrix,
    terms: usize,
    opts: &InverseOptions,
) -> Result<(ComplexMatrix, ConvergenceReport)> {
    let split = diag_split(a)?;
    let (x_inv, step) = match &opts.preconditioner {
        None => {
            let d_inv = inverse_diagonal(a)?;
            // D⁻¹ is diagonal, so −D⁻¹ A_off is a row scaling.
            let n = a.rows();
            let step = ComplexMatrix::from_fn(n, n, |i, j| -(d_inv[(i, i)] * split.offdiag[(i, j)]));
            (d_inv, step)
        }
        Some(x) => {
            if x.shape() != a.shape() {
                return Err(Error::shape(
                    "neumann_inverse",
                    format!("preconditioner is {:?}, matrix is {:?}", x.shape(), a.shape()),
                ));
            }
            let x_inv = x.exact_inverse()?;
            let step = x_inv.matmul(&(x - a))?;
            (x_inv, step)
        }
    };

    let mut tracker = Tracker::new(x_inv.clone(), left_residual(&x_inv, a), opts.stop_on_divergence);
    let mut partial = x_inv.clone();
    for _ in 0..terms {
        let next = &x_inv + &engine.matmul(&step, &partial)?;
        let residual = left_residual(&next, a);
        partial = next;
        if !tracker.push(&partial, residual) {
            break;
        }
    }
    Ok(tracker.finish(opts.tolerance))
}

/// Newton iteration `Xₙ = Xₙ₋₁(2I − A Xₙ₋₁)` in exact arithmetic. `x0`
/// defaults to the reciprocal diagonal of `a`.
pub fn newton_inverse(
    a: &ComplexMatrix,
    iterations: usize,
    x0: Option<&ComplexMatrix>,
) -> Result<(ComplexMatrix, ConvergenceReport)> {
    newton_inverse_with(&ExactArithmetic, a, iterations, x0, &InverseOptions::default())
}

pub fn newton_inverse_with<E: MatMul + ?Sized>(
    engine: &E,
    a: &ComplexMatrix,
    iterations: usize,
    x0: Option<&ComplexMatrix>,
    opts: &InverseOptions,
) -> Result<(ComplexMatrix, ConvergenceReport)> {
    if !a.is_square() {
        return Err(Error::shape(
            "newton_inverse",
            format!("matrix is {}x{}, expected square", a.rows(), a.cols()),
        ));
    }
    let start = match x0 {
        Some(x) if x.shape() != a.shape() => {
            return Err(Error::shape(
                "newton_inverse",
                format!("initial estimate is {:?}, matrix is {:?}", x.shape(), a.shape()),
            ))
        }
        Some(x) => x.clone(),
        None => inverse_diagonal(a)?,
    };
    let n = a.rows();
    let two_i = ComplexMatrix::identity(n).scale(C64::new(2.0, 0.0));

    let mut tracker = Tracker::new(start.clone(), left_residual(&start, a), opts.stop_on_divergence);
    let mut x = start;
    for _ in 0..iterations {
        let ax = engine.matmul(a, &x)?;
        x = engine.matmul(&x, &(&two_i - &ax))?;
        let residual = left_residual(&x, a);
        if !tracker.push(&x, residual) {
            break;
        }
    }
    Ok(tracker.finish(opts.tolerance))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEstimate {
    pub radius: f64,
    pub iterations: usize,
}

/// Power-iteration estimate of the largest eigenvalue magnitude of `m`.
///
/// The start vector is a fixed-seed random complex vector, so repeated calls
/// agree. Advisory only: for matrices with several dominant eigenvalues of
/// equal magnitude the estimate can oscillate.
pub fn spectral_radius_estimate(m: &ComplexMatrix, iterations: usize) -> Result<SpectralEstimate> {
    if !m.is_square() {
        return Err(Error::shape(
            "spectral_radius_estimate",
            format!("matrix is {}x{}, expected square", m.rows(), m.cols()),
        ));
    }
    let n = m.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_5bec);
    let mut v = ComplexMatrix::from_fn(n, 1, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    v = v.scale(C64::new(1.0 / v.frobenius_norm(), 0.0));

    let mut radius = 0.0;
    let mut done = 0;
    for _ in 0..iterations.max(1) {
        done += 1;
        let w = m * &v;
        radius = w.frobenius_norm();
        if radius == 0.0 {
            break;
        }
        v = w.scale(C64::new(1.0 / radius, 0.0));
    }
    Ok(SpectralEstimate {
        radius,
        iterations: done,
    })
}

/// `I − D⁻¹ A`: the Neumann iteration matrix for the diagonal preconditioner.
pub fn neumann_iteration_matrix(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let d_inv = inverse_diagonal(a)?;
    Ok(&ComplexMatrix::identity(a.rows()) - &(&d_inv * a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::test_util::random_matrix;
    use proptest::prelude::*;

    fn real(rows: &[&[f64]]) -> ComplexMatrix {
        ComplexMatrix::from_real_rows(rows)
    }

    #[test]
    fn split_example() {
        let s = diag_split(&real(&[&[2.0, 1.0], &[3.0, 4.0]])).unwrap();
        assert_eq!(s.diag, real(&[&[2.0, 0.0], &[0.0, 4.0]]));
        assert_eq!(s.offdiag, real(&[&[0.0, 1.0], &[3.0, 0.0]]));
    }

    #[test]
    fn split_of_diagonal_has_zero_offdiag() {
        let d = real(&[&[5.0, 0.0], &[0.0, -1.0]]);
        let s = diag_split(&d).unwrap();
        assert_eq!(s.offdiag, ComplexMatrix::zeros(2, 2));
    }

    #[test]
    fn split_rejects_non_square() {
        assert!(matches!(
            diag_split(&ComplexMatrix::zeros(2, 3)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn neumann_diagonal_zero_terms_is_exact() {
        let d = real(&[&[2.0, 0.0], &[0.0, 4.0]]);
        let (inv, report) = neumann_inverse(&d, 0).unwrap();
        assert_eq!(inv, d.exact_inverse().unwrap());
        assert_eq!(report.residuals.len(), 1);
        assert_eq!(report.terms_used, 0);
        assert!(report.converged);
    }

    #[test]
    fn neumann_residual_strictly_decreases() {
        let a = real(&[&[2.0, 0.1], &[0.1, 2.0]]);
        let (_, report) = neumann_inverse(&a, 6).unwrap();
        assert_eq!(report.residuals.len(), 7);
        for w in report.residuals.windows(2) {
            assert!(w[1] < w[0], "{:?}", report.residuals);
        }
        // residual after j terms is ‖T^{j+1}‖_F with T = −D⁻¹A_off, here
        // T = [[0, −0.05], [−0.05, 0]], so ‖T^{j+1}‖_F = √2 · 0.05^{j+1}.
        for (j, r) in report.residuals.iter().enumerate() {
            let expected = 2f64.sqrt() * 0.05f64.powi(j as i32 + 1);
            assert!((r - expected).abs() <= 1e-15 + 1e-9 * expected, "{j}: {r} vs {expected}");
        }
    }

    #[test]
    fn neumann_zero_diagonal_is_singular() {
        let a = real(&[&[0.0, 1.0], &[1.0, 2.0]]);
        assert!(matches!(neumann_inverse(&a, 3), Err(Error::Singular { .. })));
    }

    #[test]
    fn neumann_reports_divergence_and_returns_best() {
        // Not diagonally dominant: ρ(D⁻¹A_off) = 3.
        let a = real(&[&[1.0, 3.0], &[3.0, 1.0]]);
        let (inv, report) = neumann_inverse(&a, 10).unwrap();
        assert!(report.diverged);
        assert!(!report.converged);
        assert_eq!(report.terms_used, DIVERGENCE_PATIENCE);
        assert_eq!(report.best_index, 0);
        assert_eq!(inv, inverse_diagonal(&a).unwrap());
    }

    #[test]
    fn neumann_with_full_preconditioner_is_exact_immediately() {
        let a = real(&[&[2.0, 0.5], &[0.3, 1.0]]);
        let opts = InverseOptions {
            preconditioner: Some(a.clone()),
            ..InverseOptions::default()
        };
        let (inv, report) = neumann_inverse_with(&ExactArithmetic, &a, 2, &opts).unwrap();
        assert!(report.residuals[0] < 1e-15);
        assert!(inv.relative_error(&a.exact_inverse().unwrap()) < 1e-14);
    }

    #[test]
    fn newton_identity_is_fixed_point() {
        let i = ComplexMatrix::identity(4);
        for iters in [0, 1, 5] {
            let (inv, report) = newton_inverse(&i, iters, None).unwrap();
            assert_eq!(inv, i);
            assert!(report.residuals.iter().all(|&r| r == 0.0));
        }
    }

    #[test]
    fn newton_diagonal_matches_scalar_recurrence() {
        let a = real(&[&[2.0, 0.0], &[0.0, 4.0]]);
        let x0 = real(&[&[0.4, 0.0], &[0.0, 0.2]]);
        // scalar oracle: x ← x(2 − a x)
        let scalar = |a: f64, mut x: f64| {
            for _ in 0..5 {
                x *= 2.0 - a * x;
            }
            x
        };
        let (inv, report) = newton_inverse(&a, 5, Some(&x0)).unwrap();
        assert!((inv[(0, 0)].re - scalar(2.0, 0.4)).abs() < 1e-15);
        assert!((inv[(1, 1)].re - scalar(4.0, 0.2)).abs() < 1e-15);
        assert!((inv[(0, 0)].re - 0.5).abs() < 1e-10);
        assert!((inv[(1, 1)].re - 0.25).abs() < 1e-10);
        assert_eq!(report.terms_used, 5);
    }

    #[test]
    fn newton_diagonal_iteration_zero_is_reciprocal_diagonal() {
        let a = real(&[&[3.0, 0.0], &[0.0, 7.0]]);
        let (inv, _) = newton_inverse(&a, 0, None).unwrap();
        assert_eq!(inv, inverse_diagonal(&a).unwrap());
    }

    #[test]
    fn newton_errors() {
        let a = real(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert!(matches!(newton_inverse(&a, 2, None), Err(Error::Singular { .. })));
        let bad_x0 = ComplexMatrix::identity(3);
        assert!(matches!(
            newton_inverse(&a, 2, Some(&bad_x0)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn newton_divergence_is_reported() {
        let a = real(&[&[1.0, 3.0], &[3.0, 1.0]]);
        let (_, report) = newton_inverse(&a, 20, None).unwrap();
        assert!(report.diverged);
        assert!(!report.converged);
        assert!(report.terms_used < 20);
    }

    #[test]
    fn spectral_radius_examples() {
        let zero = ComplexMatrix::zeros(3, 3);
        assert_eq!(spectral_radius_estimate(&zero, 50).unwrap().radius, 0.0);
        let d = real(&[&[0.5, 0.0], &[0.0, 0.1]]);
        let est = spectral_radius_estimate(&d, DEFAULT_POWER_ITERATIONS).unwrap();
        assert!((est.radius - 0.5).abs() < 1e-6);
        assert_eq!(est.iterations, DEFAULT_POWER_ITERATIONS);
    }

    #[test]
    fn neumann_long_series_matches_exact_when_contractive() {
        for seed in 0..20 {
            let mut a = random_matrix(6, 6, seed);
            for i in 0..6 {
                a[(i, i)] += C64::new(6.0, 0.0);
            }
            let rho = spectral_radius_estimate(&neumann_iteration_matrix(&a).unwrap(), 200)
                .unwrap()
                .radius;
            if rho >= 0.9 {
                continue;
            }
            let (inv, _) = neumann_inverse(&a, 30).unwrap();
            let exact = a.exact_inverse().unwrap();
            assert!(inv.relative_error(&exact) <= 1e-8, "seed {seed}, rho {rho}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn split_reconstructs_bit_exactly(n in 1usize..9, seed: u64) {
            let a = random_matrix(n, n, seed);
            let s = diag_split(&a).unwrap();
            prop_assert_eq!(&s.diag + &s.offdiag, a);
            for i in 0..n {
                prop_assert_eq!(s.offdiag[(i, i)], C64::new(0.0, 0.0));
                for j in 0..n {
                    if i != j {
                        prop_assert_eq!(s.diag[(i, j)], C64::new(0.0, 0.0));
                    }
                }
            }
        }

        #[test]
        fn diagonal_input_is_exact_for_both_methods(
            diag in proptest::collection::vec(0.1f64..10.0, 1..8),
            terms in 0usize..4,
        ) {
            let d = ComplexMatrix::from_diagonal(
                &diag.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>());
            let expected = inverse_diagonal(&d).unwrap();
            let (neumann, _) = neumann_inverse(&d, terms).unwrap();
            prop_assert_eq!(neumann, expected.clone());
            let (newton, _) = newton_inverse(&d, 0, None).unwrap();
            prop_assert_eq!(newton, expected);
        }
    }
}

//! Monte-Carlo error bars.

/// z-value of a two-sided 95% normal interval.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Half-width of the normal-approximation 95% interval of a proportion
/// estimated from `n` Bernoulli samples.
pub fn ci95_halfwidth(p: f64, n: u64) -> f64 {
    if n == 0 {
        return f64::INFINITY;
    }
    Z95 * (p * (1.0 - p) / n as f64).sqrt()
}

/// Half-width of the 95% interval of `p1 − p2` for two independently
/// estimated proportions.
pub fn diff_ci95_halfwidth(p1: f64, n1: u64, p2: f64, n2: u64) -> f64 {
    if n1 == 0 || n2 == 0 {
        return f64::INFINITY;
    }
    Z95 * (p1 * (1.0 - p1) / n1 as f64 + p2 * (1.0 - p2) / n2 as f64).sqrt()
}

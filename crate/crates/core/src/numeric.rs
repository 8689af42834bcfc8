//! Small numeric helpers shared by the estimators: fixed-order summation,
//! angle wrapping, uniform angle grids and Hermitian trigonometric sums.

use num_complex::Complex64;
use std::f64::consts::PI;

const PAIRWISE_BLOCK: usize = 16;

/// Pairwise summation of `len` terms produced by `term(i)`.
///
/// The reduction tree depends only on `len`, so the result is reproducible
/// regardless of how callers parallelise the surrounding work.
pub fn pairwise_sum_by<F>(len: usize, term: &F) -> Complex64
where
    F: Fn(usize) -> Complex64,
{
    fn rec<F: Fn(usize) -> Complex64>(lo: usize, hi: usize, term: &F) -> Complex64 {
        if hi - lo <= PAIRWISE_BLOCK {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in lo..hi {
                acc += term(i);
            }
            acc
        } else {
            let mid = lo + (hi - lo) / 2;
            rec(lo, mid, term) + rec(mid, hi, term)
        }
    }
    rec(0, len, term)
}

pub fn pairwise_sum(values: &[Complex64]) -> Complex64 {
    pairwise_sum_by(values.len(), &|i| values[i])
}

pub fn pairwise_sum_real(values: &[f64]) -> f64 {
    pairwise_sum_by(values.len(), &|i| Complex64::new(values[i], 0.0)).re
}

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut t = (theta + PI).rem_euclid(two_pi) - PI;
    if t >= PI {
        t -= two_pi;
    }
    t
}

/// Shortest distance between two angles on the circle.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

/// Uniform grid `θ_j = -π + j·2π/size`, `j = 0..size`.
pub fn angle_grid(size: usize) -> Vec<f64> {
    let step = 2.0 * PI / size as f64;
    (0..size).map(|j| -PI + j as f64 * step).collect()
}

/// Evaluates `c_0 + Σ_{n=1}^{N} (c_n e^{-inθ} + conj(c_n) e^{inθ})`, the
/// two-sided sum of a coefficient sequence extended by `c_{-n} = conj(c_n)`.
pub fn hermitian_sum(coeffs: &[Complex64], theta: f64) -> Complex64 {
    let Some((first, rest)) = coeffs.split_first() else {
        return Complex64::new(0.0, 0.0);
    };
    let step = Complex64::from_polar(1.0, -theta);
    let mut phase = step;
    let mut real_part = 0.0;
    for (k, c) in rest.iter().enumerate() {
        let n = k + 1;
        if n % 256 == 0 {
            // re-anchor the recurrence to keep the phase error bounded
            phase = Complex64::from_polar(1.0, -(n as f64) * theta);
        }
        real_part += (c * phase).re;
        phase *= step;
    }
    Complex64::new(first.re + 2.0 * real_part, first.im)
}

//! Base-state sampling, harmonic-average eigenfunctions and the expansion
//! least-squares fit.

use crate::dynamics::{AggregatedState, Trajectory};
use crate::error::{invalid, Result};
use crate::numeric::{pairwise_sum, pairwise_sum_by, pairwise_sum_real};
use crate::observables::Observable;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Distinct states at which eigenfunctions and densities are tabulated.
///
/// Every base state keeps the list of `(trajectory, offset)` windows that
/// start from it, so bit-identical starts from independent realizations are
/// averaged.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseSamples {
    pub states: Vec<AggregatedState>,
    pub windows: Vec<Vec<(usize, usize)>>,
    /// Number of consecutive states available from every window start.
    pub horizon: usize,
}

impl BaseSamples {
    /// Takes offsets `0, stride, 2·stride, …` along each trajectory while a
    /// full window of `horizon` states still fits.
    pub fn collect(data: &[Trajectory], horizon: usize, stride: usize) -> Result<Self> {
        if data.is_empty() {
            return Err(invalid("no trajectories supplied"));
        }
        if horizon == 0 || stride == 0 {
            return Err(invalid("window horizon and stride must be positive"));
        }
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut states = Vec::new();
        let mut windows: Vec<Vec<(usize, usize)>> = Vec::new();
        for (r, traj) in data.iter().enumerate() {
            if traj.len() < horizon {
                return Err(invalid(format!(
                    "trajectory {r} has {} states; {horizon} are required",
                    traj.len()
                )));
            }
            for i in (0..=traj.len() - horizon).step_by(stride) {
                let y = &traj.states[i];
                let key: Vec<u64> = y.flatten().iter().map(|v| v.to_bits()).collect();
                let slot = *index.entry(key).or_insert_with(|| {
                    states.push(y.clone());
                    windows.push(Vec::new());
                    states.len() - 1
                });
                windows[slot].push((r, i));
            }
        }
        Ok(Self {
            states,
            windows,
            horizon,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Realization average of `g(T^t y_b)` for `t < len` at every base state.
    pub fn mean_paths(
        &self,
        data: &[Trajectory],
        g: &Observable,
        len: usize,
    ) -> Result<Vec<Vec<Complex64>>> {
        if len > self.horizon {
            return Err(invalid(format!(
                "{len} steps requested but windows hold {} states",
                self.horizon
            )));
        }
        let paths: Vec<Vec<Complex64>> = data
            .par_iter()
            .map(|t| g.sample(&t.states).values)
            .collect();
        Ok(self
            .windows
            .par_iter()
            .map(|wins| {
                (0..len)
                    .map(|t| {
                        pairwise_sum_by(wins.len(), &|k| paths[wins[k].0][wins[k].1 + t])
                            / wins.len() as f64
                    })
                    .collect()
            })
            .collect())
    }
}

/// A tabulated eigenfunction before it is paired with its eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenTable {
    /// Values at the base states, unit empirical norm unless `norm` is zero.
    pub values: Vec<Complex64>,
    /// Empirical norm before normalization.
    pub norm: f64,
}

/// Root mean square of a table.
pub fn empirical_norm(values: &[Complex64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let sq: Vec<f64> = values.iter().map(|v| v.norm_sqr()).collect();
    (pairwise_sum_real(&sq) / values.len() as f64).sqrt()
}

/// Harmonic average `(1/J) Σ_{j<J} e^{-ijθ} E[h(T^j y)]` at every base state,
/// normalized to unit empirical norm.
pub fn harmonic_average_eigenfunction(
    data: &[Trajectory],
    base: &BaseSamples,
    h: &Observable,
    theta: f64,
    terms: usize,
) -> Result<EigenTable> {
    if terms < 8 {
        return Err(invalid(format!(
            "harmonic average needs at least 8 terms, got {terms}"
        )));
    }
    if terms > base.horizon {
        return Err(invalid(format!(
            "{terms} harmonic terms exceed the {} states available per window",
            base.horizon
        )));
    }
    let means = base.mean_paths(data, h, terms)?;
    let phases: Vec<Complex64> = (0..terms)
        .map(|j| Complex64::from_polar(1.0, -(j as f64) * theta))
        .collect();
    let raw: Vec<Complex64> = means
        .par_iter()
        .map(|m| pairwise_sum_by(terms, &|j| phases[j] * m[j]) / terms as f64)
        .collect();
    let norm = empirical_norm(&raw);
    let values = if norm > 0.0 {
        raw.iter().map(|v| v / norm).collect()
    } else {
        raw
    };
    Ok(EigenTable { values, norm })
}

/// Least-squares coefficients of one observable on the eigenfunction tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionCoefficients {
    pub coefficients: Vec<Complex64>,
    /// Euclidean norm of `g - Σ c_λ φ_λ` over the samples.
    pub residual: f64,
}

/// Relative singular-value cutoff below which the design counts as rank deficient.
const RANK_TOLERANCE: f64 = 1e-10;

/// Solves `min_c Σ_i |g_i - Σ_λ c_λ φ_λ(y_i)|²` through an SVD, returning
/// the minimum-norm solution when the tables are (nearly) dependent.
pub fn fit_expansion_coefficients(
    g: &[Complex64],
    tables: &[&[Complex64]],
) -> Result<ExpansionCoefficients> {
    let rows = g.len();
    if tables.is_empty() {
        let sq: Vec<f64> = g.iter().map(|v| v.norm_sqr()).collect();
        return Ok(ExpansionCoefficients {
            coefficients: Vec::new(),
            residual: pairwise_sum_real(&sq).sqrt(),
        });
    }
    if rows < tables.len() {
        return Err(invalid(format!(
            "{rows} samples cannot determine {} coefficients",
            tables.len()
        )));
    }
    if let Some(k) = tables.iter().position(|t| t.len() != rows) {
        return Err(invalid(format!(
            "table {k} has {} rows, expected {rows}",
            tables[k].len()
        )));
    }
    let cols = tables.len();
    // complex problem as the equivalent real one [[Re, -Im], [Im, Re]]
    let design = DMatrix::from_fn(2 * rows, 2 * cols, |i, k| {
        let v = tables[k % cols][i % rows];
        match (i < rows, k < cols) {
            (true, true) | (false, false) => v.re,
            (true, false) => -v.im,
            (false, true) => v.im,
        }
    });
    let rhs = DVector::from_fn(
        2 * rows,
        |i, _| if i < rows { g[i].re } else { g[i - rows].im },
    );
    let svd = design.svd(true, true);
    let largest = svd.singular_values.max();
    let cutoff = largest * RANK_TOLERANCE;
    if svd.singular_values.iter().any(|s| *s <= cutoff) {
        log::warn!("eigenfunction tables are nearly dependent; using the minimum-norm solution");
    }
    let coefficients: Vec<Complex64> = if largest == 0.0 {
        vec![Complex64::new(0.0, 0.0); cols]
    } else {
        let x = svd
            .solve(&rhs, cutoff)
            .map_err(|e| invalid(format!("least squares failed: {e}")))?;
        (0..cols)
            .map(|k| Complex64::new(x[k], x[k + cols]))
            .collect()
    };
    let resid: Vec<f64> = (0..rows)
        .map(|i| {
            let fit: Complex64 = (0..cols).map(|k| coefficients[k] * tables[k][i]).sum();
            (g[i] - fit).norm_sqr()
        })
        .collect();
    Ok(ExpansionCoefficients {
        coefficients,
        residual: pairwise_sum_real(&resid).sqrt(),
    })
}

/// Alignment `|⟨a, b⟩| / (‖a‖ ‖b‖)` of two tables.
pub fn alignment(a: &[Complex64], b: &[Complex64]) -> f64 {
    let dot: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x.conj() * y).collect();
    let (na, nb) = (empirical_norm(a), empirical_norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (pairwise_sum(&dot) / a.len() as f64).norm() / (na * nb)
}

//! Exact finite-horizon solution of the scalar LQ mean-field problem.
//!
//! With `x = μ + x̃` and `u = ρ + ũ` the problem splits into a deviation
//! system `(a, b, q, r, g)` and a mean system `(a+c, b+b̄, q+q̄, r+r̄, g+ḡ)`,
//! each solved by a scalar Riccati recursion. A deterministic initial state
//! has `x̃_0 = 0`, so the deviation part only contributes the noise constant
//! `Σ_t P̃_{t+1} s²`.

use super::benchmarks::LqProblem;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub cost: f64,
    /// Mean feedback gains `ρ_t = -k_t μ_t`.
    pub mean_gains: Vec<f64>,
    /// Deviation feedback gains `ũ_t = -k̃_t x̃_t`.
    pub deviation_gains: Vec<f64>,
    /// Optimal control sequence from the deterministic initial state.
    pub controls: Vec<f64>,
    pub method: String,
}

struct Riccati {
    /// `P_0 … P_N`.
    values: Vec<f64>,
    gains: Vec<f64>,
}

fn riccati(a: f64, b: f64, q: f64, r: f64, g: f64, horizon: usize) -> Result<Riccati> {
    if q < 0.0 || r < 0.0 || g < 0.0 {
        return Err(Error::Unsupported(
            "cost weights must be non-negative for a convex quadratic problem".into(),
        ));
    }
    let mut values = vec![0.0; horizon + 1];
    let mut gains = vec![0.0; horizon];
    values[horizon] = g;
    for t in (0..horizon).rev() {
        let p = values[t + 1];
        let denom = r + b * b * p;
        let k = if denom > 0.0 { a * b * p / denom } else { 0.0 };
        gains[t] = k;
        values[t] = q + r * k * k + p * (a - b * k) * (a - b * k);
    }
    Ok(Riccati { values, gains })
}

/// Backward induction for the problem from `x_0 = problem.initial_state`.
pub fn solve_lq_meanfield_oracle(problem: &LqProblem) -> Result<OracleSolution> {
    let n = problem.horizon;
    if n == 0 {
        return Err(Error::Config(
            "benchmark.horizon: must be at least 1".into(),
        ));
    }
    let (am, bm) = (problem.a + problem.c, problem.b + problem.b_bar);
    let mean = riccati(
        am,
        bm,
        problem.q + problem.q_bar,
        problem.r + problem.r_bar,
        problem.g + problem.g_bar,
        n,
    )?;
    let dev = riccati(problem.a, problem.b, problem.q, problem.r, problem.g, n)?;
    let s2 = problem.noise * problem.noise;
    let noise_cost: f64 = (0..n).map(|t| dev.values[t + 1] * s2).sum();
    let x0 = problem.initial_state;
    let mut controls = Vec::with_capacity(n);
    let mut mu = x0;
    for t in 0..n {
        let u = -mean.gains[t] * mu;
        controls.push(u);
        mu = am * mu + bm * u;
    }
    Ok(OracleSolution {
        cost: mean.values[0] * x0 * x0 + noise_cost,
        mean_gains: mean.gains,
        deviation_gains: dev.gains,
        controls,
        method: "backward-induction".into(),
    })
}

/// Brute-force minimum over a control grid `{-bound + i·step}` for noise-free
/// problems with horizon at most 2.
pub fn enumerate_lq_oracle(problem: &LqProblem, step: f64, bound: f64) -> Result<f64> {
    if problem.noise != 0.0 || problem.horizon > 2 || problem.horizon == 0 {
        return Err(Error::Unsupported(
            "enumeration covers noise-free problems with horizon 1 or 2".into(),
        ));
    }
    let (am, bm) = (problem.a + problem.c, problem.b + problem.b_bar);
    let (q, r, g) = (
        problem.q + problem.q_bar,
        problem.r + problem.r_bar,
        problem.g + problem.g_bar,
    );
    let count = (2.0 * bound / step).round() as usize;
    let grid: Vec<f64> = (0..=count).map(|i| -bound + i as f64 * step).collect();
    let stage = |x: f64, u: f64| q * x * x + r * u * u;
    let tail = |x: f64| -> f64 {
        if problem.horizon == 1 {
            return g * x * x;
        }
        grid.iter()
            .map(|&u| {
                let x2 = am * x + bm * u;
                stage(x, u) + g * x2 * x2
            })
            .fold(f64::INFINITY, f64::min)
    };
    let x0 = problem.initial_state;
    Ok(grid
        .iter()
        .map(|&u| stage(x0, u) + tail(am * x0 + bm * u))
        .fold(f64::INFINITY, f64::min))
}

//! Lifted coordinates and the closed-form horizon objective.

use crate::dynamics::AggregatedState;
use crate::error::{Error, Result};
use crate::model::{quadrature_nodes, KoopmanSpectralModel, ObservableModel};
use crate::numeric::pairwise_sum_by;
use crate::observables::CostTerm;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Diagonal coordinates of one state: `z^λ = φ_λ(y)` and the continuous
/// aggregates `w^{g,(n)}` for g = F, C, G, H.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedState {
    pub z: Vec<Complex64>,
    /// Term-major: all F nodes, then C, G, H.
    pub w: Vec<Complex64>,
    /// Eigen angles aligned with `z`.
    pub angles: Vec<f64>,
    pub quadrature: usize,
    /// Steps propagated since the lift.
    pub elapsed: usize,
    pub source: AggregatedState,
}

impl LiftedState {
    pub fn w_term(&self, term: CostTerm) -> &[Complex64] {
        let k = term_index(term);
        &self.w[k * self.quadrature..(k + 1) * self.quadrature]
    }
}

fn term_index(term: CostTerm) -> usize {
    match term {
        CostTerm::F => 0,
        CostTerm::C => 1,
        CostTerm::G => 2,
        CostTerm::H => 3,
    }
}

fn cost_terms(model: &KoopmanSpectralModel) -> Result<[&ObservableModel; 4]> {
    let get = |t: CostTerm| {
        model.observable(t.name()).map_err(|_| {
            Error::Config(format!(
                "model has no fit for cost observable `{}`",
                t.name()
            ))
        })
    };
    Ok([
        get(CostTerm::F)?,
        get(CostTerm::C)?,
        get(CostTerm::G)?,
        get(CostTerm::H)?,
    ])
}

/// Lifts `y` through the model's interpolated tables.
pub fn lift(model: &KoopmanSpectralModel, y: &AggregatedState) -> Result<LiftedState> {
    let terms = cost_terms(model)?;
    let weights = model.interpolation_weights(y)?;
    let mut w = Vec::with_capacity(4 * model.quadrature);
    for obs in terms {
        w.extend(model.densities_at(obs, &weights));
    }
    Ok(LiftedState {
        z: model.eigenfunctions_at(&weights),
        w,
        angles: model.eigenpairs.iter().map(|e| e.theta).collect(),
        quadrature: model.quadrature,
        elapsed: 0,
        source: y.clone(),
    })
}

/// `z^λ ← λ^t z^λ`, `w^{(n)} ← e^{itθ_n} w^{(n)}`.
pub fn propagate_lifted(state: &LiftedState, steps: usize) -> LiftedState {
    let t = steps as f64;
    let nodes = quadrature_nodes(state.quadrature);
    let z = state
        .z
        .iter()
        .zip(&state.angles)
        .map(|(z, th)| z * Complex64::from_polar(1.0, t * th))
        .collect();
    let w = state
        .w
        .iter()
        .enumerate()
        .map(|(i, w)| w * Complex64::from_polar(1.0, t * nodes[i % state.quadrature]))
        .collect();
    LiftedState {
        z,
        w,
        angles: state.angles.clone(),
        quadrature: state.quadrature,
        elapsed: state.elapsed + steps,
        source: state.source.clone(),
    }
}

/// Predicted objective; `imaginary` should vanish for real cost maps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonCost {
    pub value: f64,
    pub imaginary: f64,
}

/// `Σ_{t<T} q^t` for `q = e^{iθ}`.
fn geometric(theta: f64, horizon: usize) -> Complex64 {
    let q = Complex64::from_polar(1.0, theta);
    let gap = Complex64::new(1.0, 0.0) - q;
    if gap.norm() < 1e-3 {
        pairwise_sum_by(horizon, &|t| Complex64::from_polar(1.0, t as f64 * theta))
    } else {
        (Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, horizon as f64 * theta)) / gap
    }
}

/// The horizon objective of a lifted state in closed form.
pub fn lifted_horizon_cost(
    model: &KoopmanSpectralModel,
    lifted: &LiftedState,
    horizon: usize,
) -> Result<HorizonCost> {
    let [f, c, g, h] = cost_terms(model)?;
    let big_t = horizon as f64;
    let point = pairwise_sum_by(lifted.z.len(), &|k| {
        let th = lifted.angles[k];
        let stage = f.expansion.coefficients[k] + c.expansion.coefficients[k];
        let term = g.expansion.coefficients[k] + h.expansion.coefficients[k];
        lifted.z[k]
            * (stage * geometric(th, horizon) + term * Complex64::from_polar(1.0, big_t * th))
    });
    let nodes = quadrature_nodes(lifted.quadrature);
    let (wf, wc, wg, wh) = (
        lifted.w_term(CostTerm::F),
        lifted.w_term(CostTerm::C),
        lifted.w_term(CostTerm::G),
        lifted.w_term(CostTerm::H),
    );
    let cont = pairwise_sum_by(nodes.len(), &|n| {
        (wf[n] + wc[n]) * geometric(nodes[n], horizon)
            + (wg[n] + wh[n]) * Complex64::from_polar(1.0, big_t * nodes[n])
    }) * (2.0 * PI / lifted.quadrature as f64);
    let total = point + cont;
    Ok(HorizonCost {
        value: total.re,
        imaginary: total.im,
    })
}

/// Lift, then [`lifted_horizon_cost`].
pub fn predict_horizon_cost(
    model: &KoopmanSpectralModel,
    y: &AggregatedState,
    horizon: usize,
) -> Result<HorizonCost> {
    lifted_horizon_cost(model, &lift(model, y)?, horizon)
}

/// Per-stage costs of the propagated lift: `T` stage values then the terminal value.
pub fn lifted_stage_costs(
    model: &KoopmanSpectralModel,
    lifted: &LiftedState,
    horizon: usize,
) -> Result<Vec<Complex64>> {
    let terms = cost_terms(model)?;
    let scale = 2.0 * PI / lifted.quadrature as f64;
    let value = |s: &LiftedState, pair: [usize; 2]| -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for idx in pair {
            let obs = terms[idx];
            acc += obs
                .expansion
                .coefficients
                .iter()
                .zip(&s.z)
                .map(|(c, z)| c * z)
                .sum::<Complex64>();
            acc += s.w[idx * s.quadrature..(idx + 1) * s.quadrature]
                .iter()
                .sum::<Complex64>()
                * scale;
        }
        acc
    };
    let mut out = Vec::with_capacity(horizon + 1);
    for t in 0..horizon {
        out.push(value(&propagate_lifted(lifted, t), [0, 1]));
    }
    out.push(value(&propagate_lifted(lifted, horizon), [2, 3]));
    Ok(out)
}

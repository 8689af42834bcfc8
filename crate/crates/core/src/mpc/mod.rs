//! Receding-horizon control in the lifted coordinates of a spectral model.
//!
//! The decision variable is the current control `u_k`; it enters through
//! the lift of `y_k = (x_k, μ_k, u_k, ρ_k)` and the horizon then evolves
//! under the learned diagonal dynamics.

mod lifted;

pub use lifted::{
    lift, lifted_horizon_cost, lifted_stage_costs, predict_horizon_cost, propagate_lifted,
    HorizonCost, LiftedState,
};

use crate::dynamics::{
    evaluate_cost, particle_rng, AggregatedState, CostSpec, InitialLaw, MeanFieldSystem, MeanMode,
    StationaryPolicy, Trajectory,
};
use crate::error::{invalid, Error, Result};
use crate::model::KoopmanSpectralModel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};

/// `coefficients · u ≤ bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearConstraint {
    pub coefficients: Vec<f64>,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// How the closed loop obtains the lifted state after the first step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LoopMode {
    /// Lift the realized state and re-solve every step.
    #[default]
    Relift,
    /// Solve once, then shift the lifted state open loop (`z_k ← z*_1`) and
    /// apply the data policy.
    PaperLiteral,
}

impl std::str::FromStr for LoopMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relift" => Ok(LoopMode::Relift),
            "paper-literal" => Ok(LoopMode::PaperLiteral),
            other => Err(Error::Registry {
                kind: "loop mode",
                name: other.into(),
                available: vec!["relift".into(), "paper-literal".into()],
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    pub horizon: usize,
    /// Must match the model's quadrature size when given.
    pub quadrature: Option<usize>,
    pub control_box: ControlBox,
    pub constraints: Vec<LinearConstraint>,
    /// Coarse-grid points per control dimension.
    pub grid_points: usize,
    /// Evaluation cap of the compass search.
    pub local_evaluations: usize,
    pub loop_mode: LoopMode,
    pub seed: u64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            quadrature: None,
            control_box: ControlBox {
                lo: vec![-2.0],
                hi: vec![2.0],
            },
            constraints: Vec::new(),
            grid_points: 81,
            local_evaluations: 100,
            loop_mode: LoopMode::Relift,
            seed: 0,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self, model: &KoopmanSpectralModel) -> Result<()> {
        let m = model.control_dim;
        let cb = &self.control_box;
        if self.horizon == 0 {
            return Err(Error::Config("mpc.horizon must be at least 1".into()));
        }
        if cb.lo.len() != m || cb.hi.len() != m {
            return Err(Error::Config(format!(
                "mpc.control_box must have {m} entries per bound"
            )));
        }
        if let Some(i) =
            (0..m).find(|&i| cb.lo[i].is_nan() || cb.hi[i].is_nan() || cb.lo[i] > cb.hi[i])
        {
            return Err(Error::Config(format!(
                "mpc.control_box: lo[{i}] exceeds hi[{i}]"
            )));
        }
        if self.grid_points == 0 {
            return Err(Error::Config("mpc.grid_points must be positive".into()));
        }
        if let Some(q) = self.quadrature {
            if q != model.quadrature {
                return Err(Error::Config(format!(
                    "mpc.quadrature {q} differs from the model's {}",
                    model.quadrature
                )));
            }
        }
        if let Some(c) = self.constraints.iter().find(|c| c.coefficients.len() != m) {
            return Err(Error::Config(format!(
                "linear constraint has {} coefficients for {m} controls",
                c.coefficients.len()
            )));
        }
        Ok(())
    }

    fn admissible(&self, u: &[f64]) -> bool {
        let cb = &self.control_box;
        u.iter()
            .enumerate()
            .all(|(i, v)| cb.lo[i] <= *v && *v <= cb.hi[i])
            && self.constraints.iter().all(|c| {
                c.coefficients
                    .iter()
                    .zip(u)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    <= c.bound
            })
    }

    fn grid_axis(&self, i: usize) -> Vec<f64> {
        let (lo, hi) = (self.control_box.lo[i], self.control_box.hi[i]);
        if self.grid_points == 1 || lo == hi {
            return vec![lo];
        }
        let step = (hi - lo) / (self.grid_points - 1) as f64;
        (0..self.grid_points)
            .map(|j| {
                if j + 1 == self.grid_points {
                    hi
                } else {
                    lo + j as f64 * step
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct MpcStepResult {
    pub control: Vec<f64>,
    pub predicted_cost: f64,
    pub imaginary_residue: f64,
    /// Lifted states `t = 0..=T` of the chosen control.
    pub lifted: Vec<LiftedState>,
    pub evaluations: usize,
    pub wall_time: Duration,
}

/// Everything except the wall time.
impl PartialEq for MpcStepResult {
    fn eq(&self, other: &Self) -> bool {
        self.control == other.control
            && self.predicted_cost.to_bits() == other.predicted_cost.to_bits()
            && self.imaginary_residue.to_bits() == other.imaginary_residue.to_bits()
            && self.lifted == other.lifted
            && self.evaluations == other.evaluations
    }
}

/// Relative margin a candidate must win by; absorbs interpolation rounding so
/// flat objectives keep the lexicographic tie-break.
const IMPROVEMENT_MARGIN: f64 = 1e-12;

fn improves(candidate: f64, incumbent: f64) -> bool {
    candidate < incumbent - IMPROVEMENT_MARGIN * incumbent.abs().max(1.0)
}

fn lexicographic_grid(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect();
    }
    out
}

/// Minimizes the predicted horizon cost over the admissible control set.
///
/// `rho` fixes the mean-control coordinate; when absent the candidate control
/// itself is used.
pub fn solve_mpc_step(
    model: &KoopmanSpectralModel,
    system: &MeanFieldSystem,
    x: &[f64],
    mu: &[f64],
    rho: Option<&[f64]>,
    config: &MpcConfig,
) -> Result<MpcStepResult> {
    let start = Instant::now();
    config.validate(model)?;
    if system.state_dim() != model.state_dim || system.control_dim() != model.control_dim {
        return Err(Error::Config("model and system dimensions differ".into()));
    }
    let m = model.control_dim;
    let state_for = |u: &[f64]| {
        let r = rho.map(|r| r.to_vec()).unwrap_or_else(|| u.to_vec());
        AggregatedState::new(x.to_vec(), mu.to_vec(), u.to_vec(), r)
    };
    let cost = |u: &[f64]| -> Result<HorizonCost> {
        predict_horizon_cost(model, &state_for(u), config.horizon)
    };

    let axes: Vec<Vec<f64>> = (0..m).map(|i| config.grid_axis(i)).collect();
    let candidates: Vec<Vec<f64>> = lexicographic_grid(&axes)
        .into_iter()
        .filter(|u| config.admissible(u))
        .collect();
    if candidates.is_empty() {
        return Err(Error::Config("admissible control set is empty".into()));
    }
    let costs: Vec<HorizonCost> = candidates
        .par_iter()
        .map(|u| cost(u))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, c) in costs.iter().enumerate() {
        if improves(c.value, costs[best].value) {
            best = i;
        }
    }
    let mut evaluations = candidates.len();
    let mut u_best = candidates[best].clone();
    let mut c_best = costs[best];

    let mut step: Vec<f64> = (0..m)
        .map(|i| {
            let width = config.control_box.hi[i] - config.control_box.lo[i];
            if config.grid_points > 1 {
                width / (config.grid_points - 1) as f64 / 2.0
            } else {
                width / 2.0
            }
        })
        .collect();
    let floor: Vec<f64> = step.iter().map(|s| s * 1e-9).collect();
    let mut local = 0;
    while local < config.local_evaluations
        && step.iter().zip(&floor).any(|(s, f)| s > f && *s > 0.0)
    {
        let mut improved = false;
        'poll: for d in 0..m {
            for sign in [-1.0, 1.0] {
                if local >= config.local_evaluations {
                    break 'poll;
                }
                let mut cand = u_best.clone();
                cand[d] += sign * step[d];
                if step[d] == 0.0 || !config.admissible(&cand) {
                    continue;
                }
                local += 1;
                let c = cost(&cand)?;
                if improves(c.value, c_best.value) {
                    u_best = cand;
                    c_best = c;
                    improved = true;
                    break 'poll;
                }
            }
        }
        if !improved {
            step.iter_mut().for_each(|s| *s /= 2.0);
        }
    }
    evaluations += local;

    let start_lift = lift(model, &state_for(&u_best))?;
    let lifted = (0..=config.horizon)
        .map(|t| propagate_lifted(&start_lift, t))
        .collect();
    Ok(MpcStepResult {
        control: u_best,
        predicted_cost: c_best.value,
        imaginary_residue: c_best.imaginary,
        lifted,
        evaluations,
        wall_time: start.elapsed(),
    })
}

/// One closed-loop episode.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub trajectory: Trajectory,
    pub realized_cost: f64,
    /// `K` stage costs followed by the terminal cost.
    pub stage_costs: Vec<f64>,
    pub steps: Vec<MpcStepResult>,
}

/// Alternates MPC solves with true-system steps for `episode` steps.
///
/// The applied control is `u* + v` with `v` drawn from the policy's
/// randomization; the horizon shrinks to the remaining episode length. The
/// final control is `u_K = π(x_K) + v_K`.
#[allow(clippy::too_many_arguments)]
pub fn closed_loop_run(
    system: &MeanFieldSystem,
    policy: &StationaryPolicy,
    model: &KoopmanSpectralModel,
    costs: &CostSpec,
    config: &MpcConfig,
    y0: &AggregatedState,
    episode: usize,
) -> Result<ClosedLoop> {
    if episode == 0 {
        return Err(invalid("episode length must be at least 1"));
    }
    config.validate(model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (mut x, mut mu) = (y0.x.clone(), y0.mu.clone());
    let mut states = Vec::with_capacity(episode + 1);
    let mut steps: Vec<MpcStepResult> = Vec::with_capacity(episode);
    for k in 0..episode {
        let horizon = config.horizon.min(episode - k);
        let step_config = MpcConfig {
            horizon,
            ..config.clone()
        };
        let (result, mean_control) = match (config.loop_mode, steps.last()) {
            (LoopMode::PaperLiteral, Some(prev)) => {
                let start = Instant::now();
                let shifted = propagate_lifted(&prev.lifted[0], 1);
                let cost =
                    lifted_horizon_cost(model, &shifted, horizon).map_err(|e| e.at_step(k))?;
                let control = policy.mean(&x).map_err(|e| e.at_step(k))?;
                let result = MpcStepResult {
                    control: control.clone(),
                    predicted_cost: cost.value,
                    imaginary_residue: cost.imaginary,
                    lifted: (0..=horizon)
                        .map(|t| propagate_lifted(&shifted, t))
                        .collect(),
                    evaluations: 0,
                    wall_time: start.elapsed(),
                };
                (result, control)
            }
            _ => {
                let result = solve_mpc_step(model, system, &x, &mu, None, &step_config)
                    .map_err(|e| e.at_step(k))?;
                let control = result.control.clone();
                (result, control)
            }
        };
        let v = policy.randomization.sample(&mut rng);
        let u: Vec<f64> = mean_control.iter().zip(&v).map(|(a, b)| a + b).collect();
        let y = AggregatedState::new(x.clone(), mu.clone(), u, mean_control);
        let (x_next, mu_next) = system.transition(&y, &mut rng).map_err(|e| e.at_step(k))?;
        states.push(y);
        steps.push(result);
        x = x_next;
        mu = mu_next;
    }
    let (u_last, rho_last) = policy
        .sample(&x, &mut rng)
        .map_err(|e| e.at_step(episode))?;
    states.push(AggregatedState::new(x, mu, u_last, rho_last));
    let costs = costs.with_horizon(episode);
    let mut stage_costs: Vec<f64> = states[..episode].iter().map(|y| costs.stage(y)).collect();
    stage_costs.push(costs.terminal(&states[episode]));
    let trajectory = Trajectory {
        states,
        seed: config.seed,
        mode: MeanMode::PaperLiteral,
    };
    let realized_cost = evaluate_cost(std::slice::from_ref(&trajectory), &costs)?;
    Ok(ClosedLoop {
        trajectory,
        realized_cost,
        stage_costs,
        steps,
    })
}

/// Closed loop over a particle population.
#[derive(Debug, Clone)]
pub struct EnsembleClosedLoop {
    pub trajectories: Vec<Trajectory>,
    pub realized_cost: f64,
    /// Empirical mean of the chosen controls at every step.
    pub mean_controls: Vec<Vec<f64>>,
}

/// Every particle solves its own MPC problem with `ρ` fixed to the mean of
/// the previous step's chosen controls; `μ`, `ρ` in the recorded states are
/// the empirical means of the current step.
#[allow(clippy::too_many_arguments)]
pub fn closed_loop_ensemble(
    system: &MeanFieldSystem,
    policy: &StationaryPolicy,
    model: &KoopmanSpectralModel,
    costs: &CostSpec,
    config: &MpcConfig,
    initial_law: &InitialLaw,
    particles: usize,
    episode: usize,
) -> Result<EnsembleClosedLoop> {
    if particles == 0 || episode == 0 {
        return Err(invalid("ensemble closed loop needs particles and steps"));
    }
    config.validate(model)?;
    let (n, m) = (system.state_dim(), system.control_dim());
    let mut rngs: Vec<ChaCha8Rng> = (0..particles)
        .map(|p| particle_rng(config.seed, p))
        .collect();
    let mut xs: Vec<Vec<f64>> = rngs.iter_mut().map(|r| initial_law.sample(r)).collect();
    let mean = |rows: &[Vec<f64>], dim: usize| {
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        crate::dynamics::column_means(&refs, dim)
    };
    let initial_means: Vec<Vec<f64>> = xs.iter().map(|x| policy.mean(x)).collect::<Result<_>>()?;
    let mut rho = mean(&initial_means, m);
    let mut paths: Vec<Vec<AggregatedState>> = vec![Vec::with_capacity(episode + 1); particles];
    let mut mean_controls = Vec::with_capacity(episode);
    for k in 0..episode {
        let mu = mean(&xs, n);
        let step_config = MpcConfig {
            horizon: config.horizon.min(episode - k),
            ..config.clone()
        };
        let chosen: Vec<Vec<f64>> = xs
            .par_iter()
            .map(|x| {
                solve_mpc_step(model, system, x, &mu, Some(&rho), &step_config).map(|r| r.control)
            })
            .collect::<Result<_>>()
            .map_err(|e| e.at_step(k))?;
        rho = mean(&chosen, m);
        let next: Vec<(AggregatedState, Vec<f64>)> = xs
            .par_iter()
            .zip(chosen.par_iter())
            .zip(rngs.par_iter_mut())
            .map(|((x, c), rng)| {
                let v = policy.randomization.sample(rng);
                let u = c.iter().zip(&v).map(|(a, b)| a + b).collect();
                let y = AggregatedState::new(x.clone(), mu.clone(), u, rho.clone());
                let (x_next, _) = system.transition(&y, rng)?;
                Ok((y, x_next))
            })
            .collect::<Result<_>>()
            .map_err(|e: Error| e.at_step(k))?;
        for (p, (y, x_next)) in next.into_iter().enumerate() {
            paths[p].push(y);
            xs[p] = x_next;
        }
        mean_controls.push(rho.clone());
    }
    let mu = mean(&xs, n);
    let finals: Vec<(Vec<f64>, Vec<f64>)> = xs
        .iter()
        .zip(rngs.iter_mut())
        .map(|(x, rng)| policy.sample(x, rng))
        .collect::<Result<_>>()?;
    let us: Vec<Vec<f64>> = finals.iter().map(|f| f.0.clone()).collect();
    let rho_final = mean(&us, m);
    for (p, (u, _)) in finals.into_iter().enumerate() {
        paths[p].push(AggregatedState::new(
            xs[p].clone(),
            mu.clone(),
            u,
            rho_final.clone(),
        ));
    }
    let trajectories: Vec<Trajectory> = paths
        .into_iter()
        .map(|states| Trajectory {
            states,
            seed: config.seed,
            mode: MeanMode::Ensemble,
        })
        .collect();
    let realized_cost = evaluate_cost(&trajectories, &costs.with_horizon(episode))?;
    Ok(EnsembleClosedLoop {
        trajectories,
        realized_cost,
        mean_controls,
    })
}

#[cfg(test)]
mod tests;

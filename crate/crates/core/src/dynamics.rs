//! Discrete-time stochastic mean-field systems.
//!
//! A representative agent with state `x ∈ R^n` and control `u ∈ R^m` evolves as
//!
//! ```text
//! x_{k+1} = b(x_k, μ_k, u_k, ρ_k) + σ(x_k, μ_k, u_k, ρ_k) w_k
//! μ_{k+1} = b(x_k, μ_k, u_k, ρ_k)
//! u_{k+1} = π(x_{k+1}) + v_{k+1}
//! ρ_{k+1} = π(x_{k+1})
//! ```
//!
//! where μ and ρ stand for the population means of state and control. Two
//! readings of the mean coordinates are supported: [`MeanMode::PaperLiteral`]
//! applies the recursion above per realization, [`MeanMode::Ensemble`]
//! replaces μ and ρ by empirical means over a particle population.

use crate::error::{invalid, Error, Result};
use crate::numeric::pairwise_sum_real;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// `b` or `σ` evaluated on `(x, μ, u, ρ)`.
pub type StateMap = Arc<dyn Fn(&[f64], &[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync>;
/// Stationary policy mean `π(x)`.
pub type PolicyMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
/// A scalar cost term on a (value, mean) pair.
pub type CostMap = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// The joint state `y = (x, μ, u, ρ)` the Koopman operator acts on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedState {
    pub x: Vec<f64>,
    pub mu: Vec<f64>,
    pub u: Vec<f64>,
    pub rho: Vec<f64>,
}

impl AggregatedState {
    pub fn new(x: Vec<f64>, mu: Vec<f64>, u: Vec<f64>, rho: Vec<f64>) -> Self {
        Self { x, mu, u, rho }
    }

    /// Single-agent state where the means coincide with the realized values.
    pub fn deterministic(x: Vec<f64>, u: Vec<f64>) -> Self {
        Self {
            mu: x.clone(),
            rho: u.clone(),
            x,
            u,
        }
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        Self::new(vec![0.0; n], vec![0.0; n], vec![0.0; m], vec![0.0; m])
    }

    /// Concatenation `(x, μ, u, ρ)`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * (self.x.len() + self.u.len()));
        out.extend_from_slice(&self.x);
        out.extend_from_slice(&self.mu);
        out.extend_from_slice(&self.u);
        out.extend_from_slice(&self.rho);
        out
    }

    pub fn from_flat(values: &[f64], n: usize, m: usize) -> Result<Self> {
        if values.len() != 2 * (n + m) {
            return Err(invalid(format!(
                "flattened state has {} entries, expected {}",
                values.len(),
                2 * (n + m)
            )));
        }
        Ok(Self::new(
            values[..n].to_vec(),
            values[n..2 * n].to_vec(),
            values[2 * n..2 * n + m].to_vec(),
            values[2 * n + m..].to_vec(),
        ))
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }

    fn check_dims(&self, n: usize, m: usize) -> Result<()> {
        if self.x.len() != n || self.mu.len() != n || self.u.len() != m || self.rho.len() != m {
            return Err(invalid(format!(
                "state dimensions (x {}, mu {}, u {}, rho {}) do not match system (n {n}, m {m})",
                self.x.len(),
                self.mu.len(),
                self.u.len(),
                self.rho.len()
            )));
        }
        Ok(())
    }
}

/// Zero-mean noise family used for `w_k` and `v_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum NoiseKind {
    Zero,
    /// Uniform on `[-half_width, half_width]` per component.
    Uniform {
        half_width: f64,
    },
    Gaussian {
        std_dev: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub dim: usize,
}

impl NoiseModel {
    pub fn zero(dim: usize) -> Self {
        Self {
            kind: NoiseKind::Zero,
            dim,
        }
    }

    pub fn uniform(dim: usize, half_width: f64) -> Self {
        Self {
            kind: NoiseKind::Uniform { half_width },
            dim,
        }
    }

    pub fn gaussian(dim: usize, std_dev: f64) -> Self {
        Self {
            kind: NoiseKind::Gaussian { std_dev },
            dim,
        }
    }

    /// Per-component standard deviation.
    pub fn scale(&self) -> f64 {
        match self.kind {
            NoiseKind::Zero => 0.0,
            NoiseKind::Uniform { half_width } => half_width / 3f64.sqrt(),
            NoiseKind::Gaussian { std_dev } => std_dev,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.scale() == 0.0
    }

    /// Draws one sample. The zero family consumes no randomness.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self.kind {
            NoiseKind::Zero => vec![0.0; self.dim],
            NoiseKind::Uniform { half_width } => (0..self.dim)
                .map(|_| rng.random_range(-1.0..1.0) * half_width)
                .collect(),
            NoiseKind::Gaussian { std_dev } => (0..self.dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    z * std_dev
                })
                .collect(),
        }
    }
}

/// Drift, diffusion and noise law of a mean-field system.
#[derive(Clone)]
pub struct MeanFieldSystem {
    state_dim: usize,
    control_dim: usize,
    drift: StateMap,
    diffusion: StateMap,
    state_noise: NoiseModel,
}

impl fmt::Debug for MeanFieldSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MeanFieldSystem")
            .field("state_dim", &self.state_dim)
            .field("control_dim", &self.control_dim)
            .field("state_noise", &self.state_noise)
            .finish_non_exhaustive()
    }
}

impl MeanFieldSystem {
    /// `diffusion` must return the `n × n` matrix σ in row-major order.
    pub fn new(
        state_dim: usize,
        control_dim: usize,
        drift: StateMap,
        diffusion: StateMap,
        state_noise: NoiseModel,
    ) -> Result<Self> {
        if state_dim == 0 || control_dim == 0 {
            return Err(invalid("state and control dimensions must be positive"));
        }
        if state_noise.dim != state_dim {
            return Err(invalid(format!(
                "state noise dimension {} does not match state dimension {state_dim}",
                state_noise.dim
            )));
        }
        Ok(Self {
            state_dim,
            control_dim,
            drift,
            diffusion,
            state_noise,
        })
    }

    /// System with `σ ≡ I` scaled through the noise model only.
    pub fn with_identity_diffusion(
        state_dim: usize,
        control_dim: usize,
        drift: StateMap,
        state_noise: NoiseModel,
    ) -> Result<Self> {
        let diffusion: StateMap = Arc::new(move |_, _, _, _| identity(state_dim));
        Self::new(state_dim, control_dim, drift, diffusion, state_noise)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn state_noise(&self) -> &NoiseModel {
        &self.state_noise
    }

    pub fn drift(&self, y: &AggregatedState) -> Result<Vec<f64>> {
        let out = (self.drift)(&y.x, &y.mu, &y.u, &y.rho);
        check_output("drift", &out, self.state_dim)?;
        Ok(out)
    }

    pub fn diffusion(&self, y: &AggregatedState) -> Result<Vec<f64>> {
        let out = (self.diffusion)(&y.x, &y.mu, &y.u, &y.rho);
        check_output("diffusion", &out, self.state_dim * self.state_dim)?;
        Ok(out)
    }

    /// One draw of the state transition: returns `(x', b(y))`.
    pub fn transition<R: Rng + ?Sized>(
        &self,
        y: &AggregatedState,
        rng: &mut R,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        y.check_dims(self.state_dim, self.control_dim)?;
        let mean = self.drift(y)?;
        let mut next = mean.clone();
        if !self.state_noise.is_zero() {
            let sigma = self.diffusion(y)?;
            let w = self.state_noise.sample(rng);
            let n = self.state_dim;
            for (i, xi) in next.iter_mut().enumerate() {
                *xi += (0..n).map(|j| sigma[i * n + j] * w[j]).sum::<f64>();
            }
        }
        Ok((next, mean))
    }

    /// Largest observed ratio `‖b(y) − b(y')‖ / ‖y − y'‖` over random pairs
    /// drawn from the box `[-half_width, half_width]^{2(n+m)}`.
    pub fn sampled_lipschitz_bound(&self, half_width: f64, pairs: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, m) = (self.state_dim, self.control_dim);
        let draw = |rng: &mut ChaCha8Rng| {
            let v: Vec<f64> = (0..2 * (n + m))
                .map(|_| rng.random_range(-half_width..half_width))
                .collect();
            AggregatedState::from_flat(&v, n, m)
        };
        let mut worst: f64 = 0.0;
        for _ in 0..pairs {
            let a = draw(&mut rng)?;
            let b = draw(&mut rng)?;
            let da = self.drift(&a)?;
            let db = self.drift(&b)?;
            let num = euclid(&da, &db);
            let den = euclid(&a.flatten(), &b.flatten());
            if den > 0.0 {
                worst = worst.max(num / den);
            }
        }
        Ok(worst)
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        out[i * n + i] = 1.0;
    }
    out
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

fn check_output(map: &'static str, out: &[f64], expected: usize) -> Result<()> {
    if out.len() != expected {
        return Err(Error::Evaluation {
            map,
            detail: format!("returned {} values, expected {expected}", out.len()),
        });
    }
    if let Some(bad) = out.iter().find(|v| !v.is_finite()) {
        return Err(Error::Evaluation {
            map,
            detail: format!("non-finite output {bad}"),
        });
    }
    Ok(())
}

/// Stationary randomized policy `u = π(x) + v`.
#[derive(Clone)]
pub struct StationaryPolicy {
    mean_map: PolicyMap,
    pub randomization: NoiseModel,
}

impl fmt::Debug for StationaryPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StationaryPolicy")
            .field("randomization", &self.randomization)
            .finish_non_exhaustive()
    }
}

impl StationaryPolicy {
    pub fn new(mean_map: PolicyMap, randomization: NoiseModel) -> Self {
        Self {
            mean_map,
            randomization,
        }
    }

    pub fn zero(control_dim: usize) -> Self {
        Self::new(
            Arc::new(move |_| vec![0.0; control_dim]),
            NoiseModel::zero(control_dim),
        )
    }

    /// Linear feedback `π(x) = -K x` with `K` given row-major (`m × n`).
    pub fn linear_feedback(gain: Vec<f64>, control_dim: usize, randomization: NoiseModel) -> Self {
        let map: PolicyMap = Arc::new(move |x: &[f64]| {
            let n = x.len();
            (0..control_dim)
                .map(|i| -(0..n).map(|j| gain[i * n + j] * x[j]).sum::<f64>())
                .collect()
        });
        Self::new(map, randomization)
    }

    pub fn mean(&self, x: &[f64]) -> Result<Vec<f64>> {
        let out = (self.mean_map)(x);
        if out.len() != self.randomization.dim {
            return Err(Error::Evaluation {
                map: "policy",
                detail: format!(
                    "returned {} values, expected {}",
                    out.len(),
                    self.randomization.dim
                ),
            });
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluation {
                map: "policy",
                detail: "non-finite output".into(),
            });
        }
        Ok(out)
    }

    /// Returns `(π(x) + v, π(x))`.
    pub fn sample<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
        let mean = self.mean(x)?;
        let v = self.randomization.sample(rng);
        let u = mean.iter().zip(&v).map(|(a, b)| a + b).collect();
        Ok((u, mean))
    }
}

/// Terms `F, C, G, H` of the finite-horizon cost and the horizon `N`.
#[derive(Clone)]
pub struct CostSpec {
    pub stage_state: CostMap,
    pub stage_control: CostMap,
    pub terminal_state: CostMap,
    pub terminal_control: CostMap,
    pub horizon: usize,
}

impl fmt::Debug for CostSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostSpec")
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

impl CostSpec {
    pub fn zero(horizon: usize) -> Self {
        let z: CostMap = Arc::new(|_, _| 0.0);
        Self {
            stage_state: z.clone(),
            stage_control: z.clone(),
            terminal_state: z.clone(),
            terminal_control: z,
            horizon,
        }
    }

    pub fn with_horizon(&self, horizon: usize) -> Self {
        Self {
            horizon,
            ..self.clone()
        }
    }

    /// `F(x, μ) + C(u, ρ)`.
    pub fn stage(&self, y: &AggregatedState) -> f64 {
        (self.stage_state)(&y.x, &y.mu) + (self.stage_control)(&y.u, &y.rho)
    }

    /// `G(x, μ) + H(u, ρ)`.
    pub fn terminal(&self, y: &AggregatedState) -> f64 {
        (self.terminal_state)(&y.x, &y.mu) + (self.terminal_control)(&y.u, &y.rho)
    }
}

/// How the mean coordinates μ, ρ are propagated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MeanMode {
    /// μ' = b(x, μ, u, ρ) and ρ' = π(x') per realization.
    #[default]
    PaperLiteral,
    /// μ and ρ are empirical means over a particle population.
    Ensemble,
}

impl fmt::Display for MeanMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MeanMode::PaperLiteral => "paper-literal",
            MeanMode::Ensemble => "ensemble",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<AggregatedState>,
    pub seed: u64,
    pub mode: MeanMode,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// One step of the uncontrolled system: `x' = b(x, μ) + σ(x, μ) w`, `μ' = b(x, μ)`.
///
/// Control coordinates are fed to the maps as zeros.
pub fn step_uncontrolled<R: Rng + ?Sized>(
    system: &MeanFieldSystem,
    x: &[f64],
    mu: &[f64],
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = system.control_dim();
    let y = AggregatedState::new(x.to_vec(), mu.to_vec(), vec![0.0; m], vec![0.0; m]);
    system.transition(&y, rng)
}

/// One step of the controlled aggregate system, all four lines in order.
pub fn step_controlled<R: Rng + ?Sized>(
    system: &MeanFieldSystem,
    policy: &StationaryPolicy,
    state: &AggregatedState,
    rng: &mut R,
) -> Result<AggregatedState> {
    let (x, mu) = system.transition(state, rng)?;
    let (u, rho) = policy.sample(&x, rng)?;
    Ok(AggregatedState::new(x, mu, u, rho))
}

/// Iterates [`step_controlled`] `steps` times from `y0` (paper-literal mode).
pub fn simulate_trajectory(
    system: &MeanFieldSystem,
    policy: &StationaryPolicy,
    y0: &AggregatedState,
    steps: usize,
    seed: u64,
) -> Result<Trajectory> {
    if steps == 0 {
        return Err(invalid("trajectory needs at least one step"));
    }
    y0.check_dims(system.state_dim(), system.control_dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states = Vec::with_capacity(steps + 1);
    states.push(y0.clone());
    for k in 0..steps {
        let next =
            step_controlled(system, policy, &states[k], &mut rng).map_err(|e| e.at_step(k))?;
        states.push(next);
    }
    Ok(Trajectory {
        states,
        seed,
        mode: MeanMode::PaperLiteral,
    })
}

/// Law of the initial individual state in an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum InitialLaw {
    Point { x: Vec<f64> },
    Uniform { lo: Vec<f64>, hi: Vec<f64> },
    Gaussian { mean: Vec<f64>, std_dev: f64 },
}

impl InitialLaw {
    pub fn dim(&self) -> usize {
        match self {
            InitialLaw::Point { x } => x.len(),
            InitialLaw::Uniform { lo, .. } => lo.len(),
            InitialLaw::Gaussian { mean, .. } => mean.len(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            InitialLaw::Point { x } => x.clone(),
            InitialLaw::Uniform { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(a, b)| if a < b { rng.random_range(*a..*b) } else { *a })
                .collect(),
            InitialLaw::Gaussian { mean, std_dev } => mean
                .iter()
                .map(|m| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + std_dev * z
                })
                .collect(),
        }
    }
}

/// Random substream of particle `index` under `seed`.
pub fn particle_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

pub(crate) fn column_means(rows: &[&[f64]], dim: usize) -> Vec<f64> {
    let count = rows.len() as f64;
    (0..dim)
        .map(|j| {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            pairwise_sum_real(&col) / count
        })
        .collect()
}

/// Simulates `particles` agents coupled through their empirical means.
///
/// Every particle owns a deterministic random substream, so the output does
/// not depend on the rayon thread count.
pub fn simulate_ensemble(
    system: &MeanFieldSystem,
    policy: &StationaryPolicy,
    initial_law: &InitialLaw,
    particles: usize,
    steps: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    if particles == 0 {
        return Err(invalid("ensemble needs at least one particle"));
    }
    if steps == 0 {
        return Err(invalid("ensemble needs at least one step"));
    }
    let (n, m) = (system.state_dim(), system.control_dim());
    if initial_law.dim() != n {
        return Err(invalid(format!(
            "initial law dimension {} does not match state dimension {n}",
            initial_law.dim()
        )));
    }
    let mut rngs: Vec<ChaCha8Rng> = (0..particles).map(|p| particle_rng(seed, p)).collect();
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(particles);
    let mut us: Vec<Vec<f64>> = Vec::with_capacity(particles);
    for rng in rngs.iter_mut() {
        let x = initial_law.sample(rng);
        let (u, _) = policy.sample(&x, rng)?;
        xs.push(x);
        us.push(u);
    }
    let means = |xs: &[Vec<f64>], us: &[Vec<f64>]| {
        let xr: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
        let ur: Vec<&[f64]> = us.iter().map(|v| v.as_slice()).collect();
        (column_means(&xr, n), column_means(&ur, m))
    };
    let (mut mu, mut rho) = means(&xs, &us);
    let mut paths: Vec<Vec<AggregatedState>> = (0..particles)
        .map(|p| {
            let mut v = Vec::with_capacity(steps + 1);
            v.push(AggregatedState::new(
                xs[p].clone(),
                mu.clone(),
                us[p].clone(),
                rho.clone(),
            ));
            v
        })
        .collect();

    for k in 0..steps {
        let advanced: Result<Vec<(Vec<f64>, Vec<f64>)>> = xs
            .par_iter()
            .zip(us.par_iter())
            .zip(rngs.par_iter_mut())
            .map(|((x, u), rng)| {
                let y = AggregatedState::new(x.clone(), mu.clone(), u.clone(), rho.clone());
                let (x_next, _) = system.transition(&y, rng)?;
                let (u_next, _) = policy.sample(&x_next, rng)?;
                Ok((x_next, u_next))
            })
            .collect();
        let advanced = advanced.map_err(|e| e.at_step(k))?;
        xs = advanced.iter().map(|(x, _)| x.clone()).collect();
        us = advanced.into_iter().map(|(_, u)| u).collect();
        (mu, rho) = means(&xs, &us);
        for (p, path) in paths.iter_mut().enumerate() {
            path.push(AggregatedState::new(
                xs[p].clone(),
                mu.clone(),
                us[p].clone(),
                rho.clone(),
            ));
        }
    }
    Ok(paths
        .into_iter()
        .map(|states| Trajectory {
            states,
            seed,
            mode: MeanMode::Ensemble,
        })
        .collect())
}

/// Monte Carlo estimate of the finite-horizon cost: the particle average of
/// `Σ_{k<N} [F + C] + G(x_N, μ_N) + H(u_N, ρ_N)`.
pub fn evaluate_cost(trajectories: &[Trajectory], costs: &CostSpec) -> Result<f64> {
    if trajectories.is_empty() {
        return Err(invalid("no trajectories to evaluate"));
    }
    let horizon = costs.horizon;
    let mut per_particle = Vec::with_capacity(trajectories.len());
    for (p, traj) in trajectories.iter().enumerate() {
        if traj.len() < horizon + 1 {
            return Err(invalid(format!(
                "trajectory {p} has {} states, cost horizon {horizon} needs {}",
                traj.len(),
                horizon + 1
            )));
        }
        let stages: Vec<f64> = traj.states[..horizon]
            .iter()
            .map(|y| costs.stage(y))
            .collect();
        let total = pairwise_sum_real(&stages) + costs.terminal(&traj.states[horizon]);
        if !total.is_finite() {
            return Err(Error::Evaluation {
                map: "cost",
                detail: format!("non-finite cost on trajectory {p}"),
            });
        }
        per_particle.push(total);
    }
    Ok(pairwise_sum_real(&per_particle) / trajectories.len() as f64)
}

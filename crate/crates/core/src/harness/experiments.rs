//! Experiment runners built from the library pipeline.

use super::benchmarks::BenchmarkSystem;
use super::benchmarks::SpectralTruth;
use super::config::ExperimentConfig;
use super::data::{lq_dataset, simulate_dataset};
use super::oracle::solve_lq_meanfield_oracle;
use crate::dynamics::{AggregatedState, MeanMode, Trajectory};
use crate::error::{Error, Result};
use crate::model::{build_model, KoopmanSpectralModel};
use crate::mpc::{closed_loop_ensemble, closed_loop_run, ClosedLoop, LoopMode};
use crate::observables::{cost_observable, CostTerm, Observable};
use crate::spectral::{
    default_threshold, detect_atoms, estimate_correlations, extract_continuous_part,
    reconstruct_measure, Atom, Candidates, SpectralMeasureEstimate,
};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Highest wave number of the weak-metric test functions.
pub const WEAK_DEGREE: usize = 5;

/// Data set described by the config.
pub fn config_dataset(config: &ExperimentConfig, length: usize) -> Result<Vec<Trajectory>> {
    simulate_dataset(
        &config.benchmark,
        &config.initial_law(),
        config.mode,
        config.trajectory_count,
        config.particles,
        length,
        config.seed,
    )
}

/// The configured observable followed by the four cost terms.
pub fn model_observables(config: &ExperimentConfig) -> Result<Vec<Observable>> {
    let costs = config.benchmark.costs();
    let mut out = vec![config.observable.build()?];
    out.extend(CostTerm::ALL.iter().map(|&t| cost_observable(&costs, t)));
    Ok(out)
}

/// Fits a model on the config's data; the LQ benchmark uses its largest
/// study data size of designed base trajectories.
pub fn fit_model(config: &ExperimentConfig) -> Result<KoopmanSpectralModel> {
    let data = match &config.benchmark {
        BenchmarkSystem::LqMeanfield(p) => {
            let size = config
                .studies
                .data_sizes
                .iter()
                .copied()
                .max()
                .unwrap_or(800);
            lq_dataset(p, size, config.spectral_config().continuous_order)?
        }
        _ => config_dataset(config, config.trajectory_length)?,
    };
    build_model(
        &data,
        &model_observables(config)?,
        &config.spectral_config(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub benchmark: String,
    pub observable: String,
    pub order: usize,
    pub grid_size: usize,
    pub filter: String,
    pub samples: usize,
    pub a0: Complex64,
    pub total_mass: Complex64,
    /// `|∫ν_N - 2π a_0| / |2π a_0|`.
    pub mass_residual: f64,
    pub threshold: f64,
    pub atoms: Vec<Atom>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub estimate: SpectralMeasureEstimate,
    pub continuous: Vec<Complex64>,
    pub summary: SpectrumSummary,
}

/// Simulate, estimate `a_0..a_N` of the observable against itself,
/// reconstruct, detect atoms and split off the continuous part.
pub fn run_spectrum_experiment(config: &ExperimentConfig) -> Result<SpectrumReport> {
    config.validate()?;
    let data = config_dataset(config, config.trajectory_length)?;
    let g = config.observable.build()?;
    let corr = estimate_correlations(&data, &g, &g, config.order, config.averaging)?;
    let grid = config.grid();
    let mut estimate = reconstruct_measure(&corr, config.filter, grid)?;
    let threshold = config
        .threshold
        .unwrap_or_else(|| default_threshold(&corr, grid));
    let atoms = if corr.a0().norm() == 0.0 {
        Default::default()
    } else {
        detect_atoms(&corr, &Candidates::Grid(grid), threshold)?
    };
    estimate.atoms = atoms.atoms.clone();
    let continuous = extract_continuous_part(&estimate, &atoms)?;
    let total = estimate.total_mass();
    let expected = corr.a0() * (2.0 * std::f64::consts::PI);
    let residual = if expected.norm() > 0.0 {
        (total - expected).norm() / expected.norm()
    } else {
        total.norm()
    };
    let summary = SpectrumSummary {
        benchmark: config.benchmark.name().into(),
        observable: g.label().into(),
        order: config.order,
        grid_size: grid,
        filter: config.filter.to_string(),
        samples: corr.samples,
        a0: corr.a0(),
        total_mass: total,
        mass_residual: residual,
        threshold,
        atoms: atoms.atoms,
    };
    Ok(SpectrumReport {
        estimate,
        continuous,
        summary,
    })
}

/// Mean over `h_k = cos(kθ)/k` and `sin(kθ)/k`, `k = 1..=5`, of
/// `|∫h_k dν_N - ∫h_k dν|`. Each test function is 1-Lipschitz and bounded by 1.
pub fn weak_metric(estimate: &SpectralMeasureEstimate, truth: &SpectralTruth) -> f64 {
    let mut errors = Vec::with_capacity(2 * WEAK_DEGREE);
    for k in 1..=WEAK_DEGREE {
        let kf = k as f64;
        let (c, s) = truth.trig_moments(k);
        let ec = estimate.integrate(|t| (kf * t).cos() / kf);
        let es = estimate.integrate(|t| (kf * t).sin() / kf);
        errors.push((ec - c / kf).norm());
        errors.push((es - s / kf).norm());
    }
    errors.iter().sum::<f64>() / errors.len() as f64
}

/// Analytic spectral measure of the configured observable.
pub fn config_truth(config: &ExperimentConfig) -> Result<SpectralTruth> {
    let k = config.observable.harmonic_k().ok_or_else(|| {
        Error::Unsupported(
            "known spectral measures cover harmonic observables of the state only".into(),
        )
    })?;
    config.benchmark.harmonic_truth(k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub order: usize,
    pub trajectory_length: usize,
    pub error: f64,
}

/// Weak-metric error of the filtered estimate for every order, each from its
/// own simulation under the config seed.
pub fn run_convergence_study(
    config: &ExperimentConfig,
    orders: &[usize],
) -> Result<Vec<ConvergenceRow>> {
    config.benchmark.validate()?;
    let truth = config_truth(config)?;
    let g = config.observable.build()?;
    if orders.is_empty() {
        return Err(Error::Config("studies.orders: must not be empty".into()));
    }
    orders
        .par_iter()
        .map(|&order| {
            let length = config
                .studies
                .samples_per_order
                .map_or(config.trajectory_length, |s| s * order);
            if order == 0 || length < order + 1 {
                return Err(Error::Config(format!(
                    "studies.orders: order {order} needs trajectories of at least {} states, got {length}",
                    order + 1
                )));
            }
            let data = config_dataset(config, length)?;
            let corr = estimate_correlations(&data, &g, &g, order, config.averaging)?;
            let grid = config.grid_size.unwrap_or(4 * order).max(4 * order);
            let estimate = reconstruct_measure(&corr, config.filter, grid)?;
            Ok(ConvergenceRow {
                order,
                trajectory_length: length,
                error: weak_metric(&estimate, &truth),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalityRow {
    pub data_size: usize,
    pub base_states: usize,
    pub realized_cost: f64,
    pub oracle_cost: f64,
    pub gap: f64,
}

/// Closed-loop cost of the model-based controller against the oracle for
/// every data size.
pub fn run_optimality_study(
    config: &ExperimentConfig,
    sizes: &[usize],
) -> Result<Vec<OptimalityRow>> {
    config.validate()?;
    let BenchmarkSystem::LqMeanfield(problem) = &config.benchmark else {
        return Err(Error::Unsupported(
            "the optimality study needs the lq-meanfield benchmark".into(),
        ));
    };
    if sizes.is_empty() {
        return Err(Error::Config(
            "studies.data_sizes: must not be empty".into(),
        ));
    }
    let oracle = solve_lq_meanfield_oracle(problem)?;
    let spectral = config.spectral_config();
    let mpc = config.mpc_config();
    let observables = model_observables(config)?;
    let system = problem.system()?;
    let policy = problem.data_policy();
    let costs = problem.costs();
    let x0 = vec![problem.initial_state];
    let y0 = AggregatedState::deterministic(x0.clone(), policy.mean(&x0)?);
    sizes
        .par_iter()
        .map(|&size| {
            let data = lq_dataset(problem, size, spectral.continuous_order)?;
            let model = build_model(&data, &observables, &spectral)?;
            let run =
                closed_loop_run(&system, &policy, &model, &costs, &mpc, &y0, problem.horizon)?;
            Ok(OptimalityRow {
                data_size: size,
                base_states: model.states.len(),
                realized_cost: run.realized_cost,
                oracle_cost: oracle.cost,
                gap: (run.realized_cost - oracle.cost).abs(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopSummary {
    pub benchmark: String,
    pub episode: usize,
    pub horizon: usize,
    pub loop_mode: LoopMode,
    pub particles: usize,
    pub realized_cost: f64,
    pub oracle_cost: Option<f64>,
}

/// Runs the configured closed loop on a fitted model: single agent in
/// paper-literal mode, a particle population in ensemble mode.
pub fn run_closed_loop(
    config: &ExperimentConfig,
    model: &KoopmanSpectralModel,
) -> Result<(Vec<Trajectory>, Option<ClosedLoop>, ClosedLoopSummary)> {
    config.validate()?;
    let system = config.benchmark.system()?;
    let policy = config.benchmark.policy();
    let costs = config.benchmark.costs();
    let mpc = config.mpc_config();
    let episode = config.episode();
    let oracle_cost = match &config.benchmark {
        BenchmarkSystem::LqMeanfield(p)
            if episode == p.horizon && config.initial_state.is_none() =>
        {
            Some(solve_lq_meanfield_oracle(p)?.cost)
        }
        _ => None,
    };
    let (trajectories, single, realized) = match config.mode {
        MeanMode::Ensemble => {
            let run = closed_loop_ensemble(
                &system,
                &policy,
                model,
                &costs,
                &mpc,
                &config.initial_law(),
                config.particles,
                episode,
            )?;
            (run.trajectories, None, run.realized_cost)
        }
        MeanMode::PaperLiteral => {
            let run = closed_loop_run(
                &system,
                &policy,
                model,
                &costs,
                &mpc,
                &config.start_state()?,
                episode,
            )?;
            let cost = run.realized_cost;
            (vec![run.trajectory.clone()], Some(run), cost)
        }
    };
    let summary = ClosedLoopSummary {
        benchmark: config.benchmark.name().into(),
        episode,
        horizon: mpc.horizon,
        loop_mode: mpc.loop_mode,
        particles: trajectories.len(),
        realized_cost: realized,
        oracle_cost,
    };
    Ok((trajectories, single, summary))
}

use super::*;
use crate::dynamics::{CostMap, NoiseModel, StateMap};
use crate::model::{
    build_model, EigenCandidates, EigenPair, ExpansionCoefficients, ObservableModel, SpectralConfig,
};
use crate::observables::{cost_observable, CostTerm};
use crate::spectral::FilterKind;
use num_complex::Complex64;
use std::f64::consts::PI;
use std::sync::Arc;

const Q: usize = 7;

/// Model on three stored states with constant eigen tables.
fn manual_model(
    thetas: &[f64],
    coeff: [Complex64; 4],
    density: impl Fn(usize, usize, usize) -> Complex64,
) -> KoopmanSpectralModel {
    let states: Vec<AggregatedState> = (0..3)
        .map(|i| AggregatedState::deterministic(vec![i as f64], vec![0.0]))
        .collect();
    KoopmanSpectralModel {
        state_dim: 1,
        control_dim: 1,
        eigenpairs: thetas
            .iter()
            .map(|&theta| EigenPair {
                theta,
                table: vec![Complex64::new(1.0, 0.0); 3],
                norm: 1.0,
                source: "F".into(),
            })
            .collect(),
        observables: CostTerm::ALL
            .iter()
            .enumerate()
            .map(|(k, t)| ObservableModel {
                label: t.name().into(),
                expansion: ExpansionCoefficients {
                    coefficients: vec![coeff[k]; thetas.len()],
                    residual: 0.0,
                },
                density: (0..3)
                    .map(|b| (0..Q).map(|n| density(k, b, n)).collect())
                    .collect(),
            })
            .collect(),
        states,
        quadrature: Q,
        continuous_order: 3,
        continuous_filter: FilterKind::Sharp,
        neighbors: 2,
    }
}

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

fn one() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

fn scalar_system(drift: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> MeanFieldSystem {
    let b: StateMap = Arc::new(move |x, _, u, _| vec![drift(x[0], u[0])]);
    MeanFieldSystem::with_identity_diffusion(1, 1, b, NoiseModel::zero(1)).unwrap()
}

fn y_at(x: f64) -> AggregatedState {
    AggregatedState::deterministic(vec![x], vec![0.0])
}

#[test]
fn unit_eigenvalue_lift() {
    let model = manual_model(&[0.0], [one(), zero(), zero(), zero()], |_, _, _| zero());
    let l = lift(&model, &y_at(1.0)).unwrap();
    assert_eq!(l.z, vec![one()]);
    assert_eq!(l.w.len(), 4 * Q);
    assert!(l.w.iter().all(|w| *w == zero()));
}

#[test]
fn lift_needs_cost_fits() {
    let mut model = manual_model(&[0.0], [one(); 4], |_, _, _| zero());
    model.observables.retain(|o| o.label != "H");
    let err = lift(&model, &y_at(0.0)).unwrap_err();
    assert!(err.is_config(), "{err}");
}

#[test]
fn propagation_rules() {
    let model = manual_model(&[0.0, PI / 2.0, 2.0], [one(); 4], |k, b, n| {
        Complex64::new((k + b) as f64, n as f64)
    });
    let l = lift(&model, &y_at(2.0)).unwrap();
    let p = propagate_lifted(&l, 2);
    assert_eq!(p.z[0], l.z[0]);
    assert!((p.z[1] + one()).norm() < 1e-15);
    let mut stepped = l.clone();
    for t in 1..=25 {
        stepped = propagate_lifted(&stepped, 1);
        let direct = propagate_lifted(&l, t);
        for (a, b) in stepped
            .z
            .iter()
            .chain(&stepped.w)
            .zip(direct.z.iter().chain(&direct.w))
        {
            assert!((a - b).norm() <= 1e-12 * (1.0 + b.norm()));
        }
        for (a, b) in stepped.z.iter().zip(&l.z) {
            assert!((a.norm() - b.norm()).abs() <= 1e-12 * t as f64);
        }
    }
}

#[test]
fn closed_form_objective_examples() {
    let none = manual_model(&[0.0], [zero(); 4], |_, _, _| zero());
    assert_eq!(
        predict_horizon_cost(&none, &y_at(0.0), 4).unwrap().value,
        0.0
    );
    let unit = manual_model(&[0.0], [one(), zero(), zero(), zero()], |_, _, _| zero());
    assert!((predict_horizon_cost(&unit, &y_at(0.0), 3).unwrap().value - 3.0).abs() < 1e-12);
    let flip = manual_model(&[PI], [one(), zero(), zero(), zero()], |_, _, _| zero());
    assert!(
        predict_horizon_cost(&flip, &y_at(0.0), 2)
            .unwrap()
            .value
            .abs()
            < 1e-12
    );
}

#[test]
fn horizon_cost_is_sum_of_stages() {
    let model = manual_model(
        &[0.0, 0.7, -2.2],
        [
            Complex64::new(0.4, 0.1),
            Complex64::new(-0.3, 0.0),
            Complex64::new(1.2, -0.5),
            Complex64::new(0.05, 0.2),
        ],
        |k, b, n| {
            Complex64::new(
                ((k * 7 + b * 3 + n) as f64).sin(),
                ((k + n) as f64 * 0.3).cos(),
            )
        },
    );
    let y = AggregatedState::deterministic(vec![0.6], vec![0.0]);
    let l = lift(&model, &y).unwrap();
    for horizon in [1, 5, 17] {
        let closed = lifted_horizon_cost(&model, &l, horizon).unwrap();
        let stages: Complex64 = lifted_stage_costs(&model, &l, horizon)
            .unwrap()
            .iter()
            .sum();
        assert!((closed.value - stages.re).abs() <= 1e-9 * stages.norm().max(1.0));
        assert!((closed.imaginary - stages.im).abs() <= 1e-9 * stages.norm().max(1.0));
    }
}

#[test]
fn flat_cost_returns_lower_corner() {
    let model = manual_model(&[0.0], [one(), zero(), zero(), zero()], |_, _, _| zero());
    let system = scalar_system(|x, _| x);
    let result =
        solve_mpc_step(&model, &system, &[1.0], &[1.0], None, &MpcConfig::default()).unwrap();
    assert_eq!(result.control, vec![-2.0]);
}

#[test]
fn collapsed_box_returns_the_point() {
    let model = manual_model(&[0.0], [one(); 4], |_, _, _| zero());
    let system = scalar_system(|x, _| x);
    let config = MpcConfig {
        control_box: ControlBox {
            lo: vec![0.3],
            hi: vec![0.3],
        },
        ..MpcConfig::default()
    };
    let result = solve_mpc_step(&model, &system, &[1.0], &[1.0], None, &config).unwrap();
    assert_eq!(result.control, vec![0.3]);
}

#[test]
fn empty_admissible_set_is_config_error() {
    let model = manual_model(&[0.0], [one(); 4], |_, _, _| zero());
    let system = scalar_system(|x, _| x);
    let config = MpcConfig {
        constraints: vec![LinearConstraint {
            coefficients: vec![1.0],
            bound: -5.0,
        }],
        ..MpcConfig::default()
    };
    assert!(
        solve_mpc_step(&model, &system, &[1.0], &[1.0], None, &config)
            .unwrap_err()
            .is_config()
    );
    let inverted = MpcConfig {
        control_box: ControlBox {
            lo: vec![1.0],
            hi: vec![0.0],
        },
        ..MpcConfig::default()
    };
    assert!(
        solve_mpc_step(&model, &system, &[1.0], &[1.0], None, &inverted)
            .unwrap_err()
            .is_config()
    );
}

fn one_step_costs() -> CostSpec {
    let square: CostMap = Arc::new(|v, _| v[0] * v[0]);
    CostSpec {
        stage_control: square.clone(),
        terminal_state: square,
        ..CostSpec::zero(1)
    }
}

/// Exact tables for `x' = x + u` from `x = 1` with `u` on a 0.01 grid.
fn one_step_model(system: &MeanFieldSystem) -> KoopmanSpectralModel {
    let policy = StationaryPolicy::zero(1);
    let data: Vec<Trajectory> = (0..=400)
        .map(|j| {
            let u = -2.0 + j as f64 * 0.01;
            let y0 = AggregatedState::new(vec![1.0], vec![1.0], vec![u], vec![u]);
            crate::dynamics::simulate_trajectory(system, &policy, &y0, 1, 0).unwrap()
        })
        .collect();
    let costs = one_step_costs();
    let obs: Vec<_> = CostTerm::ALL
        .iter()
        .map(|t| cost_observable(&costs, *t))
        .collect();
    let config = SpectralConfig {
        order: 1,
        candidates: EigenCandidates::Skip,
        continuous_order: 1,
        stride: 1,
        ..SpectralConfig::default()
    };
    build_model(&data, &obs, &config).unwrap()
}

#[test]
fn one_step_analytic_case() {
    let system = scalar_system(|x, u| x + u);
    let model = one_step_model(&system);
    let config = MpcConfig {
        horizon: 1,
        ..MpcConfig::default()
    };
    let result = solve_mpc_step(&model, &system, &[1.0], &[1.0], None, &config).unwrap();
    assert!(
        (result.control[0] + 0.5).abs() <= 1e-2,
        "{:?}",
        result.control
    );
    assert!(
        (result.predicted_cost - 0.5).abs() <= 1e-2,
        "{}",
        result.predicted_cost
    );
    assert!(result.imaginary_residue.abs() < 1e-12);
    assert_eq!(result.lifted.len(), 2);

    let again = solve_mpc_step(&model, &system, &[1.0], &[1.0], None, &config).unwrap();
    assert_eq!(result, again);
}

#[test]
fn constraint_is_respected() {
    let system = scalar_system(|x, u| x + u);
    let model = one_step_model(&system);
    let config = MpcConfig {
        horizon: 1,
        constraints: vec![LinearConstraint {
            coefficients: vec![-1.0],
            bound: 0.2,
        }],
        ..MpcConfig::default()
    };
    let result = solve_mpc_step(&model, &system, &[1.0], &[1.0], None, &config).unwrap();
    assert!(result.control[0] >= -0.2);
    assert!(
        (result.control[0] + 0.2).abs() < 1e-9,
        "{:?}",
        result.control
    );
}

#[test]
fn single_step_episode() {
    let system = scalar_system(|x, u| x + u);
    let model = one_step_model(&system);
    let config = MpcConfig {
        horizon: 1,
        ..MpcConfig::default()
    };
    let run = closed_loop_run(
        &system,
        &StationaryPolicy::zero(1),
        &model,
        &one_step_costs(),
        &config,
        &y_at(1.0),
        1,
    )
    .unwrap();
    assert_eq!(run.steps.len(), 1);
    assert_eq!(run.trajectory.len(), 2);
    assert!((run.realized_cost - 0.5).abs() < 1e-2);
    assert_eq!(run.stage_costs.len(), 2);
}

#[test]
fn zero_cost_episode() {
    let model = manual_model(&[0.0], [zero(); 4], |_, _, _| zero());
    let system = scalar_system(|x, u| 0.5 * x + u);
    let run = closed_loop_run(
        &system,
        &StationaryPolicy::zero(1),
        &model,
        &CostSpec::zero(3),
        &MpcConfig::default(),
        &y_at(1.0),
        3,
    )
    .unwrap();
    assert_eq!(run.realized_cost, 0.0);
    assert_eq!(run.trajectory.len(), 4);
}

#[test]
fn paper_literal_loop_shifts_open_loop() {
    let system = scalar_system(|x, u| x + u);
    let model = one_step_model(&system);
    let config = MpcConfig {
        horizon: 1,
        loop_mode: LoopMode::PaperLiteral,
        ..MpcConfig::default()
    };
    let run = closed_loop_run(
        &system,
        &StationaryPolicy::zero(1),
        &model,
        &one_step_costs(),
        &config,
        &y_at(1.0),
        2,
    )
    .unwrap();
    assert_eq!(run.steps[1].evaluations, 0);
    assert_eq!(run.steps[1].lifted[0].elapsed, 1);
    assert_eq!(run.trajectory.states[1].u, vec![0.0]);
}

#[test]
fn ensemble_loop_uses_population_means() {
    let model = manual_model(&[0.0], [zero(); 4], |_, _, _| zero());
    let system = scalar_system(|x, u| 0.5 * x + u);
    let law = InitialLaw::Uniform {
        lo: vec![-1.0],
        hi: vec![1.0],
    };
    let run = closed_loop_ensemble(
        &system,
        &StationaryPolicy::zero(1),
        &model,
        &CostSpec::zero(2),
        &MpcConfig::default(),
        &law,
        8,
        2,
    )
    .unwrap();
    assert_eq!(run.trajectories.len(), 8);
    let mu0 = run.trajectories[0].states[0].mu[0];
    let mean: f64 = run
        .trajectories
        .iter()
        .map(|t| t.states[0].x[0])
        .sum::<f64>()
        / 8.0;
    assert!((mu0 - mean).abs() < 1e-15);
    assert_eq!(run.mean_controls, vec![vec![-2.0], vec![-2.0]]);
}

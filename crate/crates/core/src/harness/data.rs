//! Training data for the experiments.

use super::benchmarks::{BenchmarkSystem, LqProblem};
use crate::dynamics::{
    particle_rng, simulate_ensemble, simulate_trajectory, AggregatedState, InitialLaw, MeanMode,
    Trajectory,
};
use crate::error::{invalid, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Expected value of the initial law, used as `μ_0` of a single realization.
pub fn law_mean(law: &InitialLaw) -> Vec<f64> {
    match law {
        InitialLaw::Point { x } => x.clone(),
        InitialLaw::Uniform { lo, hi } => lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect(),
        InitialLaw::Gaussian { mean, .. } => mean.clone(),
    }
}

/// Simulates `count` data sets of `length` states each.
///
/// Paper-literal mode yields `count` independent realizations; ensemble mode
/// yields `count × particles` particle paths, one population per data set.
pub fn simulate_dataset(
    benchmark: &BenchmarkSystem,
    law: &InitialLaw,
    mode: MeanMode,
    count: usize,
    particles: usize,
    length: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    if count == 0 || length < 2 {
        return Err(invalid(
            "need at least one trajectory of two or more states",
        ));
    }
    let system = benchmark.system()?;
    let policy = benchmark.policy();
    let mu0 = law_mean(law);
    match mode {
        MeanMode::PaperLiteral => (0..count)
            .map(|r| {
                let mut rng = particle_rng(seed, r);
                let x0 = law.sample(&mut rng);
                let (u0, rho0) = policy.sample(&x0, &mut rng)?;
                let y0 = AggregatedState::new(x0, mu0.clone(), u0, rho0);
                simulate_trajectory(&system, &policy, &y0, length - 1, rng.random())
            })
            .collect(),
        MeanMode::Ensemble => {
            let mut master = ChaCha8Rng::seed_from_u64(seed);
            let mut out = Vec::with_capacity(count * particles);
            for _ in 0..count {
                out.extend(simulate_ensemble(
                    &system,
                    &policy,
                    law,
                    particles,
                    length - 1,
                    master.random(),
                )?);
            }
            Ok(out)
        }
    }
}

/// Van der Corput radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: usize, base: usize) -> f64 {
    let inv = 1.0 / base as f64;
    let (mut out, mut scale) = (0.0, inv);
    while index > 0 {
        out += (index % base) as f64 * scale;
        index /= base;
        scale *= inv;
    }
    out
}

/// Deterministic space-filling design of `size` base trajectories over
/// `x_range × u_range`, each of `steps + 1` states under the data policy.
///
/// Trajectory `i` starts from `y_0 = (x, x, u, u)` with `(x, u)` the
/// `(i+1)`-th point of the two-dimensional Halton sequence.
pub fn lq_dataset(problem: &LqProblem, size: usize, steps: usize) -> Result<Vec<Trajectory>> {
    if size == 0 || steps == 0 {
        return Err(invalid("data size and trajectory steps must be positive"));
    }
    let system = problem.system()?;
    let policy = problem.data_policy();
    let [xl, xh] = problem.x_range;
    let [ul, uh] = problem.u_range;
    (0..size)
        .map(|i| {
            let x = xl + radical_inverse(i + 1, 2) * (xh - xl);
            let u = ul + radical_inverse(i + 1, 3) * (uh - ul);
            let y0 = AggregatedState::deterministic(vec![x], vec![u]);
            simulate_trajectory(&system, &policy, &y0, steps, i as u64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn radical_inverse_digits() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert!((radical_inverse(1, 3) - 1.0 / 3.0).abs() < 1e-15);
        assert!((radical_inverse(5, 3) - (2.0 / 3.0 + 1.0 / 9.0)).abs() < 1e-15);
    }

    #[test]
    fn lq_design_stays_in_box() {
        let p = LqProblem::default();
        let data = lq_dataset(&p, 50, 3).unwrap();
        assert_eq!(data.len(), 50);
        for t in &data {
            assert_eq!(t.len(), 4);
            let y = &t.states[0];
            assert!(y.x[0] >= -1.5 && y.x[0] <= 1.5);
            assert!(y.u[0] >= -2.0 && y.u[0] <= 2.0);
            assert_eq!(y.mu, y.x);
            // noise-free single agent: the mean tracks the state
            assert_eq!(t.states[3].mu, t.states[3].x);
        }
    }

    #[test]
    fn paper_literal_dataset_is_seeded() {
        let b = BenchmarkSystem::IidChain { half_width: PI };
        let law = b.default_initial_law();
        let a = simulate_dataset(&b, &law, MeanMode::PaperLiteral, 3, 1, 20, 7).unwrap();
        let c = simulate_dataset(&b, &law, MeanMode::PaperLiteral, 3, 1, 20, 7).unwrap();
        assert_eq!(a, c);
        assert_eq!(a.len(), 3);
        assert_ne!(a[0].states, a[1].states);
    }

    #[test]
    fn ensemble_dataset_has_population_paths() {
        let b = BenchmarkSystem::ScalarLinearMeanfield {
            a: 0.7,
            c: 0.2,
            noise: 0.1,
        };
        let law = InitialLaw::Point { x: vec![1.0] };
        let data = simulate_dataset(&b, &law, MeanMode::Ensemble, 2, 5, 4, 1).unwrap();
        assert_eq!(data.len(), 10);
        assert!(data
            .iter()
            .all(|t| t.mode == MeanMode::Ensemble && t.len() == 4));
    }
}

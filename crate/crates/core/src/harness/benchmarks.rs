//! Named benchmark systems with analytic truths.

use crate::dynamics::{
    CostMap, CostSpec, InitialLaw, MeanFieldSystem, NoiseModel, StateMap, StationaryPolicy,
};
use crate::error::{Error, Result};
use crate::numeric::wrap_angle;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

fn pi() -> f64 {
    PI
}

/// Scalar linear-quadratic mean-field problem
/// `x' = a x + c μ + b u + b̄ ρ + s w` with costs
/// `F = q x² + q̄ μ²`, `C = r u² + r̄ ρ²`, `G = g x² + ḡ μ²`, `H = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LqProblem {
    pub a: f64,
    pub c: f64,
    pub b: f64,
    pub b_bar: f64,
    pub q: f64,
    pub q_bar: f64,
    pub r: f64,
    pub r_bar: f64,
    pub g: f64,
    pub g_bar: f64,
    /// Standard deviation of the Gaussian state noise.
    pub noise: f64,
    /// Gain κ of the data policy `π(x) = -κ x`.
    pub policy_gain: f64,
    pub horizon: usize,
    pub initial_state: f64,
    /// Box of the base-state design in `x`.
    pub x_range: [f64; 2],
    /// Box of the base-state design in `u`.
    pub u_range: [f64; 2],
}

impl Default for LqProblem {
    fn default() -> Self {
        Self {
            a: 1.0,
            c: 0.2,
            b: 1.0,
            b_bar: 0.0,
            q: 1.0,
            q_bar: 0.5,
            r: 1.0,
            r_bar: 0.0,
            g: 1.0,
            g_bar: 0.0,
            noise: 0.0,
            policy_gain: 0.5,
            horizon: 10,
            initial_state: 1.0,
            x_range: [-1.5, 1.5],
            u_range: [-2.0, 2.0],
        }
    }
}

impl LqProblem {
    pub fn system(&self) -> Result<MeanFieldSystem> {
        let (a, c, b, bb) = (self.a, self.c, self.b, self.b_bar);
        let drift: StateMap =
            Arc::new(move |x, mu, u, rho| vec![a * x[0] + c * mu[0] + b * u[0] + bb * rho[0]]);
        MeanFieldSystem::with_identity_diffusion(1, 1, drift, NoiseModel::gaussian(1, self.noise))
    }

    pub fn data_policy(&self) -> StationaryPolicy {
        StationaryPolicy::linear_feedback(vec![self.policy_gain], 1, NoiseModel::zero(1))
    }

    pub fn costs(&self) -> CostSpec {
        let quad = |w: f64, wb: f64| -> CostMap {
            Arc::new(move |v, m| w * v[0] * v[0] + wb * m[0] * m[0])
        };
        CostSpec {
            stage_state: quad(self.q, self.q_bar),
            stage_control: quad(self.r, self.r_bar),
            terminal_state: quad(self.g, self.g_bar),
            terminal_control: quad(0.0, 0.0),
            horizon: self.horizon,
        }
    }
}

/// Known spectral measure of an observable pair `f = g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralTruth {
    /// `(θ, mass)` point masses.
    pub atoms: Vec<(f64, f64)>,
    /// Mass spread uniformly over the circle.
    pub flat_mass: f64,
}

impl SpectralTruth {
    /// `∫ cos(kθ) dν` and `∫ sin(kθ) dν`, evaluated in closed form.
    pub fn trig_moments(&self, k: usize) -> (f64, f64) {
        let kf = k as f64;
        let (mut c, mut s) = (0.0, 0.0);
        for &(theta, mass) in &self.atoms {
            c += mass * (kf * theta).cos();
            s += mass * (kf * theta).sin();
        }
        // (1/2π) ∫_{-π}^{π} cos(kθ) dθ = sin(kπ)/(kπ); the sine integral is odd
        if k == 0 {
            c += self.flat_mass;
        } else {
            c += self.flat_mass * (kf * PI).sin() / (kf * PI);
        }
        (c, s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum BenchmarkSystem {
    /// `x' = x + α (mod 2π)`.
    CircleRotation {
        alpha: f64,
    },
    /// `x' = w` with `w` uniform on `[-h, h]`.
    IidChain {
        #[serde(default = "pi")]
        half_width: f64,
    },
    /// `x' = 2x (mod 2π)`.
    DoublingMap,
    /// `x' = a x + c μ + s w`, uncontrolled.
    ScalarLinearMeanfield {
        a: f64,
        c: f64,
        #[serde(default)]
        noise: f64,
    },
    LqMeanfield(LqProblem),
}

pub const BENCHMARK_NAMES: [&str; 5] = [
    "circle-rotation",
    "iid-chain",
    "doubling-map",
    "scalar-linear-meanfield",
    "lq-meanfield",
];

impl BenchmarkSystem {
    pub fn name(&self) -> &'static str {
        match self {
            BenchmarkSystem::CircleRotation { .. } => BENCHMARK_NAMES[0],
            BenchmarkSystem::IidChain { .. } => BENCHMARK_NAMES[1],
            BenchmarkSystem::DoublingMap => BENCHMARK_NAMES[2],
            BenchmarkSystem::ScalarLinearMeanfield { .. } => BENCHMARK_NAMES[3],
            BenchmarkSystem::LqMeanfield(_) => BENCHMARK_NAMES[4],
        }
    }

    /// Benchmarks whose state is an angle with the uniform law invariant.
    pub fn on_circle(&self) -> bool {
        matches!(
            self,
            BenchmarkSystem::CircleRotation { .. }
                | BenchmarkSystem::IidChain { .. }
                | BenchmarkSystem::DoublingMap
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match self {
            BenchmarkSystem::CircleRotation { alpha } if !alpha.is_finite() => {
                bad("benchmark.alpha: must be finite".into())
            }
            BenchmarkSystem::IidChain { half_width }
                if !(*half_width > 0.0 && *half_width <= PI) =>
            {
                bad(format!(
                    "benchmark.half_width: must lie in (0, π], got {half_width}"
                ))
            }
            BenchmarkSystem::ScalarLinearMeanfield { a, c, noise }
                if !(a.is_finite() && c.is_finite() && *noise >= 0.0) =>
            {
                bad("benchmark: a and c must be finite and noise non-negative".into())
            }
            BenchmarkSystem::LqMeanfield(p) => {
                if p.horizon == 0 {
                    return bad("benchmark.horizon: must be at least 1".into());
                }
                if p.noise < 0.0 {
                    return bad("benchmark.noise: must be non-negative".into());
                }
                if !(p.x_range[0] <= p.x_range[1] && p.u_range[0] <= p.u_range[1]) {
                    return bad("benchmark.x_range/u_range: lower bound exceeds upper bound".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn system(&self) -> Result<MeanFieldSystem> {
        let drift: StateMap = match *self {
            BenchmarkSystem::CircleRotation { alpha } => {
                Arc::new(move |x, _, _, _| vec![wrap_angle(x[0] + alpha)])
            }
            BenchmarkSystem::IidChain { .. } => Arc::new(|_, _, _, _| vec![0.0]),
            BenchmarkSystem::DoublingMap => Arc::new(|x, _, _, _| vec![wrap_angle(2.0 * x[0])]),
            BenchmarkSystem::ScalarLinearMeanfield { a, c, .. } => {
                Arc::new(move |x, mu, _, _| vec![a * x[0] + c * mu[0]])
            }
            BenchmarkSystem::LqMeanfield(ref p) => return p.system(),
        };
        let noise = match *self {
            BenchmarkSystem::IidChain { half_width } => NoiseModel::uniform(1, half_width),
            BenchmarkSystem::ScalarLinearMeanfield { noise, .. } => NoiseModel::gaussian(1, noise),
            _ => NoiseModel::zero(1),
        };
        MeanFieldSystem::with_identity_diffusion(1, 1, drift, noise)
    }

    pub fn policy(&self) -> StationaryPolicy {
        match self {
            BenchmarkSystem::LqMeanfield(p) => p.data_policy(),
            _ => StationaryPolicy::zero(1),
        }
    }

    pub fn costs(&self) -> CostSpec {
        match self {
            BenchmarkSystem::LqMeanfield(p) => p.costs(),
            _ => {
                let sq: CostMap = Arc::new(|v, _| v[0] * v[0]);
                CostSpec {
                    stage_state: sq.clone(),
                    stage_control: sq.clone(),
                    terminal_state: sq,
                    ..CostSpec::zero(10)
                }
            }
        }
    }

    pub fn default_initial_law(&self) -> InitialLaw {
        match self {
            b if b.on_circle() => InitialLaw::Uniform {
                lo: vec![-PI],
                hi: vec![PI],
            },
            BenchmarkSystem::LqMeanfield(p) => InitialLaw::Point {
                x: vec![p.initial_state],
            },
            _ => InitialLaw::Point { x: vec![1.0] },
        }
    }

    /// Spectral measure of `g = e^{ikx}` against itself, where known.
    pub fn harmonic_truth(&self, k: i64) -> Result<SpectralTruth> {
        if k == 0 {
            return Ok(SpectralTruth {
                atoms: vec![(0.0, 1.0)],
                flat_mass: 0.0,
            });
        }
        match *self {
            BenchmarkSystem::CircleRotation { alpha } => Ok(SpectralTruth {
                atoms: vec![(wrap_angle(k as f64 * alpha), 1.0)],
                flat_mass: 0.0,
            }),
            BenchmarkSystem::IidChain { half_width } => {
                // E[e^{ikw}] = sin(kh)/(kh) for w uniform on [-h, h]
                let kh = k as f64 * half_width;
                let mean_sq = (kh.sin() / kh).powi(2);
                Ok(SpectralTruth {
                    atoms: if mean_sq > 0.0 {
                        vec![(0.0, mean_sq)]
                    } else {
                        Vec::new()
                    },
                    flat_mass: 1.0 - mean_sq,
                })
            }
            // ⟨e^{ikx}, e^{ik2^n x}⟩ = 0 for n ≥ 1 under the uniform law
            BenchmarkSystem::DoublingMap => Ok(SpectralTruth {
                atoms: Vec::new(),
                flat_mass: 1.0,
            }),
            _ => Err(Error::Unsupported(format!(
                "no analytic spectral measure for benchmark `{}`",
                self.name()
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::AggregatedState;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn names_round_trip_through_json() {
        let systems = [
            BenchmarkSystem::CircleRotation { alpha: 2.0 },
            BenchmarkSystem::IidChain { half_width: PI },
            BenchmarkSystem::DoublingMap,
            BenchmarkSystem::ScalarLinearMeanfield {
                a: 0.7,
                c: 0.2,
                noise: 0.1,
            },
            BenchmarkSystem::LqMeanfield(LqProblem::default()),
        ];
        for (s, name) in systems.iter().zip(BENCHMARK_NAMES) {
            let v = serde_json::to_value(s).unwrap();
            assert_eq!(v["name"], name);
            assert_eq!(&serde_json::from_value::<BenchmarkSystem>(v).unwrap(), s);
            assert_eq!(s.name(), name);
        }
    }

    #[test]
    fn benchmark_drifts_are_lipschitz_on_probe_box() {
        // linear drifts: the constant is the Euclidean norm of the coefficient row
        let lq = BenchmarkSystem::LqMeanfield(LqProblem::default())
            .system()
            .unwrap();
        let bound = lq.sampled_lipschitz_bound(10.0, 1000, 3).unwrap();
        assert!(bound <= (1.0f64 + 0.04 + 1.0).sqrt() + 1e-12, "{bound}");
        let lin = BenchmarkSystem::ScalarLinearMeanfield {
            a: 0.7,
            c: 0.2,
            noise: 0.0,
        }
        .system()
        .unwrap();
        assert!(
            lin.sampled_lipschitz_bound(10.0, 1000, 3).unwrap() <= (0.49f64 + 0.04).sqrt() + 1e-12
        );
    }

    #[test]
    fn rotation_preserves_uniform_second_moment() {
        let sys = BenchmarkSystem::CircleRotation { alpha: 2.0 }
            .system()
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = AggregatedState::deterministic(vec![3.0], vec![0.0]);
        let (x, _) = sys.transition(&y, &mut rng).unwrap();
        assert!((x[0] - wrap_angle(5.0)).abs() < 1e-15);
    }

    #[test]
    fn iid_truth_mass_is_one() {
        let t = BenchmarkSystem::IidChain { half_width: 1.0 }
            .harmonic_truth(1)
            .unwrap();
        let total: f64 = t.atoms.iter().map(|a| a.1).sum::<f64>() + t.flat_mass;
        assert!((total - 1.0).abs() < 1e-15);
        assert!(BenchmarkSystem::LqMeanfield(LqProblem::default())
            .harmonic_truth(1)
            .is_err());
    }
}

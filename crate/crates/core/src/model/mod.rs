//! The learned spectral model: eigenpairs on the unit circle, expansion
//! coefficients and per-state continuous densities for each observable.

mod eigen;
mod persist;

pub use eigen::{
    alignment, empirical_norm, fit_expansion_coefficients, harmonic_average_eigenfunction,
    BaseSamples, EigenTable, ExpansionCoefficients,
};
pub use persist::{
    load_model, model_from_str, model_to_string, save_model, state_checksum, MODEL_SCHEMA,
};

use crate::dynamics::{AggregatedState, Trajectory};
use crate::error::{invalid, Error, Result};
use crate::numeric::{circular_distance, hermitian_sum, pairwise_sum, pairwise_sum_by};
use crate::observables::Observable;
use crate::spectral::{
    default_threshold, detect_atoms, estimate_correlations, Atom, Averaging, Candidates, FilterKind,
};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Where eigenvalue candidates come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EigenCandidates {
    /// Grid search over the estimated spectral measure of every observable.
    #[default]
    Detect,
    /// Test only the listed angles.
    Angles { angles: Vec<f64> },
    /// No point spectrum; the continuous part carries everything.
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralConfig {
    /// Correlation order `N` used for atom detection.
    pub order: usize,
    /// Detection grid size, `4·order` when absent.
    pub grid_size: Option<usize>,
    pub threshold: Option<f64>,
    pub averaging: Averaging,
    pub candidates: EigenCandidates,
    /// Harmonic-average length `J`.
    pub harmonic_terms: usize,
    /// Offset stride between base states along a trajectory.
    pub stride: usize,
    /// Number of lags `N_c` in the per-state continuous sequences.
    pub continuous_order: usize,
    /// Quadrature size `N_q`, `2·N_c + 1` when absent.
    pub quadrature: Option<usize>,
    pub continuous_filter: FilterKind,
    /// Neighbors used for off-sample interpolation.
    pub neighbors: usize,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            order: 200,
            grid_size: None,
            threshold: None,
            averaging: Averaging::Ergodic,
            candidates: EigenCandidates::Detect,
            harmonic_terms: 512,
            stride: 10,
            continuous_order: 32,
            quadrature: None,
            continuous_filter: FilterKind::Sharp,
            neighbors: 4,
        }
    }
}

impl SpectralConfig {
    pub fn grid(&self) -> usize {
        self.grid_size.unwrap_or(4 * self.order)
    }

    pub fn quadrature_size(&self) -> usize {
        self.quadrature.unwrap_or(2 * self.continuous_order + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(invalid("order must be positive"));
        }
        if self.grid() < 4 * self.order {
            return Err(invalid(format!(
                "grid_size must be at least {}",
                4 * self.order
            )));
        }
        if self.stride == 0 || self.neighbors == 0 {
            return Err(invalid("stride and neighbors must be positive"));
        }
        if self.quadrature_size() < 2 * self.continuous_order + 1 {
            return Err(invalid(format!(
                "quadrature must be at least {} for continuous order {}",
                2 * self.continuous_order + 1,
                self.continuous_order
            )));
        }
        Ok(())
    }
}

/// An eigenvalue `λ = e^{iθ}` with its tabulated eigenfunction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub theta: f64,
    pub table: Vec<Complex64>,
    /// Empirical norm of the harmonic average before normalization.
    pub norm: f64,
    /// Label of the observable whose harmonic average produced the table.
    pub source: String,
}

impl EigenPair {
    pub fn lambda(&self) -> Complex64 {
        Complex64::from_polar(1.0, self.theta)
    }
}

/// Everything the predictor needs for one observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableModel {
    pub label: String,
    pub expansion: ExpansionCoefficients,
    /// `density[b][n]`: continuous aggregate at base state `b`, node `θ_{n+1}`.
    pub density: Vec<Vec<Complex64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KoopmanSpectralModel {
    pub state_dim: usize,
    pub control_dim: usize,
    pub states: Vec<AggregatedState>,
    pub eigenpairs: Vec<EigenPair>,
    pub observables: Vec<ObservableModel>,
    pub quadrature: usize,
    pub continuous_order: usize,
    pub continuous_filter: FilterKind,
    pub neighbors: usize,
}

/// Quadrature nodes `θ_n = -π + n·2π/N_q` for `n = 1..=N_q`.
pub fn quadrature_nodes(size: usize) -> Vec<f64> {
    let step = 2.0 * PI / size as f64;
    (1..=size).map(|n| -PI + n as f64 * step).collect()
}

impl KoopmanSpectralModel {
    pub fn nodes(&self) -> Vec<f64> {
        quadrature_nodes(self.quadrature)
    }

    pub fn observable(&self, label: &str) -> Result<&ObservableModel> {
        self.observables
            .iter()
            .find(|o| o.label == label)
            .ok_or_else(|| Error::Registry {
                kind: "model observable",
                name: label.to_string(),
                available: self.observables.iter().map(|o| o.label.clone()).collect(),
            })
    }

    /// Inverse-distance weights (power 2) over the nearest stored states; a
    /// stored state gets weight one on itself.
    pub fn interpolation_weights(&self, y: &AggregatedState) -> Result<Vec<(usize, f64)>> {
        if y.x.len() != self.state_dim
            || y.mu.len() != self.state_dim
            || y.u.len() != self.control_dim
            || y.rho.len() != self.control_dim
        {
            return Err(invalid("query state dimensions do not match the model"));
        }
        if self.states.is_empty() {
            return Err(invalid("model has no stored states"));
        }
        let q = y.flatten();
        let mut dist: Vec<(f64, usize)> = self
            .states
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let d2: f64 = s
                    .flatten()
                    .iter()
                    .zip(&q)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d2, i)
            })
            .collect();
        if let Some(&(_, i)) = dist.iter().find(|(d, _)| *d == 0.0) {
            return Ok(vec![(i, 1.0)]);
        }
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        dist.truncate(self.neighbors);
        let total: f64 = dist.iter().map(|(d2, _)| 1.0 / d2).sum();
        Ok(dist
            .into_iter()
            .map(|(d2, i)| (i, 1.0 / d2 / total))
            .collect())
    }

    /// `φ_λ(y)` for every eigenpair.
    pub fn eigenfunctions_at(&self, weights: &[(usize, f64)]) -> Vec<Complex64> {
        self.eigenpairs
            .iter()
            .map(|e| weights.iter().map(|&(i, w)| e.table[i] * w).sum())
            .collect()
    }

    /// Continuous aggregates of one observable at every node.
    pub fn densities_at(&self, obs: &ObservableModel, weights: &[(usize, f64)]) -> Vec<Complex64> {
        (0..self.quadrature)
            .map(|n| weights.iter().map(|&(i, w)| obs.density[i][n] * w).sum())
            .collect()
    }

    /// Copies the fit of `a·first + b·second` under `label`.
    pub fn combine(
        &mut self,
        label: &str,
        a: Complex64,
        first: &str,
        b: Complex64,
        second: &str,
    ) -> Result<()> {
        let (f, g) = (
            self.observable(first)?.clone(),
            self.observable(second)?.clone(),
        );
        let coefficients = f
            .expansion
            .coefficients
            .iter()
            .zip(&g.expansion.coefficients)
            .map(|(x, y)| a * x + b * y)
            .collect();
        let density = f
            .density
            .iter()
            .zip(&g.density)
            .map(|(p, q)| p.iter().zip(q).map(|(x, y)| a * x + b * y).collect())
            .collect();
        self.observables.retain(|o| o.label != label);
        self.observables.push(ObservableModel {
            label: label.to_string(),
            // triangle-inequality bound; the combination itself is not refit
            expansion: ExpansionCoefficients {
                coefficients,
                residual: a.norm() * f.expansion.residual + b.norm() * g.expansion.residual,
            },
            density,
        });
        Ok(())
    }

    /// Structural checks run after loading.
    pub fn validate(&self) -> Result<()> {
        let b = self.states.len();
        for s in &self.states {
            if s.x.len() != self.state_dim || s.u.len() != self.control_dim {
                return Err(invalid("stored state with wrong dimensions"));
            }
        }
        for e in &self.eigenpairs {
            if e.table.len() != b {
                return Err(invalid(format!(
                    "eigenfunction table at θ = {} has wrong length",
                    e.theta
                )));
            }
        }
        for o in &self.observables {
            if o.expansion.coefficients.len() != self.eigenpairs.len() {
                return Err(invalid(format!(
                    "observable `{}` has the wrong coefficient count",
                    o.label
                )));
            }
            if o.density.len() != b || o.density.iter().any(|d| d.len() != self.quadrature) {
                return Err(invalid(format!(
                    "observable `{}` has a malformed density table",
                    o.label
                )));
            }
        }
        Ok(())
    }
}

/// `E[g(y_t) | y_0]` from the point spectrum plus the Riemann sum over the
/// continuous part.
pub fn predict_observable(
    model: &KoopmanSpectralModel,
    y0: &AggregatedState,
    t: usize,
    label: &str,
) -> Result<Complex64> {
    let obs = model.observable(label)?;
    let weights = model.interpolation_weights(y0)?;
    let phi = model.eigenfunctions_at(&weights);
    let point = pairwise_sum_by(phi.len(), &|k| {
        obs.expansion.coefficients[k]
            * Complex64::from_polar(1.0, t as f64 * model.eigenpairs[k].theta)
            * phi[k]
    });
    let dens = model.densities_at(obs, &weights);
    let nodes = model.nodes();
    let cont = pairwise_sum_by(nodes.len(), &|n| {
        Complex64::from_polar(1.0, t as f64 * nodes[n]) * dens[n]
    });
    Ok(point + cont * (2.0 * PI / model.quadrature as f64))
}

struct TaggedAtom {
    atom: Atom,
    source: usize,
}

fn detect_eigenvalues(
    data: &[Trajectory],
    observables: &[Observable],
    config: &SpectralConfig,
) -> Result<Vec<TaggedAtom>> {
    let grid = config.grid();
    let mut found = Vec::new();
    for (k, g) in observables.iter().enumerate() {
        let corr = estimate_correlations(data, g, g, config.order, config.averaging)?;
        if corr.a0().norm() == 0.0 {
            continue;
        }
        let candidates = match &config.candidates {
            EigenCandidates::Skip => return Ok(Vec::new()),
            EigenCandidates::Detect => Candidates::Grid(grid),
            EigenCandidates::Angles { angles } => Candidates::Angles(angles.clone()),
        };
        let threshold = config
            .threshold
            .unwrap_or_else(|| default_threshold(&corr, grid));
        for atom in detect_atoms(&corr, &candidates, threshold)?.atoms {
            found.push(TaggedAtom { atom, source: k });
        }
    }
    found.sort_by(|a, b| {
        b.atom
            .weight
            .norm()
            .total_cmp(&a.atom.weight.norm())
            .then(a.atom.theta.total_cmp(&b.atom.theta))
            .then(a.source.cmp(&b.source))
    });
    let separation = 2.0 * 2.0 * PI / grid as f64;
    let mut kept: Vec<TaggedAtom> = Vec::new();
    for t in found {
        if kept
            .iter()
            .all(|k| circular_distance(k.atom.theta, t.atom.theta) >= separation)
        {
            kept.push(t);
        }
    }
    Ok(kept)
}

/// Runs detection, eigenfunction recovery, coefficient fitting and continuous
/// extraction for every observable, in that order.
pub fn build_model(
    data: &[Trajectory],
    observables: &[Observable],
    config: &SpectralConfig,
) -> Result<KoopmanSpectralModel> {
    config.validate().map_err(|e| e.in_stage("config"))?;
    let first = data
        .first()
        .and_then(|t| t.states.first())
        .ok_or_else(|| invalid("no trajectory data"))?;
    let (n, m) = (first.x.len(), first.u.len());
    let atoms = if observables.is_empty() || config.candidates == EigenCandidates::Skip {
        Vec::new()
    } else {
        detect_eigenvalues(data, observables, config).map_err(|e| e.in_stage("detect"))?
    };

    let nc = config.continuous_order;
    let horizon = if atoms.is_empty() {
        nc + 1
    } else {
        config.harmonic_terms.max(nc + 1)
    };
    let base = BaseSamples::collect(data, horizon, config.stride)
        .map_err(|e| e.in_stage("base-states"))?;

    let tables: Vec<(TaggedAtom, EigenTable)> = atoms
        .into_par_iter()
        .map(|t| {
            harmonic_average_eigenfunction(
                data,
                &base,
                &observables[t.source],
                t.atom.theta,
                config.harmonic_terms,
            )
            .map(|table| (t, table))
        })
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("eigenfunctions"))?;
    let eigenpairs: Vec<EigenPair> = tables
        .into_iter()
        .filter_map(|(t, table)| {
            if table.norm <= 1e-12 {
                log::warn!(
                    "dropping eigenvalue at θ = {}: harmonic average vanished",
                    t.atom.theta
                );
                return None;
            }
            Some(EigenPair {
                theta: t.atom.theta,
                table: table.values,
                norm: table.norm,
                source: observables[t.source].label().to_string(),
            })
        })
        .collect();

    let quadrature = config.quadrature_size();
    let nodes = quadrature_nodes(quadrature);
    let taper = config.continuous_filter.taper(nc);
    let refs: Vec<&[Complex64]> = eigenpairs.iter().map(|e| e.table.as_slice()).collect();
    let mut fitted = Vec::with_capacity(observables.len());
    for g in observables {
        let means = base
            .mean_paths(data, g, nc + 1)
            .map_err(|e| e.in_stage("continuous"))?;
        let g0: Vec<Complex64> = means.iter().map(|m| m[0]).collect();
        let expansion =
            fit_expansion_coefficients(&g0, &refs).map_err(|e| e.in_stage("coefficients"))?;
        let density: Vec<Vec<Complex64>> = means
            .par_iter()
            .enumerate()
            .map(|(b, m)| {
                let coeffs: Vec<Complex64> = (0..=nc)
                    .map(|t| {
                        let point: Complex64 = eigenpairs
                            .iter()
                            .zip(&expansion.coefficients)
                            .map(|(e, c)| {
                                c * Complex64::from_polar(1.0, t as f64 * e.theta) * e.table[b]
                            })
                            .sum();
                        (m[t] - point) * taper[t]
                    })
                    .collect();
                nodes
                    .iter()
                    .map(|&th| hermitian_sum(&coeffs, th) / (2.0 * PI))
                    .collect()
            })
            .collect();
        fitted.push(ObservableModel {
            label: g.label().to_string(),
            expansion,
            density,
        });
    }
    Ok(KoopmanSpectralModel {
        state_dim: n,
        control_dim: m,
        states: base.states,
        eigenpairs,
        observables: fitted,
        quadrature,
        continuous_order: nc,
        continuous_filter: config.continuous_filter,
        neighbors: config.neighbors,
    })
}

/// Total continuous-part mass `(2π/N_q) Σ_n φ̃(θ_n, y)` per stored state.
pub fn continuous_mass(model: &KoopmanSpectralModel, label: &str) -> Result<Vec<Complex64>> {
    let obs = model.observable(label)?;
    Ok(obs
        .density
        .iter()
        .map(|d| pairwise_sum(d) * (2.0 * PI / model.quadrature as f64))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::MeanMode;
    use crate::numeric::wrap_angle;

    fn rotation_data(alpha: f64, len: usize) -> Vec<Trajectory> {
        let mut theta = 0.3;
        let states = (0..len)
            .map(|_| {
                let y = AggregatedState::deterministic(vec![theta], vec![0.0]);
                theta = wrap_angle(theta + alpha);
                y
            })
            .collect();
        vec![Trajectory {
            states,
            seed: 0,
            mode: MeanMode::PaperLiteral,
        }]
    }

    fn rotation_config() -> SpectralConfig {
        SpectralConfig {
            order: 200,
            harmonic_terms: 256,
            stride: 13,
            continuous_order: 20,
            ..SpectralConfig::default()
        }
    }

    fn harmonic() -> Observable {
        Observable::complex("e1", |y| Complex64::from_polar(1.0, y.x[0]))
    }

    #[test]
    fn rotation_model_has_one_eigenpair() {
        let alpha = 2.0;
        let model = build_model(
            &rotation_data(alpha, 4000),
            &[harmonic()],
            &rotation_config(),
        )
        .unwrap();
        assert_eq!(model.eigenpairs.len(), 1);
        assert!(circular_distance(model.eigenpairs[0].theta, alpha) < 1e-6);
        let c = model.observables[0].expansion.coefficients[0];
        assert!((c.norm() - 1.0).abs() < 1e-6);
        let mass = continuous_mass(&model, "e1").unwrap();
        assert!(mass.iter().all(|v| v.norm() < 1e-6));
    }

    #[test]
    fn prediction_follows_rotation() {
        let alpha = 2.0;
        let model = build_model(
            &rotation_data(alpha, 4000),
            &[harmonic()],
            &rotation_config(),
        )
        .unwrap();
        let y0 = model.states[5].clone();
        let g0 = Complex64::from_polar(1.0, y0.x[0]);
        for t in 0..=20 {
            let p = predict_observable(&model, &y0, t, "e1").unwrap();
            let truth = Complex64::from_polar(1.0, t as f64 * alpha) * g0;
            assert!((p - truth).norm() < 1e-6, "t={t}");
        }
    }

    #[test]
    fn no_observables_gives_empty_model() {
        let model = build_model(&rotation_data(2.0, 500), &[], &rotation_config()).unwrap();
        assert!(model.eigenpairs.is_empty() && model.observables.is_empty());
    }

    #[test]
    fn zero_observable_has_zero_density() {
        let zero = Observable::real("zero", |_| 0.0);
        let model = build_model(&rotation_data(2.0, 500), &[zero], &rotation_config()).unwrap();
        assert!(model.eigenpairs.is_empty());
        assert!(model.observables[0]
            .density
            .iter()
            .flatten()
            .all(|v| v.norm() == 0.0));
    }

    #[test]
    fn unregistered_observable_is_a_registry_error() {
        let model =
            build_model(&rotation_data(2.0, 500), &[harmonic()], &rotation_config()).unwrap();
        let err = predict_observable(&model, &model.states[0], 1, "missing").unwrap_err();
        assert!(matches!(err, Error::Registry { .. }));
    }

    #[test]
    fn stored_state_passthrough_and_interpolation() {
        let model =
            build_model(&rotation_data(2.0, 4000), &[harmonic()], &rotation_config()).unwrap();
        let w = model.interpolation_weights(&model.states[3]).unwrap();
        assert_eq!(w, vec![(3, 1.0)]);
        let off = AggregatedState::deterministic(vec![model.states[3].x[0] + 1e-3], vec![0.0]);
        let w = model.interpolation_weights(&off).unwrap();
        assert_eq!(w.len(), 4);
        assert!((w.iter().map(|p| p.1).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn combined_fit_predicts_linearly() {
        let other = Observable::real("cos", |y| y.x[0].cos());
        let mut model = build_model(
            &rotation_data(2.0, 4000),
            &[harmonic(), other],
            &rotation_config(),
        )
        .unwrap();
        let (a, b) = (Complex64::new(0.5, -1.0), Complex64::new(2.0, 0.25));
        model.combine("mix", a, "e1", b, "cos").unwrap();
        let off = AggregatedState::deterministic(vec![0.123], vec![0.0]);
        for t in [0, 3, 11] {
            let lhs = predict_observable(&model, &off, t, "mix").unwrap();
            let rhs = a * predict_observable(&model, &off, t, "e1").unwrap()
                + b * predict_observable(&model, &off, t, "cos").unwrap();
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn continuous_part_reproduces_mean_sequence() {
        // contraction x' = 0.5x has no unit-circle atoms; the continuous part
        // must return the per-state sequence exactly up to N_c
        let data: Vec<Trajectory> = (0..5)
            .map(|r| {
                let mut x = r as f64 - 2.0;
                let states = (0..12)
                    .map(|_| {
                        let y = AggregatedState::deterministic(vec![x], vec![0.0]);
                        x *= 0.5;
                        y
                    })
                    .collect();
                Trajectory {
                    states,
                    seed: 0,
                    mode: MeanMode::PaperLiteral,
                }
            })
            .collect();
        let g = Observable::real("x", |y| y.x[0]);
        let config = SpectralConfig {
            order: 5,
            averaging: Averaging::Ensemble,
            candidates: EigenCandidates::Skip,
            continuous_order: 10,
            stride: 100,
            ..SpectralConfig::default()
        };
        let model = build_model(&data, &[g], &config).unwrap();
        let y0 = AggregatedState::deterministic(vec![-2.0], vec![0.0]);
        for t in 0..=10 {
            let p = predict_observable(&model, &y0, t, "x").unwrap();
            assert!(
                (p.re + 2.0 * 0.5f64.powi(t as i32)).abs() < 1e-12 && p.im.abs() < 1e-12,
                "t={t}: {p}"
            );
        }
    }
}

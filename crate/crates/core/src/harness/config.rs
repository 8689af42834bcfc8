//! Experiment configuration documents.

use super::benchmarks::BenchmarkSystem;
use crate::dynamics::{AggregatedState, InitialLaw, MeanMode};
use crate::error::{Error, Result};
use crate::model::{EigenCandidates, SpectralConfig};
use crate::mpc::{ControlBox, LinearConstraint, LoopMode, MpcConfig};
use crate::observables::{builtin_observable, Observable};
use crate::spectral::{Averaging, FilterKind};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSpec {
    pub name: String,
    #[serde(default)]
    pub params: Value,
}

impl Default for ObservableSpec {
    fn default() -> Self {
        Self {
            name: "harmonic".into(),
            params: serde_json::json!({ "k": 1 }),
        }
    }
}

impl ObservableSpec {
    pub fn build(&self) -> Result<Observable> {
        let params = if self.params.is_null() {
            Value::Object(Default::default())
        } else {
            self.params.clone()
        };
        builtin_observable(&self.name, &params)
            .map_err(|e| Error::Config(format!("observable: {e}")))
    }

    /// Wave number of a `harmonic` observable on the first state coordinate.
    pub fn harmonic_k(&self) -> Option<i64> {
        if self.name != "harmonic" {
            return None;
        }
        let on_x = self.params.get("block").is_none_or(|b| b == "x");
        let first = self.params.get("index").is_none_or(|i| i == 0);
        if !(on_x && first) {
            return None;
        }
        match self.params.get("k") {
            None | Some(Value::Null) => Some(1),
            Some(k) => k.as_i64(),
        }
    }
}

/// Overrides of the spectral model settings; absent fields take
/// benchmark-dependent defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub order: Option<usize>,
    pub candidates: Option<EigenCandidates>,
    pub harmonic_terms: Option<usize>,
    pub stride: Option<usize>,
    pub continuous_order: Option<usize>,
    pub quadrature: Option<usize>,
    pub continuous_filter: Option<FilterKind>,
    pub neighbors: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct MpcSettings {
    pub horizon: Option<usize>,
    pub quadrature: Option<usize>,
    pub control_box: Option<ControlBox>,
    pub constraints: Vec<LinearConstraint>,
    pub grid_points: Option<usize>,
    pub local_evaluations: Option<usize>,
    pub loop_mode: LoopMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySettings {
    pub orders: Vec<usize>,
    pub data_sizes: Vec<usize>,
    /// Trajectory length per unit of order in the convergence study; the
    /// configured trajectory length is used when absent.
    pub samples_per_order: Option<usize>,
}

impl Default for StudySettings {
    fn default() -> Self {
        Self {
            orders: vec![200, 2000],
            data_sizes: vec![200, 800, 3200],
            samples_per_order: None,
        }
    }
}

fn default_length() -> usize {
    10_000
}

fn one() -> usize {
    1
}

fn default_order() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub benchmark: BenchmarkSystem,
    #[serde(default)]
    pub observable: ObservableSpec,
    #[serde(default = "default_length")]
    pub trajectory_length: usize,
    #[serde(default = "one")]
    pub trajectory_count: usize,
    #[serde(default = "one")]
    pub particles: usize,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default)]
    pub grid_size: Option<usize>,
    #[serde(default)]
    pub filter: FilterKind,
    #[serde(default)]
    pub averaging: Averaging,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub mode: MeanMode,
    #[serde(default)]
    pub initial_law: Option<InitialLaw>,
    #[serde(default)]
    pub model: ModelSettings,
    #[serde(default)]
    pub mpc: MpcSettings,
    /// Closed-loop length; the cost horizon of the benchmark when absent.
    #[serde(default)]
    pub episode_length: Option<usize>,
    /// Start of closed loops and predictions.
    #[serde(default)]
    pub initial_state: Option<AggregatedState>,
    #[serde(default)]
    pub studies: StudySettings,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Minimal configuration for a benchmark with every default applied.
    pub fn for_benchmark(benchmark: BenchmarkSystem) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            benchmark,
            observable: ObservableSpec::default(),
            trajectory_length: default_length(),
            trajectory_count: 1,
            particles: 1,
            order: default_order(),
            grid_size: None,
            filter: FilterKind::Fejer,
            averaging: Averaging::Ergodic,
            threshold: None,
            mode: MeanMode::PaperLiteral,
            initial_law: None,
            model: ModelSettings::default(),
            mpc: MpcSettings::default(),
            episode_length: None,
            initial_state: None,
            studies: StudySettings::default(),
            seed: 0,
            output_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("config: cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn grid(&self) -> usize {
        self.grid_size.unwrap_or(4 * self.order)
    }

    pub fn initial_law(&self) -> InitialLaw {
        self.initial_law
            .clone()
            .unwrap_or_else(|| self.benchmark.default_initial_law())
    }

    fn is_lq(&self) -> bool {
        matches!(self.benchmark, BenchmarkSystem::LqMeanfield(_))
    }

    /// Cost horizon of the benchmark.
    pub fn cost_horizon(&self) -> usize {
        self.benchmark.costs().horizon
    }

    pub fn episode(&self) -> usize {
        self.episode_length.unwrap_or_else(|| self.cost_horizon())
    }

    pub fn spectral_config(&self) -> SpectralConfig {
        let m = &self.model;
        let lq = match &self.benchmark {
            BenchmarkSystem::LqMeanfield(p) => Some(p),
            _ => None,
        };
        let base = SpectralConfig::default();
        let order = m.order.unwrap_or(self.order);
        SpectralConfig {
            order,
            grid_size: Some(self.grid_size.unwrap_or(4 * order).max(4 * order)),
            threshold: self.threshold,
            averaging: self.averaging,
            candidates: m.candidates.clone().unwrap_or(if lq.is_some() {
                EigenCandidates::Skip
            } else {
                EigenCandidates::Detect
            }),
            harmonic_terms: m.harmonic_terms.unwrap_or(base.harmonic_terms),
            stride: m
                .stride
                .unwrap_or(if lq.is_some() { 1 } else { base.stride }),
            continuous_order: m
                .continuous_order
                .unwrap_or_else(|| lq.map_or(base.continuous_order, |p| p.horizon)),
            quadrature: m.quadrature,
            continuous_filter: m.continuous_filter.unwrap_or(base.continuous_filter),
            neighbors: m.neighbors.unwrap_or(base.neighbors),
        }
    }

    pub fn mpc_config(&self) -> MpcConfig {
        let s = &self.mpc;
        let base = MpcConfig::default();
        MpcConfig {
            horizon: s.horizon.unwrap_or_else(|| self.cost_horizon()),
            quadrature: s.quadrature,
            control_box: s.control_box.clone().unwrap_or(base.control_box),
            constraints: s.constraints.clone(),
            grid_points: s.grid_points.unwrap_or(base.grid_points),
            local_evaluations: s.local_evaluations.unwrap_or(base.local_evaluations),
            loop_mode: s.loop_mode,
            seed: self.seed,
        }
    }

    /// Closed-loop and prediction start: the configured state, or the mean of
    /// the initial law with the data policy's control.
    pub fn start_state(&self) -> Result<AggregatedState> {
        if let Some(y) = &self.initial_state {
            return Ok(y.clone());
        }
        let x = super::data::law_mean(&self.initial_law());
        let u = self.benchmark.policy().mean(&x)?;
        Ok(AggregatedState::deterministic(x, u))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            ));
        }
        self.benchmark.validate()?;
        for (name, v) in [
            ("trajectory_length", self.trajectory_length),
            ("trajectory_count", self.trajectory_count),
            ("particles", self.particles),
            ("order", self.order),
        ] {
            if v == 0 {
                return bad(format!("{name}: must be positive"));
            }
        }
        if self.trajectory_length < self.order + 1 {
            return bad(format!(
                "trajectory_length: {} is shorter than order + 1 = {}",
                self.trajectory_length,
                self.order + 1
            ));
        }
        if self.grid() < 4 * self.order {
            return bad(format!(
                "grid_size: must be at least 4·order = {}",
                4 * self.order
            ));
        }
        if let Some(t) = self.threshold {
            if !(t > 0.0 && t.is_finite()) {
                return bad("threshold: must be positive and finite".into());
            }
        }
        if self.initial_law().dim() != 1 {
            return bad("initial_law: benchmarks are scalar, expected dimension 1".into());
        }
        if let Some(y) = &self.initial_state {
            if y.x.len() != 1 || y.mu.len() != 1 || y.u.len() != 1 || y.rho.len() != 1 {
                return bad("initial_state: x, mu, u and rho must each have one entry".into());
            }
        }
        self.observable.build()?;
        self.spectral_config()
            .validate()
            .map_err(|e| Error::Config(format!("model: {e}")))?;
        let mpc = self.mpc_config();
        if mpc.horizon == 0 {
            return bad("mpc.horizon: must be at least 1".into());
        }
        if mpc.grid_points == 0 {
            return bad("mpc.grid_points: must be positive".into());
        }
        let cb = &mpc.control_box;
        if cb.lo.len() != 1 || cb.hi.len() != 1 {
            return bad("mpc.control_box: lo and hi must each have one entry".into());
        }
        if cb.lo[0] > cb.hi[0] {
            return bad(format!(
                "mpc.control_box: lo {} exceeds hi {}",
                cb.lo[0], cb.hi[0]
            ));
        }
        if self.episode() == 0 {
            return bad("episode_length: must be at least 1".into());
        }
        if self.studies.orders.contains(&0) {
            return bad("studies.orders: entries must be positive".into());
        }
        if self.studies.data_sizes.contains(&0) {
            return bad("studies.data_sizes: entries must be positive".into());
        }
        if self.studies.samples_per_order == Some(0) {
            return bad("studies.samples_per_order: must be positive".into());
        }
        if self.is_lq()
            && self
                .mpc
                .horizon
                .is_some_and(|h| h > self.spectral_config().continuous_order)
        {
            return bad("mpc.horizon: exceeds the model's continuous order".into());
        }
        Ok(())
    }
}

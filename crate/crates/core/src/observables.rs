//! Observation functions on the aggregated state space and their empirical
//! inner products.

use crate::dynamics::{AggregatedState, CostSpec};
use crate::error::{invalid, Error, Result};
use crate::numeric::pairwise_sum_by;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::fmt;
use std::sync::Arc;

pub type Evaluator = Arc<dyn Fn(&AggregatedState) -> Complex64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Codomain {
    Real,
    Complex,
}

#[derive(Clone)]
pub struct Observable {
    label: String,
    codomain: Codomain,
    evaluator: Evaluator,
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Observable")
            .field("label", &self.label)
            .field("codomain", &self.codomain)
            .finish_non_exhaustive()
    }
}

impl Observable {
    pub fn complex(
        label: impl Into<String>,
        f: impl Fn(&AggregatedState) -> Complex64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            codomain: Codomain::Complex,
            evaluator: Arc::new(f),
        }
    }

    pub fn real(
        label: impl Into<String>,
        f: impl Fn(&AggregatedState) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            codomain: Codomain::Real,
            evaluator: Arc::new(move |y| Complex64::new(f(y), 0.0)),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn codomain(&self) -> Codomain {
        self.codomain
    }

    /// True when both handles share the same evaluator.
    pub fn same_as(&self, other: &Observable) -> bool {
        Arc::ptr_eq(&self.evaluator, &other.evaluator)
    }

    pub fn eval(&self, y: &AggregatedState) -> Complex64 {
        (self.evaluator)(y)
    }

    pub fn sample(&self, states: &[AggregatedState]) -> SampledObservable {
        SampledObservable {
            values: states.iter().map(|y| self.eval(y)).collect(),
        }
    }

    /// Pointwise `a·self + b·other`.
    pub fn combine(&self, a: Complex64, other: &Observable, b: Complex64) -> Observable {
        let (f, g) = (self.evaluator.clone(), other.evaluator.clone());
        let codomain = if self.codomain == Codomain::Real
            && other.codomain == Codomain::Real
            && a.im == 0.0
            && b.im == 0.0
        {
            Codomain::Real
        } else {
            Codomain::Complex
        };
        Observable {
            label: format!("({a})*{}+({b})*{}", self.label, other.label),
            codomain,
            evaluator: Arc::new(move |y| a * f(y) + b * g(y)),
        }
    }
}

/// Observable values aligned with a sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledObservable {
    pub values: Vec<Complex64>,
}

impl SampledObservable {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Which block of `(x, μ, u, ρ)` a builtin observable reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    X,
    Mu,
    U,
    Rho,
}

impl Block {
    fn parse(name: &str) -> Result<Self> {
        match name {
            "x" => Ok(Block::X),
            "mu" => Ok(Block::Mu),
            "u" => Ok(Block::U),
            "rho" => Ok(Block::Rho),
            other => Err(invalid(format!(
                "unknown state block `{other}` (x, mu, u, rho)"
            ))),
        }
    }

    fn get(self, y: &AggregatedState, index: usize) -> f64 {
        let v = match self {
            Block::X => &y.x,
            Block::Mu => &y.mu,
            Block::U => &y.u,
            Block::Rho => &y.rho,
        };
        v.get(index).copied().unwrap_or(f64::NAN)
    }
}

pub const BUILTIN_OBSERVABLES: &[&str] = &[
    "constant",
    "coordinate",
    "monomial",
    "harmonic",
    "cos",
    "sin",
];

fn param_f64(params: &Value, key: &str, default: f64) -> Result<f64> {
    match params.get(key) {
        None | Some(Value::Null) => Ok(default),
        Some(v) => v
            .as_f64()
            .ok_or_else(|| invalid(format!("parameter `{key}` must be a number"))),
    }
}

fn param_usize(params: &Value, key: &str, default: usize) -> Result<usize> {
    match params.get(key) {
        None | Some(Value::Null) => Ok(default),
        Some(v) => v
            .as_u64()
            .map(|v| v as usize)
            .ok_or_else(|| invalid(format!("parameter `{key}` must be a non-negative integer"))),
    }
}

fn param_i64(params: &Value, key: &str, default: i64) -> Result<i64> {
    match params.get(key) {
        None | Some(Value::Null) => Ok(default),
        Some(v) => v
            .as_i64()
            .ok_or_else(|| invalid(format!("parameter `{key}` must be an integer"))),
    }
}

fn param_block(params: &Value) -> Result<Block> {
    match params.get("block") {
        None | Some(Value::Null) => Ok(Block::X),
        Some(Value::String(s)) => Block::parse(s),
        Some(_) => Err(invalid("parameter `block` must be a string")),
    }
}

/// Builds an observable from the builtin registry.
///
/// | name         | parameters                                      |
/// |--------------|-------------------------------------------------|
/// | `constant`   | `value` (default 1)                             |
/// | `coordinate` | `block` (x, mu, u, rho; default x), `index`     |
/// | `monomial`   | exponent arrays `x`, `mu`, `u`, `rho`           |
/// | `harmonic`   | `k`, `block`, `index`: `e^{ik·θ}` with θ the coordinate |
/// | `cos`, `sin` | as `harmonic`, real and imaginary parts         |
pub fn builtin_observable(name: &str, params: &Value) -> Result<Observable> {
    match name {
        "constant" => {
            let value = param_f64(params, "value", 1.0)?;
            Ok(Observable::real(format!("constant({value})"), move |_| {
                value
            }))
        }
        "coordinate" => {
            let block = param_block(params)?;
            let index = param_usize(params, "index", 0)?;
            Ok(Observable::real(
                format!("coordinate({block:?}[{index}])"),
                move |y| block.get(y, index),
            ))
        }
        "monomial" => {
            let mut factors: Vec<(Block, usize, i32)> = Vec::new();
            for (key, block) in [
                ("x", Block::X),
                ("mu", Block::Mu),
                ("u", Block::U),
                ("rho", Block::Rho),
            ] {
                match params.get(key) {
                    None | Some(Value::Null) => {}
                    Some(Value::Array(exps)) => {
                        for (i, e) in exps.iter().enumerate() {
                            let e = e.as_u64().ok_or_else(|| {
                                invalid(format!(
                                    "monomial exponent {key}[{i}] must be a non-negative integer"
                                ))
                            })?;
                            if e > 0 {
                                factors.push((block, i, e as i32));
                            }
                        }
                    }
                    Some(_) => {
                        return Err(invalid(format!(
                            "monomial parameter `{key}` must be an array"
                        )))
                    }
                }
            }
            Ok(Observable::real(format!("monomial({params})"), move |y| {
                factors
                    .iter()
                    .map(|&(b, i, e)| b.get(y, i).powi(e))
                    .product()
            }))
        }
        "harmonic" | "cos" | "sin" => {
            let k = param_i64(params, "k", 1)? as f64;
            let block = param_block(params)?;
            let index = param_usize(params, "index", 0)?;
            let label = format!("{name}(k={k})");
            Ok(match name {
                "harmonic" => Observable::complex(label, move |y| {
                    Complex64::from_polar(1.0, k * block.get(y, index))
                }),
                "cos" => Observable::real(label, move |y| (k * block.get(y, index)).cos()),
                _ => Observable::real(label, move |y| (k * block.get(y, index)).sin()),
            })
        }
        other => Err(Error::Registry {
            kind: "observable",
            name: other.to_string(),
            available: BUILTIN_OBSERVABLES.iter().map(|s| s.to_string()).collect(),
        }),
    }
}

/// The four cost terms of the finite-horizon objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CostTerm {
    F,
    C,
    G,
    H,
}

impl CostTerm {
    pub const ALL: [CostTerm; 4] = [CostTerm::F, CostTerm::C, CostTerm::G, CostTerm::H];

    pub fn name(self) -> &'static str {
        match self {
            CostTerm::F => "F",
            CostTerm::C => "C",
            CostTerm::G => "G",
            CostTerm::H => "H",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "F" => Ok(CostTerm::F),
            "C" => Ok(CostTerm::C),
            "G" => Ok(CostTerm::G),
            "H" => Ok(CostTerm::H),
            other => Err(Error::Registry {
                kind: "cost term",
                name: other.to_string(),
                available: vec!["F".into(), "C".into(), "G".into(), "H".into()],
            }),
        }
    }
}

/// Lifts one cost map to an observable on the aggregated state.
pub fn cost_observable(costs: &CostSpec, term: CostTerm) -> Observable {
    let map = match term {
        CostTerm::F => costs.stage_state.clone(),
        CostTerm::C => costs.stage_control.clone(),
        CostTerm::G => costs.terminal_state.clone(),
        CostTerm::H => costs.terminal_control.clone(),
    };
    match term {
        CostTerm::F | CostTerm::G => Observable::real(term.name(), move |y| map(&y.x, &y.mu)),
        CostTerm::C | CostTerm::H => Observable::real(term.name(), move |y| map(&y.u, &y.rho)),
    }
}

/// `(1/L) Σ_i conj(f_i) g_i` over pre-sampled values.
pub fn sampled_inner_product(f: &[Complex64], g: &[Complex64]) -> Result<Complex64> {
    if f.is_empty() {
        return Err(invalid("inner product over an empty sample set"));
    }
    if f.len() != g.len() {
        return Err(invalid(format!(
            "sample lengths differ ({} vs {})",
            f.len(),
            g.len()
        )));
    }
    let sum = pairwise_sum_by(f.len(), &|i| f[i].conj() * g[i]);
    Ok(sum / f.len() as f64)
}

/// Empirical `⟨f, g⟩` with respect to the sample distribution.
pub fn empirical_inner_product(
    f: &Observable,
    g: &Observable,
    samples: &[AggregatedState],
) -> Result<Complex64> {
    if samples.is_empty() {
        return Err(invalid("inner product over an empty sample set"));
    }
    sampled_inner_product(&f.sample(samples).values, &g.sample(samples).values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;
    use std::f64::consts::PI;

    fn on_x(x: Vec<f64>) -> AggregatedState {
        let n = x.len();
        AggregatedState::new(x, vec![0.0; n], vec![0.0], vec![0.0])
    }

    #[test]
    fn coordinate_projection() {
        let f = builtin_observable("coordinate", &json!({"index": 0})).unwrap();
        assert_eq!(f.eval(&on_x(vec![3.0, 1.0])), Complex64::new(3.0, 0.0));
    }

    #[test]
    fn harmonic_at_quarter_turn() {
        let f = builtin_observable("harmonic", &json!({"k": 1})).unwrap();
        let v = f.eval(&on_x(vec![PI / 2.0]));
        assert!((v - Complex64::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn monomial_product() {
        let f = builtin_observable("monomial", &json!({"x": [2], "mu": [1]})).unwrap();
        let y = AggregatedState::new(vec![2.0], vec![3.0], vec![0.0], vec![0.0]);
        assert_eq!(f.eval(&y).re, 12.0);
    }

    #[test]
    fn unknown_name_lists_registry() {
        let err = builtin_observable("bessel", &json!({})).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bessel") && msg.contains("harmonic"), "{msg}");
    }

    #[test]
    fn constant_self_product_is_one() {
        let one = builtin_observable("constant", &json!({})).unwrap();
        let samples: Vec<_> = (0..7).map(|i| on_x(vec![i as f64])).collect();
        assert_eq!(
            empirical_inner_product(&one, &one, &samples).unwrap(),
            Complex64::new(1.0, 0.0)
        );
    }

    #[test]
    fn distinct_harmonics_are_orthogonal_on_grid() {
        let h1 = builtin_observable("harmonic", &json!({"k": 1})).unwrap();
        let h2 = builtin_observable("harmonic", &json!({"k": 2})).unwrap();
        let samples: Vec<_> = crate::numeric::angle_grid(64)
            .into_iter()
            .map(|t| on_x(vec![t]))
            .collect();
        assert!(empirical_inner_product(&h1, &h2, &samples).unwrap().norm() < 1e-14);
    }

    #[test]
    fn single_sample_norm() {
        let g = builtin_observable("harmonic", &json!({"k": 3}))
            .unwrap()
            .combine(
                Complex64::new(2.0, 1.0),
                &builtin_observable("constant", &json!({"value": 0.5})).unwrap(),
                Complex64::new(1.0, 0.0),
            );
        let y = on_x(vec![0.4]);
        let ip = empirical_inner_product(&g, &g, std::slice::from_ref(&y)).unwrap();
        assert!((ip.re - g.eval(&y).norm_sqr()).abs() < 1e-14 && ip.im == 0.0);
    }

    #[test]
    fn empty_samples_rejected() {
        let one = builtin_observable("constant", &json!({})).unwrap();
        assert!(matches!(
            empirical_inner_product(&one, &one, &[]),
            Err(Error::InvalidArgument(_))
        ));
    }

    fn complex_vec(len: usize) -> impl Strategy<Value = Vec<Complex64>> {
        prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), len)
            .prop_map(|v| v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect())
    }

    proptest! {
        #[test]
        fn conjugate_symmetry_is_exact((f, g) in (1usize..60).prop_flat_map(|n| (complex_vec(n), complex_vec(n)))) {
            let fg = sampled_inner_product(&f, &g).unwrap();
            let gf = sampled_inner_product(&g, &f).unwrap();
            prop_assert_eq!(fg, gf.conj());
        }

        #[test]
        fn self_product_is_real_nonnegative(g in (1usize..60).prop_flat_map(complex_vec)) {
            let gg = sampled_inner_product(&g, &g).unwrap();
            prop_assert_eq!(gg.im, 0.0);
            prop_assert!(gg.re >= 0.0);
        }

        #[test]
        fn linear_in_second_argument(
            (f, g, h) in (1usize..40).prop_flat_map(|n| (complex_vec(n), complex_vec(n), complex_vec(n))),
            a in -3.0..3.0f64,
            b in -3.0..3.0f64,
        ) {
            let combo: Vec<Complex64> = g.iter().zip(&h).map(|(x, y)| x * a + y * b).collect();
            let lhs = sampled_inner_product(&f, &combo).unwrap();
            let rhs = sampled_inner_product(&f, &g).unwrap() * a + sampled_inner_product(&f, &h).unwrap() * b;
            let scale = 1.0 + lhs.norm() + rhs.norm();
            prop_assert!((lhs - rhs).norm() <= 1e-12 * scale * 100.0);
        }
    }
}

use crate::dynamics::Trajectory;
use crate::error::{invalid, Result};
use crate::numeric::pairwise_sum_by;
use crate::observables::Observable;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// How `⟨f, K^n g⟩` is averaged from data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Averaging {
    /// Time-offset averaging along every trajectory.
    #[default]
    Ergodic,
    /// Average of `conj(f(y_0^r)) g(y_n^r)` over independent trajectories `r`.
    Ensemble,
}

/// Estimated Fourier coefficients `a_0 … a_N` of `ν_{f,g}`.
///
/// Negative indices are implicit: `a_{-n} = conj(a_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSequence {
    pub coefficients: Vec<Complex64>,
    pub labels: (String, String),
    pub samples: usize,
    /// True when the sequence was estimated with `f = g`.
    pub autocorrelation: bool,
}

impl CorrelationSequence {
    pub fn from_coefficients(coefficients: Vec<Complex64>) -> Result<Self> {
        if coefficients.len() < 2 {
            return Err(invalid("correlation order must be at least 1"));
        }
        Ok(Self {
            coefficients,
            labels: (String::new(), String::new()),
            samples: 0,
            autocorrelation: false,
        })
    }

    pub fn order(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// `a_n` for `|n| ≤ N`.
    pub fn get(&self, n: isize) -> Complex64 {
        let c = self.coefficients[n.unsigned_abs()];
        if n < 0 {
            c.conj()
        } else {
            c
        }
    }

    pub fn a0(&self) -> Complex64 {
        self.coefficients[0]
    }

    /// The sequence for the swapped pair `(g, f)` under the Hermitian convention.
    pub fn swapped(&self) -> Self {
        Self {
            coefficients: self.coefficients.iter().map(|c| c.conj()).collect(),
            labels: (self.labels.1.clone(), self.labels.0.clone()),
            samples: self.samples,
            autocorrelation: self.autocorrelation,
        }
    }
}

/// Weight of offset `i` at lag `n < N` along a path of `len` samples: the
/// number of length-`N` blocks `[s, s+N)` that contain both `i` and `i+n`.
fn block_count(i: usize, n: usize, order: usize, len: usize) -> usize {
    let a = order - 1 - n;
    let b = len - order;
    i.min(a).min(b).min(a + b - i) + 1
}

/// Lag `n < N` averages every admissible offset with trapezoid weights, so
/// that `(1 - n/N) a_n` is the mean of the block periodogram coefficients and
/// the Fejér estimate for `f = g` is non-negative. Lag `N` carries zero Fejér
/// weight and uses the plain window `i = 0..len-N-1`.
fn ergodic_coefficients(
    f_paths: &[Vec<Complex64>],
    g_paths: &[Vec<Complex64>],
    order: usize,
) -> Vec<Complex64> {
    let offsets: Vec<(usize, usize)> = f_paths
        .iter()
        .enumerate()
        .flat_map(|(r, f)| (0..f.len()).map(move |i| (r, i)))
        .collect();
    let blocks: usize = f_paths.iter().map(|f| f.len() - order + 1).sum();
    (0..=order)
        .into_par_iter()
        .map(|n| {
            let len = |r: usize| f_paths[r].len();
            let s = pairwise_sum_by(offsets.len(), &|k| {
                let (r, i) = offsets[k];
                if i + n >= len(r) {
                    return Complex64::new(0.0, 0.0);
                }
                let w = if n < order {
                    block_count(i, n, order, len(r)) as f64
                } else if i < len(r) - order {
                    1.0
                } else {
                    0.0
                };
                f_paths[r][i].conj() * g_paths[r][i + n] * w
            });
            let total = if n < order {
                (blocks * (order - n)) as f64
            } else {
                f_paths.iter().map(|f| f.len() - order).sum::<usize>() as f64
            };
            s / (total * 2.0 * PI)
        })
        .collect()
}

/// Core estimator on pre-sampled observable paths (one `Vec` per trajectory).
pub fn correlations_from_samples(
    f_paths: &[Vec<Complex64>],
    g_paths: &[Vec<Complex64>],
    order: usize,
    averaging: Averaging,
) -> Result<(Vec<Complex64>, usize)> {
    if order == 0 {
        return Err(invalid("correlation order must be at least 1"));
    }
    if f_paths.is_empty() || f_paths.len() != g_paths.len() {
        return Err(invalid("need the same non-zero number of f and g paths"));
    }
    for (r, (f, g)) in f_paths.iter().zip(g_paths).enumerate() {
        if f.len() != g.len() {
            return Err(invalid(format!(
                "trajectory {r}: f and g sample counts differ"
            )));
        }
        if f.len() < order + 1 {
            return Err(invalid(format!(
                "trajectory {r} has {} samples; order {order} requires at least {}",
                f.len(),
                order + 1
            )));
        }
    }
    let coefficients = match averaging {
        Averaging::Ergodic => ergodic_coefficients(f_paths, g_paths, order),
        Averaging::Ensemble => {
            let count = f_paths.len();
            (0..=order)
                .into_par_iter()
                .map(|n| {
                    pairwise_sum_by(count, &|r| f_paths[r][0].conj() * g_paths[r][n])
                        / (count as f64 * 2.0 * PI)
                })
                .collect()
        }
    };
    let count = match averaging {
        Averaging::Ergodic => f_paths.iter().map(|f| f.len() - order).sum(),
        Averaging::Ensemble => f_paths.len(),
    };
    Ok((coefficients, count))
}

/// Estimates `a_n = (1/2π) ⟨f, K^n g⟩` for `n = 0..=order` from trajectories.
pub fn estimate_correlations(
    data: &[Trajectory],
    f: &Observable,
    g: &Observable,
    order: usize,
    averaging: Averaging,
) -> Result<CorrelationSequence> {
    let f_paths: Vec<Vec<Complex64>> = data.iter().map(|t| f.sample(&t.states).values).collect();
    let g_paths: Vec<Vec<Complex64>> = data.iter().map(|t| g.sample(&t.states).values).collect();
    let (coefficients, samples) = correlations_from_samples(&f_paths, &g_paths, order, averaging)?;
    Ok(CorrelationSequence {
        coefficients,
        labels: (f.label().to_string(), g.label().to_string()),
        samples,
        autocorrelation: f.same_as(g),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::wrap_angle;

    fn harmonic_path(theta0: f64, alpha: f64, len: usize) -> Vec<Complex64> {
        let mut theta = theta0;
        (0..len)
            .map(|_| {
                let v = Complex64::from_polar(1.0, theta);
                theta = wrap_angle(theta + alpha);
                v
            })
            .collect()
    }

    #[test]
    fn identity_dynamics_give_flat_sequence() {
        // constant paths with unit modulus: <g, g> = 1
        let paths: Vec<Vec<Complex64>> = (0..5)
            .map(|r| vec![Complex64::from_polar(1.0, r as f64); 30])
            .collect();
        let (a, _) = correlations_from_samples(&paths, &paths, 10, Averaging::Ergodic).unwrap();
        for c in a {
            assert!((c - Complex64::new(1.0 / (2.0 * PI), 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn rotation_sequence_is_a_pure_phase() {
        let alpha = 2.0;
        let path = harmonic_path(0.3, alpha, 500);
        for avg in [Averaging::Ergodic, Averaging::Ensemble] {
            let (a, _) = correlations_from_samples(
                std::slice::from_ref(&path),
                std::slice::from_ref(&path),
                40,
                avg,
            )
            .unwrap();
            for (n, c) in a.iter().enumerate() {
                let expected = Complex64::from_polar(1.0 / (2.0 * PI), n as f64 * alpha);
                assert!((c - expected).norm() < 1e-12, "n={n}: {c} vs {expected}");
            }
        }
    }

    #[test]
    fn fejer_sum_is_non_negative_on_a_decaying_path() {
        use crate::numeric::hermitian_sum;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut x = 1.0f64;
        let path: Vec<Complex64> = (0..300)
            .map(|_| {
                x = 0.7 * x + 0.1 * rng.random_range(-1.0..1.0);
                Complex64::from_polar(1.0, x)
            })
            .collect();
        let order = 100;
        let (a, count) = correlations_from_samples(
            std::slice::from_ref(&path),
            std::slice::from_ref(&path),
            order,
            Averaging::Ergodic,
        )
        .unwrap();
        assert_eq!(count, 200);
        let tapered: Vec<Complex64> = a
            .iter()
            .enumerate()
            .map(|(n, c)| c * (1.0 - n as f64 / order as f64))
            .collect();
        for j in 0..1000 {
            let theta = -PI + j as f64 * 2.0 * PI / 1000.0;
            assert!(hermitian_sum(&tapered, theta).re >= -1e-12);
        }
    }

    #[test]
    fn too_short_names_required_length() {
        let path = vec![Complex64::new(1.0, 0.0); 5];
        let err = correlations_from_samples(
            std::slice::from_ref(&path),
            std::slice::from_ref(&path),
            5,
            Averaging::Ergodic,
        )
        .unwrap_err();
        assert!(err.to_string().contains("at least 6"), "{err}");
    }

    #[test]
    fn swapped_conjugates_coefficients() {
        let seq = CorrelationSequence::from_coefficients(vec![
            Complex64::new(1.0, 0.5),
            Complex64::new(0.2, -0.3),
        ])
        .unwrap();
        let s = seq.swapped();
        assert_eq!(s.get(1), seq.get(1).conj());
        assert_eq!(seq.get(-1), seq.get(1).conj());
    }
}

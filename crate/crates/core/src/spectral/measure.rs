//! Filtered Fourier inversion of a correlation sequence, atom detection and
//! the operational split into point masses and a density.

use super::correlation::CorrelationSequence;
use super::filter::FilterKind;
use crate::error::{invalid, Result};
use crate::numeric::{angle_grid, circular_distance, hermitian_sum, wrap_angle};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::f64::consts::PI;

/// Golden-section iterations used to refine an atom location.
const REFINE_ITERATIONS: usize = 30;

/// A point mass `weight · δ(θ - theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub theta: f64,
    pub weight: Complex64,
}

/// Atoms detected from a correlation sequence of a given order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct AtomTable {
    pub order: usize,
    pub atoms: Vec<Atom>,
}

impl AtomTable {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// Grid samples of the filtered density `ν_{f,g,N}` plus detected atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralMeasureEstimate {
    pub grid: Vec<f64>,
    pub density: Vec<Complex64>,
    pub atoms: Vec<Atom>,
    pub filter: FilterKind,
    pub order: usize,
}

impl SpectralMeasureEstimate {
    pub fn grid_step(&self) -> f64 {
        2.0 * PI / self.grid.len() as f64
    }

    /// Periodic trapezoid rule `∫ ν_{f,g,N}(θ) dθ` over the grid.
    pub fn total_mass(&self) -> Complex64 {
        let s: Complex64 = crate::numeric::pairwise_sum(&self.density);
        s * self.grid_step()
    }

    /// `∫ h(θ) ν_{f,g,N}(θ) dθ` by the periodic trapezoid rule.
    pub fn integrate(&self, h: impl Fn(f64) -> f64) -> Complex64 {
        let terms: Vec<Complex64> = self
            .grid
            .iter()
            .zip(&self.density)
            .map(|(t, d)| d * h(*t))
            .collect();
        crate::numeric::pairwise_sum(&terms) * self.grid_step()
    }
}

/// Where `detect_atoms` looks for atoms.
#[derive(Debug, Clone, PartialEq)]
pub enum Candidates {
    /// Uniform grid of the given size with local-maximum search and refinement.
    Grid(usize),
    /// Explicit angles, each tested as is.
    Angles(Vec<f64>),
}

fn filtered_coefficients(corr: &CorrelationSequence, filter: FilterKind) -> Vec<Complex64> {
    let order = corr.order();
    filter
        .taper(order)
        .into_iter()
        .zip(&corr.coefficients)
        .map(|(w, a)| a * w)
        .collect()
}

/// Evaluates `ν_{f,g,N}(θ) = Σ_{|n|≤N} φ(n/N) a_n e^{-inθ}` on a uniform grid.
///
/// The `e^{-inθ}` kernel places the atom of an eigenvalue `e^{iα}` at `θ = α`.
pub fn reconstruct_measure(
    corr: &CorrelationSequence,
    filter: FilterKind,
    grid_size: usize,
) -> Result<SpectralMeasureEstimate> {
    let order = corr.order();
    if grid_size < 4 * order {
        return Err(invalid(format!(
            "grid of {grid_size} points cannot resolve order {order}; need at least {}",
            4 * order
        )));
    }
    let coeffs = filtered_coefficients(corr, filter);
    let grid = angle_grid(grid_size);
    let density = grid
        .par_iter()
        .map(|&t| hermitian_sum(&coeffs, t))
        .collect();
    Ok(SpectralMeasureEstimate {
        grid,
        density,
        atoms: Vec::new(),
        filter,
        order,
    })
}

/// Default detection threshold `10 · N_grid^{-1/2} · 2π|a_0|`.
pub fn default_threshold(corr: &CorrelationSequence, grid_size: usize) -> f64 {
    10.0 / (grid_size as f64).sqrt() * corr.a0().norm() * 2.0 * PI
}

/// Cesàro harmonic average `w(θ) = (2π/(2N+1)) Σ_{|n|≤N} a_n e^{-inθ}`.
pub fn atom_weight(corr: &CorrelationSequence, theta: f64) -> Complex64 {
    let order = corr.order();
    hermitian_sum(&corr.coefficients, theta) * (2.0 * PI / (2 * order + 1) as f64)
}

/// Fejér-tapered peak score `(2π/N) |Σ (1-|n|/N) a_n e^{-inθ}|`; equals the
/// atom mass at an isolated atom and has low sidelobes.
fn peak_score(fejer: &[Complex64], order: usize, theta: f64) -> f64 {
    hermitian_sum(fejer, theta).norm() * 2.0 * PI / order as f64
}

fn golden_section_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - ratio * (hi - lo);
    let mut d = lo + ratio * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..REFINE_ITERATIONS {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - ratio * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + ratio * (hi - lo);
            fd = f(d);
        }
    }
    if fc >= fd {
        c
    } else {
        d
    }
}

fn by_weight_then_angle(a: &Atom, b: &Atom) -> Ordering {
    b.weight
        .norm()
        .partial_cmp(&a.weight.norm())
        .unwrap_or(Ordering::Equal)
        .then(a.theta.partial_cmp(&b.theta).unwrap_or(Ordering::Equal))
}

/// Detects the point masses of `ν_{f,g}`.
///
/// On a grid, candidates are local maxima of the Fejér-tapered score that
/// reach `threshold`; each is refined by golden-section search on `|w(θ)|`
/// within one grid cell and kept when `|w(θ*)| ≥ threshold`. Atoms closer
/// than two grid cells to a heavier atom are dropped. The result is sorted by
/// `|weight|` descending, ties by ascending angle.
pub fn detect_atoms(
    corr: &CorrelationSequence,
    candidates: &Candidates,
    threshold: f64,
) -> Result<AtomTable> {
    if threshold.is_nan() || threshold <= 0.0 {
        return Err(invalid(format!(
            "atom threshold must be positive, got {threshold}"
        )));
    }
    let order = corr.order();
    let mut atoms: Vec<Atom> = match candidates {
        Candidates::Angles(angles) => angles
            .iter()
            .map(|&t| Atom {
                theta: wrap_angle(t),
                weight: atom_weight(corr, t),
            })
            .filter(|a| a.weight.norm() >= threshold)
            .collect(),
        Candidates::Grid(size) => {
            if *size < 3 {
                return Err(invalid("candidate grid needs at least 3 points"));
            }
            let fejer = filtered_coefficients(corr, FilterKind::Fejer);
            let grid = angle_grid(*size);
            let scores: Vec<f64> = grid
                .par_iter()
                .map(|&t| peak_score(&fejer, order, t))
                .collect();
            let cell = 2.0 * PI / *size as f64;
            let peaks: Vec<usize> = (0..*size)
                .filter(|&j| {
                    let left = scores[(j + size - 1) % size];
                    let right = scores[(j + 1) % size];
                    scores[j] >= threshold && scores[j] >= left && scores[j] > right
                })
                .collect();
            let mut refined: Vec<Atom> = peaks
                .par_iter()
                .map(|&j| {
                    let t = golden_section_max(
                        |t| atom_weight(corr, t).norm(),
                        grid[j] - cell,
                        grid[j] + cell,
                    );
                    Atom {
                        theta: wrap_angle(t),
                        weight: atom_weight(corr, t),
                    }
                })
                .filter(|a| a.weight.norm() >= threshold)
                .collect();
            refined.sort_by(by_weight_then_angle);
            let mut kept: Vec<Atom> = Vec::with_capacity(refined.len());
            for a in refined {
                if kept
                    .iter()
                    .all(|k| circular_distance(k.theta, a.theta) >= 2.0 * cell)
                {
                    kept.push(a);
                }
            }
            kept
        }
    };
    atoms.sort_by(by_weight_then_angle);
    Ok(AtomTable { order, atoms })
}

/// `weight · (1/2π) Σ_{|n|≤N} φ(n/N) e^{in(θ - θ*)}` on the estimate's grid.
pub fn smeared_atom(atom: &Atom, filter: FilterKind, order: usize, grid: &[f64]) -> Vec<Complex64> {
    let coeffs: Vec<Complex64> = filter
        .taper(order)
        .into_iter()
        .enumerate()
        .map(|(n, w)| Complex64::from_polar(w / (2.0 * PI), n as f64 * atom.theta))
        .collect();
    grid.par_iter()
        .map(|&t| atom.weight * hermitian_sum(&coeffs, t).re)
        .collect()
}

/// Subtracts the filter-smeared contribution of every atom from the grid
/// density, leaving the absolutely continuous component.
pub fn extract_continuous_part(
    estimate: &SpectralMeasureEstimate,
    atoms: &AtomTable,
) -> Result<Vec<Complex64>> {
    if atoms.order != estimate.order {
        return Err(invalid(format!(
            "atoms come from order {} but the estimate has order {}",
            atoms.order, estimate.order
        )));
    }
    let mut out = estimate.density.clone();
    for atom in &atoms.atoms {
        let smear = smeared_atom(atom, estimate.filter, estimate.order, &estimate.grid);
        for (o, s) in out.iter_mut().zip(smear) {
            *o -= s;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotation_corr(alpha: f64, order: usize) -> CorrelationSequence {
        CorrelationSequence::from_coefficients(
            (0..=order)
                .map(|n| Complex64::from_polar(1.0 / (2.0 * PI), n as f64 * alpha))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_sequence_gives_zero_density_and_no_atoms() {
        let corr =
            CorrelationSequence::from_coefficients(vec![Complex64::new(0.0, 0.0); 11]).unwrap();
        let est = reconstruct_measure(&corr, FilterKind::Fejer, 40).unwrap();
        assert!(est.density.iter().all(|d| d.norm() == 0.0));
        let atoms = detect_atoms(&corr, &Candidates::Grid(40), 1e-3).unwrap();
        assert!(atoms.is_empty());
    }

    #[test]
    fn flat_spectrum() {
        let mut c = vec![Complex64::new(0.0, 0.0); 9];
        c[0] = Complex64::new(1.0 / (2.0 * PI), 0.0);
        let corr = CorrelationSequence::from_coefficients(c).unwrap();
        for filter in FilterKind::ALL {
            let est = reconstruct_measure(&corr, filter, 64).unwrap();
            for d in &est.density {
                assert!((d.re - 1.0 / (2.0 * PI)).abs() < 1e-15 && d.im == 0.0);
            }
        }
    }

    #[test]
    fn fejer_peak_sits_at_rotation_angle() {
        // Fejér kernel mass at the atom: Σ_{|n|≤N} (1 - |n|/N) = N
        let alpha = 1.0;
        let order = 50;
        let grid = 4 * order;
        let corr = rotation_corr(alpha, order);
        let est = reconstruct_measure(&corr, FilterKind::Fejer, grid).unwrap();
        let mut peak = Atom {
            theta: 0.0,
            weight: Complex64::new(0.0, 0.0),
        };
        for (t, d) in est.grid.iter().zip(&est.density) {
            if d.re > peak.weight.re {
                peak = Atom {
                    theta: *t,
                    weight: *d,
                };
            }
        }
        assert!(circular_distance(peak.theta, alpha) <= PI / grid as f64 + 1e-12);
        let exact = hermitian_sum(&filtered_coefficients(&corr, FilterKind::Fejer), alpha).re;
        assert!((exact - order as f64 / (2.0 * PI)).abs() < 1e-10);
    }

    #[test]
    fn coarse_grid_rejected_with_minimum() {
        let corr = rotation_corr(0.5, 10);
        let err = reconstruct_measure(&corr, FilterKind::Fejer, 39).unwrap_err();
        assert!(err.to_string().contains("40"), "{err}");
    }

    #[test]
    fn single_rotation_atom() {
        let alpha = 2.0;
        let order = 200;
        let corr = rotation_corr(alpha, order);
        let table = detect_atoms(
            &corr,
            &Candidates::Grid(4 * order),
            default_threshold(&corr, 4 * order),
        )
        .unwrap();
        assert_eq!(table.len(), 1, "{table:?}");
        let atom = table.atoms[0];
        assert!(circular_distance(atom.theta, alpha) < 1e-6);
        assert!((atom.weight - Complex64::new(1.0, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn cosine_observable_splits_into_two_atoms() {
        let alpha = 0.9;
        let order = 300;
        // cos θ = (e^{iθ} + e^{-iθ})/2 under rotation: a_n = cos(nα)/(4π)
        let coeffs: Vec<Complex64> = (0..=order)
            .map(|n| Complex64::new((n as f64 * alpha).cos() / (4.0 * PI), 0.0))
            .collect();
        let corr = CorrelationSequence::from_coefficients(coeffs).unwrap();
        let grid = 4 * order;
        let table = detect_atoms(
            &corr,
            &Candidates::Grid(grid),
            default_threshold(&corr, grid),
        )
        .unwrap();
        assert_eq!(table.len(), 2, "{table:?}");
        for atom in &table.atoms {
            assert!((atom.weight.norm() - 0.25).abs() < 5e-3);
            assert!(circular_distance(atom.theta.abs(), alpha) < 1e-4);
        }
        assert!(table.atoms[0].theta * table.atoms[1].theta < 0.0);
    }

    #[test]
    fn nonpositive_threshold_rejected() {
        let corr = rotation_corr(1.0, 5);
        assert!(detect_atoms(&corr, &Candidates::Grid(20), 0.0).is_err());
    }

    #[test]
    fn explicit_angles_are_evaluated_directly() {
        let corr = rotation_corr(1.0, 100);
        let table = detect_atoms(&corr, &Candidates::Angles(vec![1.0, 2.5]), 0.5).unwrap();
        assert_eq!(table.len(), 1);
        assert!((table.atoms[0].weight.re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn subtraction_leaves_small_residual() {
        let alpha = 2.0;
        let order = 1000;
        let corr = rotation_corr(alpha, order);
        let est = reconstruct_measure(&corr, FilterKind::Fejer, 4 * order).unwrap();
        let table = detect_atoms(
            &corr,
            &Candidates::Grid(4 * order),
            default_threshold(&corr, 4 * order),
        )
        .unwrap();
        let cont = extract_continuous_part(&est, &table).unwrap();
        let peak = est.density.iter().map(|d| d.norm()).fold(0.0, f64::max);
        let resid = cont.iter().map(|d| d.norm()).fold(0.0, f64::max);
        assert!(resid <= 1e-2 * peak, "{resid} vs {peak}");
    }

    #[test]
    fn no_atoms_leaves_density_untouched() {
        let corr = rotation_corr(0.4, 20);
        let est = reconstruct_measure(&corr, FilterKind::Cosine, 80).unwrap();
        let cont = extract_continuous_part(
            &est,
            &AtomTable {
                order: 20,
                atoms: vec![],
            },
        )
        .unwrap();
        assert_eq!(cont, est.density);
    }

    #[test]
    fn zero_weight_atom_changes_nothing() {
        let mut c = vec![Complex64::new(0.0, 0.0); 21];
        c[0] = Complex64::new(0.3, 0.0);
        let corr = CorrelationSequence::from_coefficients(c).unwrap();
        let est = reconstruct_measure(&corr, FilterKind::Fejer, 80).unwrap();
        let spurious = AtomTable {
            order: 20,
            atoms: vec![Atom {
                theta: 0.7,
                weight: Complex64::new(0.0, 0.0),
            }],
        };
        let cont = extract_continuous_part(&est, &spurious).unwrap();
        for (a, b) in cont.iter().zip(&est.density) {
            assert!((a - b).norm() <= 1e-15);
        }
    }

    #[test]
    fn mismatched_order_rejected() {
        let corr = rotation_corr(0.4, 20);
        let est = reconstruct_measure(&corr, FilterKind::Fejer, 80).unwrap();
        assert!(extract_continuous_part(
            &est,
            &AtomTable {
                order: 19,
                atoms: vec![]
            }
        )
        .is_err());
    }
}

//! Spectral measure estimation from trajectory data.

pub mod correlation;
pub mod filter;
pub mod measure;

pub use correlation::{
    correlations_from_samples, estimate_correlations, Averaging, CorrelationSequence,
};
pub use filter::FilterKind;
pub use measure::{
    atom_weight, default_threshold, detect_atoms, extract_continuous_part, reconstruct_measure,
    smeared_atom, Atom, AtomTable, Candidates, SpectralMeasureEstimate,
};

//! Benchmark systems, the LQ oracle, experiment configs and runners, and
//! table/summary persistence.

pub mod benchmarks;
pub mod config;
pub mod data;
pub mod experiments;
pub mod io;
pub mod oracle;

pub use benchmarks::{BenchmarkSystem, LqProblem, SpectralTruth, BENCHMARK_NAMES};
pub use config::{
    ExperimentConfig, ModelSettings, MpcSettings, ObservableSpec, StudySettings, SCHEMA_VERSION,
};
pub use data::{law_mean, lq_dataset, radical_inverse, simulate_dataset};
pub use experiments::{
    config_dataset, config_truth, fit_model, model_observables, run_closed_loop,
    run_convergence_study, run_optimality_study, run_spectrum_experiment, weak_metric,
    ClosedLoopSummary, ConvergenceRow, OptimalityRow, SpectrumReport, SpectrumSummary,
};
pub use oracle::{enumerate_lq_oracle, solve_lq_meanfield_oracle, OracleSolution};

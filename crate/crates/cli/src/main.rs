//! `kmfc`: batch front end for the koopman-mfc experiments.
//!
//! Every subcommand reads one experiment config, writes CSV tables and JSON
//! summaries into the output directory, and exits with 0 on success, 2 on a
//! configuration error and 1 on any other failure.

use clap::{Args, Parser, Subcommand};
use koopman_mfc::harness::io::{
    closed_loop_rows, eigen_rows, write_atoms, write_closed_loop, write_density, write_file,
    write_json_file, write_rows, write_trajectories, PredictionRow,
};
use koopman_mfc::harness::{
    config_dataset, config_truth, fit_model, run_closed_loop, run_convergence_study,
    run_optimality_study, run_spectrum_experiment, solve_lq_meanfield_oracle, BenchmarkSystem,
    ExperimentConfig,
};
use koopman_mfc::model::{load_model, model_to_string, predict_observable, KoopmanSpectralModel};
use koopman_mfc::mpc::{ControlBox, LoopMode};
use koopman_mfc::spectral::FilterKind;
use koopman_mfc::{Error, Result};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "kmfc",
    version,
    about = "Koopman spectral models and MPC for mean-field systems"
)]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,

    /// Output directory; overrides `output_dir` of the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct ModelArg {
    /// Load a saved model instead of fitting one.
    #[arg(long, value_name = "PATH")]
    model: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the benchmark and export trajectories.
    Simulate,
    /// Estimate the spectral measure of the configured observable.
    Spectrum {
        #[arg(long, value_parser = ["fejer", "cosine", "sharp"])]
        filter: Option<String>,
    },
    /// Fit a model and export its eigenvalues.
    Eigs,
    /// Fit a model and save it.
    Fit,
    /// Predict the configured observable along the horizon.
    Predict {
        #[command(flatten)]
        model: ModelArg,
        /// Last prediction step.
        #[arg(long, default_value_t = 20)]
        steps: usize,
    },
    /// Run the closed loop.
    Mpc {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, value_name = "T")]
        horizon: Option<usize>,
        #[arg(long, value_name = "N_q")]
        quadrature: Option<usize>,
        #[arg(long, value_name = "lo,hi", allow_hyphen_values = true)]
        control_box: Option<String>,
        #[arg(long, value_parser = ["relift", "paper-literal"])]
        mode: Option<String>,
    },
    /// Reference values: the LQ oracle or the analytic spectral measure.
    Bench,
    /// Weak-metric error against the known spectral measure for each order.
    StudyConvergence,
    /// Closed-loop cost against the oracle for each data size.
    StudyOptimality,
}

fn parse_box(text: &str) -> Result<ControlBox> {
    let parts: Vec<&str> = text.split(',').collect();
    let [lo, hi] = parts.as_slice() else {
        return Err(Error::Config(format!(
            "--control-box: expected `lo,hi`, got `{text}`"
        )));
    };
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("--control-box: `{s}` is not a number")))
    };
    Ok(ControlBox {
        lo: vec![num(lo)?],
        hi: vec![num(hi)?],
    })
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config: an experiment config is required".into()))?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn output_dir(cli: &Cli, config: &ExperimentConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn model_for(config: &ExperimentConfig, arg: &ModelArg) -> Result<KoopmanSpectralModel> {
    match &arg.model {
        Some(path) => load_model(path),
        None => fit_model(config),
    }
}

fn run(cli: &Cli) -> Result<()> {
    let mut config = load_config(cli)?;
    match &cli.command {
        Command::Spectrum { filter: Some(f) } => config.filter = f.parse::<FilterKind>()?,
        Command::Mpc {
            horizon,
            quadrature,
            control_box,
            mode,
            ..
        } => {
            if horizon.is_some() {
                config.mpc.horizon = *horizon;
            }
            if quadrature.is_some() {
                config.mpc.quadrature = *quadrature;
            }
            if let Some(text) = control_box {
                config.mpc.control_box = Some(parse_box(text)?);
            }
            if let Some(m) = mode {
                config.mpc.loop_mode = m
                    .parse::<LoopMode>()
                    .map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        _ => {}
    }
    config.validate()?;
    let dir = output_dir(cli, &config);
    log::info!("{} -> {}", config.benchmark.name(), dir.display());

    match &cli.command {
        Command::Simulate => {
            let data = config_dataset(&config, config.trajectory_length)?;
            write_file(&dir, "trajectories.csv", |buf| {
                write_trajectories(buf, &data)
            })
        }
        Command::Spectrum { .. } => {
            let report = run_spectrum_experiment(&config)?;
            write_file(&dir, "density.csv", |buf| {
                write_density(buf, &report.estimate.grid, &report.estimate.density)
            })?;
            write_file(&dir, "atoms.csv", |buf| {
                write_atoms(buf, &report.summary.atoms)
            })?;
            write_file(&dir, "continuous.csv", |buf| {
                write_density(buf, &report.estimate.grid, &report.continuous)
            })?;
            write_json_file(&dir, "summary.json", &report.summary)
        }
        Command::Eigs => {
            let model = fit_model(&config)?;
            write_file(&dir, "eigenvalues.csv", |buf| {
                write_rows(buf, &eigen_rows(&model))
            })
        }
        Command::Fit => {
            let model = fit_model(&config)?;
            let text = model_to_string(&model)?;
            write_file(&dir, "model.json", |buf| {
                buf.extend_from_slice(text.as_bytes());
                Ok(())
            })
        }
        Command::Predict { model, steps } => {
            let model = model_for(&config, model)?;
            let label = config.observable.build()?.label().to_string();
            let y0 = config.start_state()?;
            let rows = (0..=*steps)
                .map(|t| {
                    predict_observable(&model, &y0, t, &label).map(|v| PredictionRow {
                        t,
                        value_re: v.re,
                        value_im: v.im,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            write_file(&dir, "prediction.csv", |buf| write_rows(buf, &rows))
        }
        Command::Mpc { model, .. } => {
            let model = model_for(&config, model)?;
            let (trajectories, single, summary) = run_closed_loop(&config, &model)?;
            match single {
                Some(run) => write_file(&dir, "closed_loop.csv", |buf| {
                    write_closed_loop(buf, &closed_loop_rows(&run))
                })?,
                None => write_file(&dir, "trajectories.csv", |buf| {
                    write_trajectories(buf, &trajectories)
                })?,
            }
            write_json_file(&dir, "summary.json", &summary)
        }
        Command::Bench => match &config.benchmark {
            BenchmarkSystem::LqMeanfield(p) => {
                write_json_file(&dir, "oracle.json", &solve_lq_meanfield_oracle(p)?)
            }
            _ => write_json_file(&dir, "truth.json", &config_truth(&config)?),
        },
        Command::StudyConvergence => {
            let rows = run_convergence_study(&config, &config.studies.orders)?;
            write_file(&dir, "convergence.csv", |buf| write_rows(buf, &rows))
        }
        Command::StudyOptimality => {
            let rows = run_optimality_study(&config, &config.studies.data_sizes)?;
            write_file(&dir, "optimality.csv", |buf| write_rows(buf, &rows))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}

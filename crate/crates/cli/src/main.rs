//! `predopt`: run experiments, check diagnostics and export LP models.
//!
//! Exit codes: 0 success, 1 failed checks or other errors, 2 configuration
//! errors, 3 data errors.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Parser, Subcommand, ValueEnum};
use predopt_core::datagen::{
    gen_knapsack_data, gen_knapsack_instance, gen_multiclass_data, gen_truth_matrix,
    KnapsackGenParams, LogitGenParams,
};
use predopt_core::harness::{
    records_summary, run_experiment, run_suite, write_records, ExperimentConfig, SuiteName,
    SuiteParams,
};
use predopt_core::mipgen::{emit_multiclass_spo_lp, emit_reg_gap_erm};
use predopt_core::rng::derive_seed;
use predopt_core::{Dataset, Error, KnapsackDomain};

#[derive(Parser)]
#[command(name = "predopt", version, about = "Predict-then-optimize experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML or JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the output path of the config.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a diagnostic suite and report every checked inequality.
    Diagnostics {
        /// squared_bound, margin_bound, vanishing_margin, multiclass, one_dim, calibration or all.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 100)]
        predictors: usize,
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
    },
    /// Write an LP-format model of an ERM problem for an external solver.
    EmitMip {
        #[arg(long, value_enum)]
        kind: MipKind,
        /// CSV with w* feature and c* cost columns; generated when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        m: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.01)]
        lambda: f64,
        /// Bound on every predictor coefficient.
        #[arg(long, default_value_t = 10.0)]
        v_box: f64,
        /// Comma-separated knapsack weights; generated when absent.
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
        #[arg(long)]
        capacity: Option<f64>,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MipKind {
    RegGap,
    Multiclass,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_config() => 2,
        Some(Error::Data(_) | Error::Csv(_) | Error::Io { .. } | Error::Parse { .. } | Error::Dimension { .. }) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(cmd: Command) -> anyhow::Result<u8> {
    match cmd {
        Command::Run { config, output } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(o) = output {
                cfg.output = o;
            }
            let table = run_experiment(&cfg)?;
            table
                .write(&cfg.output)
                .with_context(|| format!("writing results to {}", cfg.output.display()))?;
            print!("{}", table.summary_string());
            println!("{} rows written to {}", table.len(), cfg.output.display());
            Ok(0)
        }
        Command::Diagnostics {
            suite,
            output,
            seed,
            trials,
            predictors,
            eps,
        } => {
            let name = SuiteName::parse(&suite)?;
            if trials == 0 || predictors == 0 || !(eps > 0.0) {
                return Err(Error::Config("trials and predictors must be positive, eps > 0".into()).into());
            }
            let records = run_suite(
                name,
                &SuiteParams {
                    seed,
                    trials,
                    predictors,
                    eps,
                },
            )?;
            if let Some(path) = &output {
                write_records(&records, path)?;
            }
            print!("{}", records_summary(&records));
            let failed = records.iter().filter(|r| !r.satisfied).count();
            Ok(if failed == 0 { 0 } else { 1 })
        }
        Command::EmitMip {
            kind,
            data,
            n,
            m,
            k,
            seed,
            lambda,
            v_box,
            weights,
            capacity,
            output,
        } => {
            let loaded = match &data {
                Some(p) => Some(Dataset::read_csv(p).with_context(|| format!("reading {}", p.display()))?),
                None => None,
            };
            let model = match kind {
                MipKind::RegGap => {
                    let m = loaded.as_ref().map_or(m, Dataset::cost_dim);
                    let dom = match (weights, capacity) {
                        (Some(w), Some(b)) => KnapsackDomain::new(w, b)?,
                        (None, None) => gen_knapsack_instance(m, derive_seed(seed, 0))?,
                        _ => return Err(Error::Config("--weights and --capacity go together".into()).into()),
                    };
                    let train = match loaded {
                        Some(d) => d,
                        None => {
                            let params = KnapsackGenParams {
                                m,
                                k,
                                degree: 1,
                                noise_halfwidth: 0.1,
                                additive_noise: true,
                                seed: derive_seed(seed, 3),
                            };
                            gen_knapsack_data(&params, &gen_truth_matrix(m, k, derive_seed(seed, 1)), n)?
                        }
                    };
                    let mip = emit_reg_gap_erm(&train, &dom, lambda, v_box)?;
                    println!("big-M {:e}, budget-price big-M {:e}", mip.big_m, mip.big_m_tau);
                    mip.model
                }
                MipKind::Multiclass => {
                    let train = match loaded {
                        Some(d) => d,
                        None => {
                            let params = LogitGenParams::random(m, k, derive_seed(seed, 1), derive_seed(seed, 3));
                            gen_multiclass_data(&params, n)?.data
                        }
                    };
                    emit_multiclass_spo_lp(&train)?
                }
            };
            model.write(&output)?;
            println!(
                "{} variables ({} binary), {} constraints written to {}",
                model.variables.len(),
                model.binary_count(),
                model.constraints.len(),
                output.display()
            );
            Ok(0)
        }
    }
}

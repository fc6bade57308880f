use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tweedie_gp::svgp::TrainConfig;
use tweedie_gp::tweedie::{log_density_and_grad, TweedieParams};
use tweedie_gp_bench::dataset::{build_records, load_dataset, read_long_csv, AdiFilter, DatasetConfig};
use tweedie_gp_bench::models::{ForecastSettings, ModelKind};
use tweedie_gp_bench::report::{
    build_report, experiment_from_forecasts, read_forecasts, write_forecasts, write_report,
};
use tweedie_gp_bench::runner::{run_experiment, RunConfig};
use tweedie_gp_bench::{BenchError, Result};

#[derive(Parser)]
#[command(name = "tgp-bench", version, about = "Probabilistic forecasts of intermittent series")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit and score the selected models on a dataset.
    Run {
        /// m5, m5-desk, onlineretail, auto, carparts or raf.
        #[arg(long)]
        dataset: String,
        /// CSV with header item_id,t,value.
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated model names.
        #[arg(long, value_delimiter = ',', default_value = "EmpQuant,WSS,ADIDA_C,NegBinGP,TweedieGP")]
        models: Vec<ModelKind>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        #[arg(long)]
        out: PathBuf,
        /// Keep only series with ADI above this value instead of any series with a zero.
        #[arg(long)]
        adi_filter: Option<f64>,
        /// Add the TweedieGP-noscale and TweedieGP-approx variants.
        #[arg(long)]
        ablation: bool,
        /// Forecast draws per series.
        #[arg(long, default_value_t = 50_000)]
        samples: usize,
        #[arg(long, default_value_t = 100)]
        max_iters: usize,
        /// Tolerated fraction of failed fits before exiting with code 3.
        #[arg(long, default_value_t = 0.05)]
        max_failure_rate: f64,
    },
    /// Score previously written forecast files.
    Evaluate {
        #[arg(long)]
        forecasts: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Named dataset for the training length; by default everything
        /// before the forecast horizon is training data.
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long)]
        adi_filter: Option<f64>,
    },
    /// Evaluate the Tweedie log-density and its gradient.
    Density {
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        phi: f64,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        y: f64,
    },
}

fn filter(adi: Option<f64>) -> Result<AdiFilter> {
    match adi {
        None => Ok(AdiFilter::AnyZero),
        Some(v) if v.is_finite() && v >= 1.0 => Ok(AdiFilter::Above(v)),
        Some(v) => Err(BenchError::Config(format!("ADI threshold must be at least 1, got {v}"))),
    }
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Run {
            dataset,
            data,
            mut models,
            seed,
            parallelism,
            out,
            adi_filter,
            ablation,
            samples,
            max_iters,
            max_failure_rate,
        } => {
            let cfg = DatasetConfig::named(&dataset)?;
            if ablation {
                for m in ModelKind::ablation_set() {
                    if !models.contains(&m) {
                        models.push(m);
                    }
                }
            }
            if samples == 0 || max_iters == 0 {
                return Err(BenchError::Config("samples and max-iters must be positive".into()));
            }
            let records = load_dataset(&data, &cfg, filter(adi_filter)?)?;
            log::info!("{}: {} series, T={}, h={}", cfg.name, records.len(), cfg.t_train, cfg.horizon);
            let run_cfg = RunConfig {
                dataset: cfg.name.clone(),
                models,
                settings: ForecastSettings {
                    train: TrainConfig { max_iters, ..Default::default() },
                    n_samples: samples,
                },
                master_seed: seed,
                parallelism,
                failure_threshold: max_failure_rate,
            };
            let exp = run_experiment(&records, &run_cfg)?;
            write_forecasts(&exp, &out.join("forecasts"))?;
            let report = build_report(&exp, 0.05)?;
            write_report(&report, &out)?;
            print!("{}", report.pretty_table());
            for v in report.coverage_violations() {
                log::error!(
                    "{} coverage {} at level {} is below the test zero share {}",
                    v.model,
                    v.coverage,
                    v.level,
                    v.zero_fraction
                );
            }
            exp.check_failures(run_cfg.failure_threshold)
        }
        Cmd::Evaluate { forecasts, data, out, dataset, adi_filter } => {
            let fc = read_forecasts(&forecasts)?;
            let horizon = fc
                .values()
                .flat_map(|m| m.values())
                .map(|f| f.quantiles.horizon())
                .next()
                .ok_or_else(|| BenchError::Data("forecast files are empty".into()))?;
            let file = std::fs::File::open(&data)
                .map_err(|e| BenchError::Data(format!("cannot open {}: {e}", data.display())))?;
            let raw = read_long_csv(file, &data.display().to_string())?;
            let cfg = match &dataset {
                Some(name) => DatasetConfig::named(name)?,
                None => DatasetConfig::custom("custom", usize::MAX - horizon, horizon)?,
            };
            if cfg.horizon != horizon {
                return Err(BenchError::Config(format!(
                    "forecasts have horizon {horizon}, dataset {} has {}",
                    cfg.name, cfg.horizon
                )));
            }
            let records = build_records(raw, &cfg, filter(adi_filter)?)?;
            let exp = experiment_from_forecasts(&cfg.name, records, fc)?;
            let report = build_report(&exp, 0.05)?;
            write_report(&report, &out)?;
            print!("{}", report.pretty_table());
            Ok(())
        }
        Cmd::Density { mu, phi, rho, y } => {
            let p = TweedieParams::new(mu, phi, rho)?;
            let (ld, g) = log_density_and_grad(y, &p)?;
            println!("log_density {ld}");
            println!("d_mu {}\nd_phi {}\nd_rho {}", g.d_mu, g.d_phi, g.d_rho);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

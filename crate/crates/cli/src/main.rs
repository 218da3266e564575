//! `denshift`: data generation, training, evaluation, ablation, θ sweeps and
//! gradient checks driven by one TOML config file.
//!
//! Exit codes: 0 success, 1 validation or config error, 2 runtime or numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use denshift::experiment::{
    cmd_ablate, cmd_eval, cmd_gen_data, cmd_grad_check, cmd_sweep_theta, cmd_train, resolve_config, Overrides,
};
use denshift::data::DEFAULT_LABEL_COLUMN;
use denshift::metrics::DEFAULT_BINS;
use denshift::Variant;

const THREADS_ENV: &str = "DENSHIFT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "denshift", version, about = "Decoupled density-aware training for imbalanced tabular data")]
struct Cli {
    /// Experiment config (TOML). Without it, built-in defaults are used.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Label column of CSV inputs, or of the files written by gen-data.
    #[arg(long, global = true, value_name = "NAME")]
    label_column: Option<String>,

    /// One of base, decoupling, dah, focal, cost, full.
    #[arg(long, global = true, value_name = "NAME", value_parser = parse_variant)]
    variant: Option<Variant>,

    /// Training seed (gen-data: generator seed).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Output directory; created if missing.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Cost ratio θ in C_FN = θ·C_FP + D.
    #[arg(long, global = true, value_name = "REAL")]
    theta: Option<f64>,

    /// Number of calibration bins.
    #[arg(long, global = true, value_name = "N")]
    bins: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write train/val/test CSVs of the synthetic benchmark plus a manifest.
    GenData,
    /// Train one variant; write checkpoint, history, report, predictions and calibration.
    Train,
    /// Score a CSV with a checkpoint.
    Eval {
        /// checkpoint.json written by `train`.
        checkpoint: PathBuf,
        /// CSV with the checkpoint's feature columns and a label column.
        data: PathBuf,
    },
    /// Train every variant over the ablation seeds.
    Ablate,
    /// Train the configured cost variant over the θ grid.
    SweepTheta,
    /// Check analytic gradients against finite differences at initialization.
    GradCheck,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: denshift::Error| e.to_string())
}

/// Worker count: `DENSHIFT_THREADS` if set, else the available parallelism.
fn threads() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .ok()
                .filter(|n| *n > 0)
                .ok_or_else(|| denshift::Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
            Ok(n)
        }
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn overrides(cli: &Cli) -> Overrides {
    Overrides {
        label_column: cli.label_column.clone(),
        variant: cli.variant,
        seed: cli.seed,
        out_dir: cli.out.clone(),
        theta: cli.theta,
        bins: cli.bins,
    }
}

fn run(cli: &Cli) -> Result<bool> {
    let ov = overrides(cli);
    let mut cfg = match &cli.command {
        Command::Eval { .. } if cli.config.is_none() => None,
        Command::GenData => {
            let mut train_seed_free = ov.clone();
            train_seed_free.seed = None;
            let mut cfg = resolve_config(cli.config.as_deref(), &train_seed_free)?;
            if let (Some(seed), Some(s)) = (cli.seed, cfg.data.synthetic.as_mut()) {
                s.seed = seed;
            }
            Some(cfg)
        }
        _ => Some(resolve_config(cli.config.as_deref(), &ov)?),
    };

    match &cli.command {
        Command::GenData => {
            let cfg = cfg.take().expect("resolved");
            let label = cli.label_column.as_deref().unwrap_or(DEFAULT_LABEL_COLUMN);
            let out = cmd_gen_data(&cfg, label)?;
            println!("wrote {}", out.train.display());
            println!("wrote {}", out.val.display());
            println!("wrote {}", out.test.display());
            println!("wrote {}", out.manifest.display());
        }
        Command::Train => {
            let cfg = cfg.take().expect("resolved");
            let r = cmd_train(&cfg)?;
            println!(
                "{} (best epoch {} of {}): test auc_roc={:.4} auc_prc={:.4} brier={:.4} bss={:.4}",
                r.variant, r.best_epoch, r.epochs_run, r.test.auc_roc, r.test.auc_prc, r.test.brier, r.test.bss
            );
            if let Some(t) = &r.temperature_scaling {
                println!("temperature {:.4}: test bss={:.4}", t.temperature, t.test.bss);
            }
            println!("outputs in {}", cfg.out_dir.display());
        }
        Command::Eval { checkpoint, data } => {
            let bins = cli.bins.or(cfg.as_ref().map(|c| c.metrics.n_bins)).unwrap_or(DEFAULT_BINS);
            let out_dir = cli
                .out
                .clone()
                .or(cfg.as_ref().map(|c| c.out_dir.clone()))
                .unwrap_or_else(|| PathBuf::from("out"));
            let r = cmd_eval(checkpoint, data, cli.label_column.as_deref(), bins, &out_dir)?;
            println!(
                "{} rows: auc_roc={:.4} auc_prc={:.4} brier={:.4} bss={:.4}",
                r.n_rows, r.metrics.auc_roc, r.metrics.auc_prc, r.metrics.brier, r.metrics.bss
            );
            println!("outputs in {}", out_dir.display());
        }
        Command::Ablate => {
            let cfg = cfg.take().expect("resolved");
            let out = cmd_ablate(&cfg, threads()?)?;
            print!("{}", out.ablation.to_csv());
        }
        Command::SweepTheta => {
            let cfg = cfg.take().expect("resolved");
            let out = cmd_sweep_theta(&cfg, threads()?)?;
            print!("{}", denshift::training::ThetaRow::to_csv(&out.rows));
        }
        Command::GradCheck => {
            let cfg = cfg.take().expect("resolved");
            let r = cmd_grad_check(&cfg)?;
            println!(
                "{}: max relative error {:.3e} over {} parameters ({})",
                r.variant,
                r.max_rel_error,
                r.probed,
                if r.passed { "ok" } else { "FAILED" }
            );
            if !r.passed {
                eprintln!("error: gradient check exceeded tolerance {:e}", r.tolerance);
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<denshift::Error>() {
        Some(e) if e.is_user_error() => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

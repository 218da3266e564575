//! Multi-seed ablation and cost-ratio sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evaluate::evaluate_probs;
use super::fit::train;
use super::{TrainConfig, Variant};
use crate::data::Splits;
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;

/// Default grid of cost ratios `θ`.
pub const THETA_GRID: [f64; 6] = [1.0, 5.0, 10.0, 25.0, 50.0, 100.0];

/// Mean with a normal-approximation 95% half-width `1.96·sd/√n`
/// (sample standard deviation; zero for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub ci95: f64,
}

impl MeanCi {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        if values.len() < 2 {
            return Self { mean, ci95: 0.0 };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self {
            mean,
            ci95: 1.96 * var.sqrt() / n.sqrt(),
        }
    }
}

/// Test-split outcome of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub variant: Variant,
    pub seed: u64,
    pub theta: f64,
    pub test: MetricsReport,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub c_fp: Option<f64>,
    pub c_fn: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub auc_roc: MeanCi,
    pub auc_prc: MeanCi,
    pub brier: MeanCi,
    pub bss: MeanCi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub split_fingerprint: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
    pub runs: Vec<RunResult>,
}

impl AblationReport {
    pub fn row(&self, variant: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    /// Test metrics of `variant`, one per seed in seed order.
    pub fn per_seed(&self, variant: Variant) -> Vec<&MetricsReport> {
        self.runs.iter().filter(|r| r.variant == variant).map(|r| &r.test).collect()
    }

    /// CSV: one row per variant with mean and CI of each metric.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "variant,auc_roc,auc_roc_ci95,auc_prc,auc_prc_ci95,brier,brier_ci95,bss,bss_ci95\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.variant,
                r.auc_roc.mean,
                r.auc_roc.ci95,
                r.auc_prc.mean,
                r.auc_prc.ci95,
                r.brier.mean,
                r.brier.ci95,
                r.bss.mean,
                r.bss.ci95
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaRow {
    pub theta: f64,
    pub auc_prc: MeanCi,
    pub bss: MeanCi,
    pub c_fp: MeanCi,
    pub c_fn: MeanCi,
}

impl ThetaRow {
    pub fn csv_header() -> &'static str {
        "theta,auc_prc,auc_prc_ci95,bss,bss_ci95,c_fp,c_fn\n"
    }

    pub fn to_csv(rows: &[ThetaRow]) -> String {
        let mut out = String::from(Self::csv_header());
        for r in rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.theta, r.auc_prc.mean, r.auc_prc.ci95, r.bss.mean, r.bss.ci95, r.c_fp.mean, r.c_fn.mean
            ));
        }
        out
    }
}

fn run_one(cfg: &TrainConfig, splits: &Splits) -> Result<RunResult> {
    let outcome = train(cfg, &splits.train, &splits.val)?;
    let probs = outcome.model.predict(splits.test.features(), None)?;
    let costs = outcome.model.cost.map(|c| c.current_costs());
    Ok(RunResult {
        variant: cfg.variant,
        seed: cfg.seed,
        theta: cfg.theta,
        test: evaluate_probs(&probs, splits.test.labels())?,
        best_epoch: outcome.history.best_epoch,
        epochs_run: outcome.history.epochs.len(),
        c_fp: costs.map(|c| c.0),
        c_fn: costs.map(|c| c.1),
    })
}

/// Trains every config on a pool of at most `threads` workers. Results come
/// back in input order regardless of scheduling.
fn run_all(configs: Vec<TrainConfig>, splits: &Splits, threads: usize) -> Result<Vec<RunResult>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| configs.par_iter().map(|c| run_one(c, splits)).collect())
}

fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::Config("need at least one seed".into()));
    }
    Ok(())
}

/// Trains all six variants once per seed on the same split and reports test
/// metrics as mean ± 95% CI across seeds.
pub fn run_ablation(cfg: &TrainConfig, splits: &Splits, seeds: &[u64], threads: usize) -> Result<AblationReport> {
    check_seeds(seeds)?;
    let mut variants = Variant::ALL.to_vec();
    if splits.train.n_classes() != 2 {
        variants.retain(|v| !v.uses_cost());
        log::warn!("multi-class task: skipping cost-matrix variants");
    }
    let configs: Vec<TrainConfig> = variants
        .iter()
        .flat_map(|&variant| seeds.iter().map(move |&seed| TrainConfig { variant, seed, ..cfg.clone() }))
        .collect();
    let runs = run_all(configs, splits, threads)?;

    let rows = variants
        .iter()
        .map(|&variant| {
            let reports: Vec<&MetricsReport> =
                runs.iter().filter(|r| r.variant == variant).map(|r| &r.test).collect();
            let stat = |f: fn(&MetricsReport) -> f64| MeanCi::from_values(&reports.iter().map(|r| f(r)).collect::<Vec<_>>());
            AblationRow {
                variant,
                auc_roc: stat(|r| r.auc_roc),
                auc_prc: stat(|r| r.auc_prc),
                brier: stat(|r| r.brier),
                bss: stat(|r| r.bss),
            }
        })
        .collect();
    Ok(AblationReport {
        split_fingerprint: splits.indices.fingerprint(),
        seeds: seeds.to_vec(),
        rows,
        runs,
    })
}

/// Trains `cfg.variant` for every `θ` in `grid` and every seed. Rows are
/// sorted by `θ` ascending.
pub fn sweep_theta(
    cfg: &TrainConfig,
    splits: &Splits,
    grid: &[f64],
    seeds: &[u64],
    threads: usize,
) -> Result<Vec<ThetaRow>> {
    check_seeds(seeds)?;
    if !cfg.variant.uses_cost() {
        return Err(Error::Config(format!(
            "variant '{}' has no cost matrix to sweep; use cost or full",
            cfg.variant
        )));
    }
    if grid.is_empty() {
        return Err(Error::Config("empty theta grid".into()));
    }
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let configs: Vec<TrainConfig> = grid
        .iter()
        .flat_map(|&theta| seeds.iter().map(move |&seed| TrainConfig { theta, seed, ..cfg.clone() }))
        .collect();
    for c in &configs {
        c.validate()?;
    }
    let runs = run_all(configs, splits, threads)?;
    Ok(grid
        .iter()
        .map(|&theta| {
            let rs: Vec<&RunResult> = runs.iter().filter(|r| r.theta == theta).collect();
            let stat = |f: &dyn Fn(&RunResult) -> f64| MeanCi::from_values(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            ThetaRow {
                theta,
                auc_prc: stat(&|r| r.test.auc_prc),
                bss: stat(&|r| r.test.bss),
                c_fp: stat(&|r| r.c_fp.unwrap_or(f64::NAN)),
                c_fn: stat(&|r| r.c_fn.unwrap_or(f64::NAN)),
            }
        })
        .collect())
}

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::{DataSource, ExperimentConfig};
use crate::data::{
    apply_preprocess, fit_preprocess, gen_synthetic, load_csv_with_classes, stratified_split, write_csv, Dataset,
    LabelMapping, NormStats, Splits, DEFAULT_LABEL_COLUMN,
};
use crate::error::{Error, Result};
use crate::metrics::{
    calibration_bins, nll_at_temperature, temperature_apply, temperature_fit, MetricsReport, ScoredSet,
};
use crate::nn::{forward, grad_check, init_mlp, Head, MlpShape};
use crate::sampling::{SamplerConfig, SamplerState};
use crate::training::{
    evaluate_probs, positive_scores, run_ablation, sweep_theta, train, AblationReport, StepObjective, ThetaRow,
    TrainedModel, Variant,
};

pub const REPORT_VERSION: u32 = 1;
pub const CHECKPOINT_VERSION: u32 = 1;
/// Largest accepted relative error of `grad-check`.
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-4;
const GRAD_CHECK_EPS: f64 = 1e-5;
/// Rows closer than this to a ReLU kink or a logit tie are left out of the
/// gradient check, where central differences straddle the kink.
const KINK_MARGIN: f64 = 1e-3;

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Preprocessed splits of the configured dataset.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub splits: Splits,
    pub stats: NormStats,
    pub mapping: LabelMapping,
}

/// Loads or generates the dataset, splits it and normalizes every split with
/// statistics fitted on the training split.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<Prepared> {
    let (ds, label_column) = match cfg.data.source()? {
        DataSource::Csv(c) => (
            load_csv_with_classes(&c.path, &c.label_column, c.class_order.as_deref())?,
            c.label_column.clone(),
        ),
        DataSource::Synthetic(s) => (gen_synthetic(s)?, DEFAULT_LABEL_COLUMN.to_string()),
    };
    let raw = stratified_split(&ds, cfg.split.fractions(), cfg.split.seed)?;
    let stats = fit_preprocess(&raw.train)?;
    let splits = Splits {
        train: apply_preprocess(&raw.train, &stats)?,
        val: apply_preprocess(&raw.val, &stats)?,
        test: apply_preprocess(&raw.test, &stats)?,
        indices: raw.indices,
    };
    Ok(Prepared {
        splits,
        stats,
        mapping: LabelMapping {
            label_column,
            classes: ds.class_names().to_vec(),
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenDataOutput {
    pub train: PathBuf,
    pub val: PathBuf,
    pub test: PathBuf,
    pub manifest: PathBuf,
}

/// Draws the synthetic dataset and writes its raw train/val/test splits as
/// CSV, plus `manifest.toml`: a config that regenerates the same files.
pub fn cmd_gen_data(cfg: &ExperimentConfig, label_column: &str) -> Result<GenDataOutput> {
    let synth = match cfg.data.source()? {
        DataSource::Synthetic(s) => s,
        DataSource::Csv(_) => return Err(Error::Config("gen-data needs a [data.synthetic] source".into())),
    };
    let ds = gen_synthetic(synth)?;
    let splits = stratified_split(&ds, cfg.split.fractions(), cfg.split.seed)?;
    ensure_dir(&cfg.out_dir)?;
    let out = GenDataOutput {
        train: cfg.out_dir.join("train.csv"),
        val: cfg.out_dir.join("val.csv"),
        test: cfg.out_dir.join("test.csv"),
        manifest: cfg.out_dir.join("manifest.toml"),
    };
    write_csv(&splits.train, &out.train, label_column)?;
    write_csv(&splits.val, &out.val, label_column)?;
    write_csv(&splits.test, &out.test, label_column)?;
    let manifest = format!(
        "# Regenerate these files with: denshift gen-data --config manifest.toml --label-column {label_column}\n\
         # split fingerprint: {}\n{}",
        splits.indices.fingerprint(),
        cfg.to_toml_string()?
    );
    write_text(&out.manifest, &manifest)?;
    Ok(out)
}

/// Trained model plus what is needed to apply it to raw CSV rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config_hash: String,
    pub label_mapping: LabelMapping,
    pub feature_names: Vec<String>,
    pub norm: NormStats,
    pub model: TrainedModel,
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let ck: Checkpoint = read_json(path)?;
    if ck.format_version != CHECKPOINT_VERSION {
        return Err(Error::Validation(format!(
            "{}: checkpoint format {} is not supported (expected {CHECKPOINT_VERSION})",
            path.display(),
            ck.format_version
        )));
    }
    ck.model.params.validate()?;
    if ck.feature_names.len() != ck.model.params.input_dim() || ck.norm.dim() != ck.feature_names.len() {
        return Err(Error::Validation(format!("{}: inconsistent checkpoint shapes", path.display())));
    }
    Ok(ck)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureReport {
    pub temperature: f64,
    pub val_nll_before: f64,
    pub val_nll_after: f64,
    pub test: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub format_version: u32,
    pub command: String,
    pub config_hash: String,
    pub label_mapping: LabelMapping,
    /// Class scored by the binary metrics.
    pub positive_class: Option<String>,
    pub variant: Variant,
    pub inference_head: Head,
    pub split_fingerprint: String,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub c_fp: Option<f64>,
    pub c_fn: Option<f64>,
    pub val: MetricsReport,
    pub test: MetricsReport,
    pub temperature_scaling: Option<TemperatureReport>,
}

fn positive_class(mapping: &LabelMapping) -> Option<String> {
    (mapping.classes.len() == 2).then(|| mapping.classes[1].clone())
}

/// `score,label` for binary tasks (class-1 probability and 0/1 outcome);
/// otherwise one `p<i>` column per class and the class index.
fn predictions_csv(probs: &Array2<f64>, labels: &[usize]) -> Result<String> {
    let mut out = String::new();
    if probs.ncols() == 2 {
        out.push_str("score,label\n");
        for (s, y) in positive_scores(probs)?.iter().zip(labels) {
            out.push_str(&format!("{s},{}\n", u8::from(*y == 1)));
        }
    } else {
        let header: Vec<String> = (0..probs.ncols()).map(|i| format!("p{i}")).collect();
        out.push_str(&format!("{},label\n", header.join(",")));
        for (row, y) in probs.rows().into_iter().zip(labels) {
            let cells: Vec<String> = row.iter().map(f64::to_string).collect();
            out.push_str(&format!("{},{y}\n", cells.join(",")));
        }
    }
    Ok(out)
}

/// Writes `predictions.csv` and, for binary tasks, `calibration.csv`.
fn write_prediction_files(dir: &Path, probs: &Array2<f64>, labels: &[usize], n_bins: usize) -> Result<()> {
    write_text(&dir.join("predictions.csv"), &predictions_csv(probs, labels)?)?;
    if probs.ncols() == 2 {
        let outcomes = labels.iter().map(|&y| u8::from(y == 1)).collect();
        let set = ScoredSet::new(positive_scores(probs)?, outcomes)?;
        calibration_bins(&set, n_bins)?.write_csv(dir.join("calibration.csv"))?;
    } else {
        log::info!("calibration table skipped: it needs a binary task");
    }
    Ok(())
}

/// Trains the configured variant and writes `checkpoint.json`, `history.csv`,
/// `report.json`, plus test-split `predictions.csv` and `calibration.csv`.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let prepared = prepare_data(cfg)?;
    let Splits { train: tr, val, test, indices } = &prepared.splits;
    let outcome = train(&cfg.train, tr, val)?;
    let model = &outcome.model;
    let config_hash = cfg.hash();

    ensure_dir(&cfg.out_dir)?;
    let checkpoint = Checkpoint {
        format_version: CHECKPOINT_VERSION,
        config_hash: config_hash.clone(),
        label_mapping: prepared.mapping.clone(),
        feature_names: tr.feature_names().to_vec(),
        norm: prepared.stats.clone(),
        model: model.clone(),
    };
    write_json(&cfg.out_dir.join("checkpoint.json"), &checkpoint)?;
    write_text(&cfg.out_dir.join("history.csv"), &outcome.history.to_csv())?;

    let val_logits = model.logits(val.features(), None)?;
    let test_logits = model.logits(test.features(), None)?;
    let test_probs = temperature_apply(&test_logits, 1.0)?;
    let val_metrics = evaluate_probs(&temperature_apply(&val_logits, 1.0)?, val.labels())?;
    let test_metrics = evaluate_probs(&test_probs, test.labels())?;
    write_prediction_files(&cfg.out_dir, &test_probs, test.labels(), cfg.metrics.n_bins)?;

    let temperature_scaling = if cfg.metrics.temperature_scaling {
        let t = temperature_fit(&val_logits, val.labels())?;
        Some(TemperatureReport {
            temperature: t,
            val_nll_before: nll_at_temperature(&val_logits, val.labels(), 1.0)?,
            val_nll_after: nll_at_temperature(&val_logits, val.labels(), t)?,
            test: evaluate_probs(&temperature_apply(&test_logits, t)?, test.labels())?,
        })
    } else {
        None
    };

    let costs = model.cost.map(|c| c.current_costs());
    let report = TrainReport {
        format_version: REPORT_VERSION,
        command: "train".into(),
        config_hash,
        positive_class: positive_class(&prepared.mapping),
        label_mapping: prepared.mapping.clone(),
        variant: model.variant,
        inference_head: model.inference_head(),
        split_fingerprint: indices.fingerprint(),
        n_train: tr.n_samples(),
        n_val: val.n_samples(),
        n_test: test.n_samples(),
        best_epoch: outcome.history.best_epoch,
        epochs_run: outcome.history.epochs.len(),
        c_fp: costs.map(|c| c.0),
        c_fn: costs.map(|c| c.1),
        val: val_metrics,
        test: test_metrics,
        temperature_scaling,
    };
    write_json(&cfg.out_dir.join("report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub command: String,
    pub checkpoint_config_hash: String,
    pub label_mapping: LabelMapping,
    pub positive_class: Option<String>,
    pub variant: Variant,
    pub head: Head,
    pub n_rows: usize,
    pub metrics: MetricsReport,
}

/// Puts the columns of `ds` into checkpoint order, naming any missing or
/// unexpected columns.
fn align_columns(ds: &Dataset, expected: &[String]) -> Result<Dataset> {
    let found = ds.feature_names();
    let missing: Vec<&str> = expected
        .iter()
        .filter(|n| !found.contains(n))
        .map(String::as_str)
        .collect();
    let unexpected: Vec<&str> = found
        .iter()
        .filter(|n| !expected.contains(n))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() || !unexpected.is_empty() {
        return Err(Error::Schema(format!(
            "columns do not match the checkpoint: missing [{}], unexpected [{}]",
            missing.join(", "),
            unexpected.join(", ")
        )));
    }
    let order: Vec<usize> = expected
        .iter()
        .map(|n| found.iter().position(|f| f == n).expect("checked above"))
        .collect();
    Dataset::new(
        ds.features().select(Axis(1), &order),
        ds.labels().to_vec(),
        expected.to_vec(),
        ds.class_names().to_vec(),
    )
}

/// Scores a raw CSV with a checkpoint's inference head. Writes
/// `eval_report.json`, `predictions.csv` and, for binary tasks, `calibration.csv`.
pub fn cmd_eval(
    checkpoint: impl AsRef<Path>,
    csv: impl AsRef<Path>,
    label_column: Option<&str>,
    n_bins: usize,
    out_dir: &Path,
) -> Result<EvalReport> {
    let ck = load_checkpoint(checkpoint)?;
    let label_column = label_column.unwrap_or(&ck.label_mapping.label_column);
    let raw = load_csv_with_classes(csv, label_column, Some(&ck.label_mapping.classes))?;
    let ds = apply_preprocess(&align_columns(&raw, &ck.feature_names)?, &ck.norm)?;
    let probs = ck.model.predict(ds.features(), None)?;
    let metrics = evaluate_probs(&probs, ds.labels())?;

    ensure_dir(out_dir)?;
    write_prediction_files(out_dir, &probs, ds.labels(), n_bins)?;
    let report = EvalReport {
        format_version: REPORT_VERSION,
        command: "eval".into(),
        checkpoint_config_hash: ck.config_hash.clone(),
        positive_class: positive_class(&ck.label_mapping),
        label_mapping: LabelMapping {
            label_column: label_column.to_string(),
            classes: ck.label_mapping.classes.clone(),
        },
        variant: ck.model.variant,
        head: ck.model.inference_head(),
        n_rows: ds.n_samples(),
        metrics,
    };
    write_json(&out_dir.join("eval_report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblateOutput {
    pub format_version: u32,
    pub command: String,
    pub config_hash: String,
    pub label_mapping: LabelMapping,
    pub ablation: AblationReport,
}

/// Trains every variant for each ablation seed; writes `ablation.csv` and `ablation.json`.
pub fn cmd_ablate(cfg: &ExperimentConfig, threads: usize) -> Result<AblateOutput> {
    cfg.validate()?;
    let prepared = prepare_data(cfg)?;
    let ablation = run_ablation(&cfg.train, &prepared.splits, &cfg.runs.ablation_seeds, threads)?;
    ensure_dir(&cfg.out_dir)?;
    write_text(&cfg.out_dir.join("ablation.csv"), &ablation.to_csv())?;
    let out = AblateOutput {
        format_version: REPORT_VERSION,
        command: "ablate".into(),
        config_hash: cfg.hash(),
        label_mapping: prepared.mapping,
        ablation,
    };
    write_json(&cfg.out_dir.join("ablation.json"), &out)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub format_version: u32,
    pub command: String,
    pub config_hash: String,
    pub label_mapping: LabelMapping,
    pub variant: Variant,
    pub split_fingerprint: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<ThetaRow>,
}

/// Sweeps `θ` over the configured grid; writes `theta_sweep.csv` and `theta_sweep.json`.
pub fn cmd_sweep_theta(cfg: &ExperimentConfig, threads: usize) -> Result<SweepOutput> {
    cfg.validate()?;
    let prepared = prepare_data(cfg)?;
    let rows = sweep_theta(
        &cfg.train,
        &prepared.splits,
        &cfg.runs.theta_grid,
        &cfg.runs.sweep_seeds,
        threads,
    )?;
    ensure_dir(&cfg.out_dir)?;
    write_text(&cfg.out_dir.join("theta_sweep.csv"), &ThetaRow::to_csv(&rows))?;
    let out = SweepOutput {
        format_version: REPORT_VERSION,
        command: "sweep-theta".into(),
        config_hash: cfg.hash(),
        label_mapping: prepared.mapping,
        variant: cfg.train.variant,
        split_fingerprint: prepared.splits.indices.fingerprint(),
        seeds: cfg.runs.sweep_seeds.clone(),
        rows,
    };
    write_json(&cfg.out_dir.join("theta_sweep.json"), &out)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckOutput {
    pub format_version: u32,
    pub command: String,
    pub config_hash: String,
    pub variant: Variant,
    pub n_params: usize,
    pub probed: usize,
    pub rows_regular: usize,
    pub rows_balanced: Option<usize>,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub tolerance: f64,
    pub passed: bool,
}

fn smooth_rows(model: &crate::nn::ModelParams, x: &Array2<f64>, y: &[usize]) -> Result<(Array2<f64>, Vec<usize>)> {
    let keep: Vec<usize> = forward(model, x)?
        .kink_distance()
        .iter()
        .enumerate()
        .filter(|(_, d)| **d > KINK_MARGIN)
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        return Err(Error::Numeric("every sampled row sits at a non-differentiable point".into()));
    }
    Ok((x.select(Axis(0), &keep), keep.iter().map(|&i| y[i]).collect()))
}

/// Compares the analytic gradient of one training step of the configured
/// variant, at a fresh initialization, against central differences over every
/// parameter. Writes `grad_check.json`; `passed` is false when the largest
/// relative error reaches [`GRAD_CHECK_TOLERANCE`].
pub fn cmd_grad_check(cfg: &ExperimentConfig) -> Result<GradCheckOutput> {
    cfg.validate()?;
    let prepared = prepare_data(cfg)?;
    let tr = &prepared.splits.train;
    let t = &cfg.train;
    let mut params = init_mlp(
        MlpShape {
            input_dim: tr.n_features(),
            hidden: t.hidden,
            depth: t.depth,
            n_classes: tr.n_classes(),
        },
        t.seed,
    )?;
    params.balanced_cosine_scale = t.balanced_cosine_scale;

    let mut sampler = SamplerState::new(
        SamplerConfig {
            batch_size: t.batch_size,
            seed: t.seed,
            q_regular: t.q_regular,
            q_balanced: t.q_balanced,
        },
        tr,
    )?;
    let pair = sampler.next_batch_pair(tr)?;
    let regular = smooth_rows(&params, &pair.regular.features, &pair.regular.labels)?;
    let balanced = if t.variant.is_dual_stream() {
        Some(smooth_rows(&params, &pair.balanced.features, &pair.balanced.labels)?)
    } else {
        None
    };
    let (rows_regular, rows_balanced) = (regular.1.len(), balanced.as_ref().map(|b| b.1.len()));
    let objective = StepObjective::new(t, tr.class_counts(), params, regular, balanced)?;
    let theta = objective.theta();
    let report = grad_check(|p| objective.evaluate(p), &theta, GRAD_CHECK_EPS, theta.len(), t.seed)?;

    let out = GradCheckOutput {
        format_version: REPORT_VERSION,
        command: "grad-check".into(),
        config_hash: cfg.hash(),
        variant: t.variant,
        n_params: theta.len(),
        probed: report.probed,
        rows_regular,
        rows_balanced,
        max_rel_error: report.max_rel_error,
        worst_index: report.worst_index,
        tolerance: GRAD_CHECK_TOLERANCE,
        passed: report.max_rel_error < GRAD_CHECK_TOLERANCE,
    };
    ensure_dir(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join("grad_check.json"), &out)?;
    Ok(out)
}

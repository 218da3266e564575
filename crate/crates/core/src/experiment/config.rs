use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{SynthConfig, DEFAULT_LABEL_COLUMN};
use crate::error::{Error, Result};
use crate::metrics::DEFAULT_BINS;
use crate::training::{TrainConfig, Variant, THETA_GRID};

/// A CSV file on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    #[serde(default = "default_label_column")]
    pub label_column: String,
    /// Fixed class order (class `i` gets index `i`). Without it labels are
    /// numbered in order of first appearance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_order: Option<Vec<String>>,
}

fn default_label_column() -> String {
    DEFAULT_LABEL_COLUMN.to_string()
}

/// Exactly one of the two sources must be set.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<CsvSource>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SynthConfig>,
}

pub enum DataSource<'a> {
    Csv(&'a CsvSource),
    Synthetic(&'a SynthConfig),
}

impl DataConfig {
    pub fn source(&self) -> Result<DataSource<'_>> {
        match (&self.csv, &self.synthetic) {
            (Some(c), None) => Ok(DataSource::Csv(c)),
            (None, Some(s)) => Ok(DataSource::Synthetic(s)),
            (None, None) => Err(Error::Config("no dataset source: set [data.csv] or [data.synthetic]".into())),
            (Some(_), Some(_)) => Err(Error::Config(
                "two dataset sources: set only one of [data.csv] and [data.synthetic]".into(),
            )),
        }
    }

    pub fn label_column(&self) -> &str {
        self.csv.as_ref().map_or(DEFAULT_LABEL_COLUMN, |c| c.label_column.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
            seed: 0,
        }
    }
}

impl SplitConfig {
    pub fn fractions(&self) -> (f64, f64, f64) {
        (self.train, self.val, self.test)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub n_bins: usize,
    /// Also report test metrics after fitting a temperature on the validation split.
    pub temperature_scaling: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            n_bins: DEFAULT_BINS,
            temperature_scaling: true,
        }
    }
}

/// Seeds and grids for the multi-run commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunsConfig {
    pub ablation_seeds: Vec<u64>,
    pub sweep_seeds: Vec<u64>,
    pub theta_grid: Vec<f64>,
}

impl Default for RunsConfig {
    fn default() -> Self {
        Self {
            ablation_seeds: (0..5).collect(),
            sweep_seeds: (0..3).collect(),
            theta_grid: THETA_GRID.to_vec(),
        }
    }
}

/// Everything one command needs. Loaded from TOML; every section and field
/// is optional and falls back to its default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub split: SplitConfig,
    pub train: TrainConfig,
    pub metrics: MetricsConfig,
    pub runs: RunsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            data: DataConfig {
                csv: None,
                synthetic: Some(SynthConfig::default()),
            },
            split: SplitConfig::default(),
            train: TrainConfig::default(),
            metrics: MetricsConfig::default(),
            runs: RunsConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.data.source()?;
        if let Some(s) = &self.data.synthetic {
            s.validate()?;
        }
        self.train.validate()?;
        if self.metrics.n_bins < 1 {
            return Err(Error::Config("metrics.n_bins must be at least 1".into()));
        }
        if self.runs.ablation_seeds.is_empty() || self.runs.sweep_seeds.is_empty() {
            return Err(Error::Config("seed lists must not be empty".into()));
        }
        if let Some(t) = self.runs.theta_grid.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(Error::Config(format!("theta grid values must be positive, got {t}")));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form of the config. The output
    /// directory is left out, so moving a run elsewhere keeps its hash.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = PathBuf::new();
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Command-line overrides; each set field replaces the file value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub label_column: Option<String>,
    pub variant: Option<Variant>,
    /// Training seed; `gen-data` uses it as the generator seed instead.
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub theta: Option<f64>,
    pub bins: Option<usize>,
}

impl Overrides {
    /// The label column only affects CSV sources; generated files take it
    /// directly (see [`super::cmd_gen_data`]).
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let (Some(col), Some(csv)) = (&self.label_column, cfg.data.csv.as_mut()) {
            csv.label_column = col.clone();
        }
        if let Some(v) = self.variant {
            cfg.train.variant = v;
        }
        if let Some(seed) = self.seed {
            cfg.train.seed = seed;
        }
        if let Some(dir) = &self.out_dir {
            cfg.out_dir = dir.clone();
        }
        if let Some(theta) = self.theta {
            cfg.train.theta = theta;
        }
        if let Some(bins) = self.bins {
            cfg.metrics.n_bins = bins;
        }
        Ok(())
    }
}

/// Resolves flag > file > default.
pub fn resolve_config(path: Option<&Path>, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    overrides.apply(&mut cfg)?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(ExperimentConfig::from_toml_str("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            "[train]\nvariant = \"dah\"\nepochs = 7\n[data.synthetic]\nn_minority = 50\n",
        )
        .unwrap();
        assert_eq!(cfg.train.variant, Variant::Dah);
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.train.batch_size, 64);
        assert_eq!(cfg.data.synthetic.as_ref().unwrap().n_minority, 50);
        assert_eq!(cfg.data.synthetic.as_ref().unwrap().n_majority, 900);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml_str("[train]\nepoch = 3\n").is_err());
        assert!(ExperimentConfig::from_toml_str("bogus = 1\n").is_err());
    }

    #[test]
    fn exactly_one_source() {
        let both = ExperimentConfig::from_toml_str("[data.csv]\npath = \"a.csv\"\n[data.synthetic]\n").unwrap();
        assert!(matches!(both.validate(), Err(Error::Config(_))));
        let neither = ExperimentConfig::from_toml_str("[data]\n").unwrap();
        assert!(matches!(neither.validate(), Err(Error::Config(_))));
        let csv = ExperimentConfig::from_toml_str("[data.csv]\npath = \"a.csv\"\n").unwrap();
        assert!(csv.validate().is_ok());
        assert_eq!(csv.data.label_column(), "label");
    }

    #[test]
    fn flags_beat_file() {
        let mut cfg = ExperimentConfig::from_toml_str("[train]\nseed = 3\ntheta = 10.0\n").unwrap();
        let o = Overrides {
            seed: Some(9),
            bins: Some(4),
            variant: Some(Variant::Cost),
            ..Default::default()
        };
        o.apply(&mut cfg).unwrap();
        assert_eq!(cfg.train.seed, 9);
        assert_eq!(cfg.train.theta, 10.0);
        assert_eq!(cfg.metrics.n_bins, 4);
        assert_eq!(cfg.train.variant, Variant::Cost);
        let mut csv = ExperimentConfig::from_toml_str("[data.csv]\npath = \"a.csv\"\n").unwrap();
        let label = Overrides {
            label_column: Some("y".into()),
            ..Default::default()
        };
        label.apply(&mut csv).unwrap();
        assert_eq!(csv.data.label_column(), "y");
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.train.margin_k = Some(0.7);
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            out_dir: "elsewhere".into(),
            ..a.clone()
        };
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig {
            split: SplitConfig { seed: 1, ..Default::default() },
            ..a.clone()
        };
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }
}

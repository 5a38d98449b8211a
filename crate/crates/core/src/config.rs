//! The global TOML config file. Every tunable of the pipeline lives here;
//! unknown keys are fatal so typos cannot silently fall back to defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataio::ClassSubset;
use crate::dsp::{AugmentPolicy, MelConfig};
use crate::error::{Error, Result};
use crate::eval::EvalSpec;
use crate::i2cr::{LossConfig, RampSchedule};
use crate::model::EncoderConfig;
use crate::train::TrainConfig;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Root of the keyword corpus (one subdirectory per class).
    pub data_dir: Option<PathBuf>,
    /// Pre-built manifest (JSON-lines); paths are relative to `data_dir`.
    pub manifest: Option<PathBuf>,
    /// Official split list files (relative clip paths, one per line).
    pub val_list: Option<PathBuf>,
    pub test_list: Option<PathBuf>,
    /// Noise bank roots for training and evaluation partitions.
    pub noise_dir: Option<PathBuf>,
    pub noise_eval_dir: Option<PathBuf>,
    /// `[["pattern", "category"], ...]`, first match wins.
    pub category_map: Vec<(String, String)>,
    /// "10", "35" or "custom".
    pub subset: String,
    /// Class names when `subset = "custom"`.
    pub subset_members: Vec<String>,
}

impl DataConfig {
    pub fn subset(&self) -> Result<ClassSubset> {
        match self.subset.as_str() {
            "" | "10" => Ok(ClassSubset::ten_commands()),
            "35" => Ok(ClassSubset::all_words()),
            "custom" => {
                let subset = ClassSubset {
                    name: "custom".into(),
                    members: self.subset_members.clone(),
                };
                subset.validate()?;
                Ok(subset)
            }
            other => Err(Error::Config(format!(
                "subset must be 10, 35 or custom, got {other:?}"
            ))),
        }
    }
}

/// Model section: encoder hyperparameters plus the projection width.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub arch: String,
    pub width: usize,
    pub depth: usize,
    pub latent_dim: usize,
    pub proj_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let enc = EncoderConfig::default();
        Self {
            arch: "conv_residual".into(),
            width: enc.width,
            depth: enc.depth,
            latent_dim: enc.latent_dim,
            proj_dim: 128,
        }
    }
}

impl ModelConfig {
    pub fn encoder(&self) -> Result<EncoderConfig> {
        let cfg = EncoderConfig {
            arch: self.arch.parse()?,
            width: self.width,
            depth: self.depth,
            latent_dim: self.latent_dim,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub data: DataConfig,
    pub mel: MelConfig,
    pub augment: AugmentPolicy,
    pub loss: LossConfig,
    /// `total_epochs = 0` means "match train.epochs".
    pub ramp: RampSchedule,
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub eval: EvalSpec,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            mel: MelConfig::default(),
            augment: AugmentPolicy::default(),
            loss: LossConfig::default(),
            ramp: RampSchedule {
                max_alpha: 0.5,
                total_epochs: 0,
            },
            train: TrainConfig::default(),
            model: ModelConfig::default(),
            eval: EvalSpec::default(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Config = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.mel.validate(crate::dsp::SAMPLE_RATE)?;
        self.augment.validate()?;
        self.loss.validate()?;
        self.train.validate()?;
        self.model.encoder()?;
        self.eval.validate()?;
        Ok(())
    }

    /// The ramp with `total_epochs` resolved against the training length.
    pub fn ramp_schedule(&self) -> RampSchedule {
        RampSchedule {
            max_alpha: self.ramp.max_alpha,
            total_epochs: if self.ramp.total_epochs == 0 {
                self.train.epochs
            } else {
                self.ramp.total_epochs
            },
        }
    }
}

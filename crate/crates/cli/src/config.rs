use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use boostlab::cohort::{Experiment, TrainConfig};
use boostlab::data::LatentSpec;
use boostlab::encoders::EncoderConfig;
use boostlab::eval::MdMode;
use boostlab::losses::{LossSettings, MarginConfig, SoftMarginConfig};

use crate::error::{CliError, CliResult};

fn default_out() -> PathBuf {
    PathBuf::from("runs/default")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default)]
    pub md: MdMode,
}

/// The single JSON document every command reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    pub data: LatentSpec,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub margin: MarginConfig,
    #[serde(default)]
    pub soft: SoftMarginConfig,
    #[serde(default)]
    pub eval: EvalSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.data.validate()?;
        self.encoder.validate()?;
        self.train.validate()?;
        self.margin.validate()?;
        self.soft.validate()?;
        if self.encoder.image_dim != self.data.image_dim {
            return Err(CliError::Config(format!(
                "encoder.image_dim ({}) must equal data.image_dim ({})",
                self.encoder.image_dim, self.data.image_dim
            )));
        }
        if self.encoder.text_dim != self.data.text_dim {
            return Err(CliError::Config(format!(
                "encoder.text_dim ({}) must equal data.text_dim ({})",
                self.encoder.text_dim, self.data.text_dim
            )));
        }
        Ok(())
    }

    pub fn experiment(&self, seed: u64) -> Experiment {
        let mut exp = Experiment::new(
            seed,
            self.encoder.clone(),
            self.train.clone(),
            LossSettings {
                margin: self.margin,
                soft: self.soft,
            },
        );
        exp.md_mode = self.eval.md;
        exp
    }

    /// Master seed followed by any sweep seeds, without repeats.
    pub fn seeds(&self) -> Vec<u64> {
        let mut out = vec![self.seed];
        for &s in &self.train.sweep_seeds {
            if !out.contains(&s) {
                out.push(s);
            }
        }
        out
    }
}

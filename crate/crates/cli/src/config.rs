//! Experiment configuration: versioned JSON, unknown keys rejected.

use std::path::{Path, PathBuf};

use rpca_core::{AdversarySpec, AlgoConfig, InlierSpec, StreamOptions};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CONFIG_VERSION: u32 = 1;

/// Largest dimension the dense oracle baseline accepts.
pub const ORACLE_MAX_DIM: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Batch,
    Streaming,
    Both,
}

impl Mode {
    pub fn batch(self) -> bool {
        matches!(self, Mode::Batch | Mode::Both)
    }

    pub fn streaming(self) -> bool {
        matches!(self, Mode::Streaming | Mode::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Power iteration on the uncorrected second moment (Oja's rule on streams).
    NaivePca,
    /// Top eigenvector of the generating covariance.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub inlier: InlierSpec,
    #[serde(default)]
    pub adversary: AdversarySpec,
    #[serde(default)]
    pub algo: AlgoConfig,
    pub mode: Mode,
    #[serde(default)]
    pub baselines: Vec<Baseline>,
    pub seeds: Vec<u64>,
    /// Sample count for batch runs.
    #[serde(default)]
    pub n: Option<usize>,
    /// Sample budget for streaming runs.
    #[serde(default)]
    pub stream_budget: Option<u64>,
    #[serde(default)]
    pub stream: StreamOptions,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let field = |name: &str, e: rpca_core::Error| CliError::Config(format!("{name}: {e}"));
        if self.version != CONFIG_VERSION {
            return Err(CliError::Config(format!(
                "version: expected {CONFIG_VERSION}, got {}",
                self.version
            )));
        }
        self.inlier.covariance.validate().map_err(|e| field("inlier", e))?;
        self.adversary.validate().map_err(|e| field("adversary", e))?;
        self.algo.validate().map_err(|e| field("algo", e))?;
        if self.seeds.is_empty() {
            return Err(CliError::Config("seeds: at least one seed is required".into()));
        }
        if self.mode.batch() && self.n.unwrap_or(0) == 0 {
            return Err(CliError::Config("n: batch mode needs a positive sample count".into()));
        }
        if self.mode.streaming() && self.stream_budget.or(self.stream.sample_budget).is_none() {
            return Err(CliError::Config(
                "stream_budget: streaming mode needs a sample budget".into(),
            ));
        }
        if self.baselines.contains(&Baseline::Oracle) && self.inlier.dim() > ORACLE_MAX_DIM {
            return Err(CliError::Config(format!(
                "baselines: oracle needs d <= {ORACLE_MAX_DIM}, got {}",
                self.inlier.dim()
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.inlier.dim()
    }

    pub fn stream_options(&self) -> StreamOptions {
        let mut opts = self.stream;
        if let Some(b) = self.stream_budget {
            opts.sample_budget = Some(b);
        }
        opts
    }
}

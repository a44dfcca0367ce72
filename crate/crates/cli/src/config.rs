use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lsidm::estimation::PipelineConfig;
use lsidm::model::ModelSpec;
use lsidm::simulation::GeneratorConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Settings read from the optional TOML file. Every field has a default and
/// command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub scenario: Option<String>,
    pub workers: Option<usize>,
    pub subjects: Option<usize>,
    pub replicates: Option<usize>,
    pub bin_width_years: Option<f64>,
    /// Also fit the naive comparator.
    pub naive: Option<bool>,
    /// Model for `fit`; by default the linear-trajectory model with as many
    /// covariates as the input files carry.
    pub model: Option<ModelSpec>,
    pub pipeline: PipelineConfig,
    pub generator: GeneratorConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Fit,
    Simulate,
    Study,
    Gof,
}

/// Effective settings of one run after merging file and flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub longitudinal: Option<PathBuf>,
    pub events: Option<PathBuf>,
    pub fit: Option<PathBuf>,
    pub out: PathBuf,
    pub scenario: String,
    pub seed: u64,
    pub workers: Option<usize>,
    pub subjects: usize,
    pub replicates: usize,
    pub replicate: u64,
    pub bin_width_years: f64,
    pub checkpoint: Option<PathBuf>,
    pub model: Option<ModelSpec>,
    pub naive: bool,
    pub pipeline: PipelineConfig,
    pub generator: GeneratorConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let need = |p: &Option<PathBuf>, what: &str| -> Result<()> {
            if p.is_none() {
                bail!("{:?} requires --{what}", self.command);
            }
            Ok(())
        };
        match self.command {
            Command::Fit => {
                need(&self.longitudinal, "longitudinal")?;
                need(&self.events, "events")?;
            }
            Command::Gof => {
                need(&self.longitudinal, "longitudinal")?;
                need(&self.events, "events")?;
                need(&self.fit, "fit")?;
            }
            Command::Simulate | Command::Study => {
                let preset = lsidm::simulation::scenario_preset(&self.scenario)?;
                self.generator.validate(&preset)?;
                if self.subjects == 0 || self.replicates == 0 {
                    bail!("subjects and replicates must be positive");
                }
            }
        }
        if !(self.bin_width_years > 0.0) {
            bail!("bin width must be positive");
        }
        self.pipeline.validate()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the settings that determine the
    /// results (output locations excluded).
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = PathBuf::new();
        canonical.checkpoint = None;
        let json = serde_json::to_string(&canonical).expect("config serializes");
        format!("{:x}", Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_sections_parse() {
        let cfg: FileConfig = toml::from_str(
            "seed = 7\nscenario = \"B\"\n[pipeline]\ns1 = 20\ns2 = 40\n[pipeline.optimizer]\nmax_iterations = 3\n[generator]\njitter_years = 0.0\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.pipeline.s1, 20);
        assert_eq!(cfg.pipeline.optimizer.max_iterations, 3);
        assert_eq!(cfg.pipeline.optimizer.tol_fn, 1e-5);
        assert_eq!(cfg.generator.jitter_years, 0.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("sead = 1\n").is_err());
    }
}

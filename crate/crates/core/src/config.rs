//! Pipeline configuration: one TOML file, strictly validated.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::JudgeConfig;
use crate::oracle::OracleConfig;
use crate::qa::GenerationConfig;
use crate::sampler::{Geography, SamplingConfig};
use crate::service::ServiceConfig;
use crate::stats::CostConfig;

const BUILTIN: &str = include_str!("../config/pipeline.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub work_dir: PathBuf,
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub sample: u64,
    pub questions: u64,
    pub split: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub seeds: Seeds,
    pub sampling: SamplingConfig,
    pub geography: Geography,
    pub oracle: OracleConfig,
    pub generation: GenerationConfig,
    pub evaluation: JudgeConfig,
    pub service: ServiceConfig,
    pub cost: CostConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// The configuration shipped with the crate.
    pub fn builtin() -> &'static PipelineConfig {
        static CFG: OnceLock<PipelineConfig> = OnceLock::new();
        CFG.get_or_init(|| PipelineConfig::from_toml(BUILTIN).expect("bundled pipeline config"))
    }

    pub fn builtin_text() -> &'static str {
        BUILTIN
    }

    pub fn validate(&self) -> Result<()> {
        self.sampling.validate()?;
        self.geography.validate()?;
        self.oracle.validate()?;
        self.generation.validate()?;
        self.evaluation.validate()?;
        self.cost.validate()?;
        if self.service.max_vessels == 0 {
            return Err(Error::Config("service.max_vessels must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form; any value change changes the hash.
    /// Hash of everything that shapes stage outputs. Paths are left out so a
    /// relocated work directory reproduces the same manifests.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("paths");
        }
        hex::encode(Sha256::digest(serde_json::to_vec(&v).expect("value serializes")))
    }

    pub fn store_dir(&self) -> PathBuf {
        self.paths.work_dir.join("store")
    }

    pub fn contexts_dir(&self) -> PathBuf {
        self.paths.work_dir.join("contexts")
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.paths.work_dir.join("dataset")
    }

    pub fn responses_path(&self) -> PathBuf {
        self.paths.work_dir.join("responses.jsonl")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.paths.work_dir.join("reports")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_parses_and_validates() {
        let c = PipelineConfig::builtin();
        assert_eq!(c.sampling.min_vessels, 200);
        assert_eq!(c.sampling.max_vessels, 500);
        assert_eq!(c.geography.ports.len(), 12);
        assert_eq!(c.evaluation.rel_tol, 0.10);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = BUILTIN.replace("[seeds]\n", "[seeds]\nbogus = 1\n");
        assert!(matches!(PipelineConfig::from_toml(&text), Err(Error::Config(_))));
        let text = format!("{BUILTIN}\n[extra]\nx = 1\n");
        assert!(PipelineConfig::from_toml(&text).is_err());
    }

    #[test]
    fn hash_tracks_thresholds() {
        let base = PipelineConfig::builtin();
        let mut changed = base.clone();
        assert_eq!(base.hash(), changed.hash());
        changed.oracle.impossible_jump_kn = 101.0;
        assert_ne!(base.hash(), changed.hash());
        let mut changed = base.clone();
        changed.evaluation.rel_tol = 0.11;
        assert_ne!(base.hash(), changed.hash());
        let mut moved = base.clone();
        moved.paths.work_dir = "/elsewhere".into();
        assert_eq!(base.hash(), moved.hash());
    }

    #[test]
    fn invalid_values_rejected() {
        let text = BUILTIN.replace("min_vessels = 200", "min_vessels = 900");
        assert!(PipelineConfig::from_toml(&text).is_err());
    }
}

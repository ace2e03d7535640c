//! Pipeline configuration: one JSON document that fully determines every
//! artifact. Unknown keys are rejected; the SHA-256 hash of the canonical
//! serialization is embedded in every output for provenance.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hlds::HldsConfig;
use crate::kernels::Regularization;
use crate::model::{OptimizerConfig, SigmaRegMode};
use crate::pknn::SomConfig;
use crate::synth::SyntheticCorpusSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionParams {
    pub min_note_len: usize,
    pub dominance_len: usize,
    pub transform_floor: f64,
}

impl Default for DecisionParams {
    fn default() -> Self {
        DecisionParams { min_note_len: 35, dominance_len: 60, transform_floor: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PknnConfig {
    pub prototypes_per_class: usize,
    pub neighbors: usize,
    pub som: SomConfig,
}

impl Default for PknnConfig {
    fn default() -> Self {
        PknnConfig { prototypes_per_class: 4, neighbors: 3, som: SomConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub hlds: HldsConfig,
    pub optimizer: OptimizerConfig,
    pub decision: DecisionParams,
    pub pknn: PknnConfig,
    pub synth: SyntheticCorpusSpec,
    /// Training features are rescaled so their RMS norm hits this target;
    /// the scale is recorded in the model and applied at scoring time.
    pub feature_rms_target: f64,
    /// Windows dropped from the start of each training note (filter settle
    /// time); windows straddling a note boundary are dropped as well.
    pub settle_windows: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            hlds: HldsConfig::default(),
            // the nugget keeps smooth feature trajectories factorizable; the
            // constant offset cannot reach the conditioning target there
            optimizer: OptimizerConfig {
                regularization: Regularization::Nugget,
                sigma_reg: SigmaRegMode::Select { cond_threshold: 1e8 },
                ..OptimizerConfig::default()
            },
            decision: DecisionParams::default(),
            pknn: PknnConfig::default(),
            synth: SyntheticCorpusSpec::default(),
            feature_rms_target: 2.0,
            settle_windows: 12,
            seed: 1,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.hlds.validate()?;
        self.synth.validate()?;
        if !(self.feature_rms_target > 0.0) {
            return Err(Error::Config("feature_rms_target must be positive".into()));
        }
        if self.decision.min_note_len < 1 || self.decision.dominance_len < self.decision.min_note_len
        {
            return Err(Error::Config("decision lengths must satisfy 1 <= min <= dominance".into()));
        }
        if self.pknn.prototypes_per_class == 0 || self.pknn.neighbors == 0 {
            return Err(Error::Config("pknn counts must be positive".into()));
        }
        Ok(())
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the canonical (compact, declaration-ordered) serialization.
    pub fn config_hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        let json = cfg.to_json_pretty().unwrap();
        let back = PipelineConfig::from_json_str(&json).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.config_hash(), back.config_hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let cfg = PipelineConfig::default();
        let mut json: serde_json::Value =
            serde_json::from_str(&cfg.to_json_pretty().unwrap()).unwrap();
        json["no_such_key"] = serde_json::json!(1);
        assert!(PipelineConfig::from_json_str(&json.to_string()).is_err());
    }

    #[test]
    fn hash_changes_with_content() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.seed = 999;
        assert_ne!(a.config_hash(), b.config_hash());
    }
}

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PolicyParams, ValueParams};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned snapshot of trained weights plus the configuration they assume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Checkpoint<T: Scalar> {
    pub version: u32,
    pub iteration: usize,
    pub encoder_seed: u64,
    pub encoder_dim: usize,
    pub config_hash: String,
    pub config: RunConfig<T>,
    pub policy: PolicyParams<T>,
    pub value: ValueParams<T>,
}

/// SHA-256 of the canonical `key=value` rendering of a config.
pub fn config_hash<T: Scalar>(cfg: &RunConfig<T>) -> String {
    hex::encode(Sha256::digest(cfg.to_kv_string().as_bytes()))
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(iteration: usize, config: RunConfig<T>, policy: PolicyParams<T>, value: ValueParams<T>) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            iteration,
            encoder_seed: config.encoder.encoder_seed,
            encoder_dim: config.encoder.encoder_dim,
            config_hash: config_hash(&config),
            config,
            policy,
            value,
        }
    }

    /// Rejects version, hash or encoder mismatches.
    pub fn verify(&self) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        if self.config_hash != config_hash(&self.config) {
            return Err(Error::Checkpoint("config hash does not match embedded config".into()));
        }
        if self.encoder_seed != self.config.encoder.encoder_seed
            || self.encoder_dim != self.config.encoder.encoder_dim
        {
            return Err(Error::Checkpoint("encoder seed/dim do not match config".into()));
        }
        if self.policy.obs_dim() != self.encoder_dim || self.value.net.input_dim() != self.encoder_dim {
            return Err(Error::Checkpoint("network input size does not match encoder".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Self = serde_json::from_str(text)?;
        ck.verify()?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

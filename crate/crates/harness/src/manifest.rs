use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use uavnav_core::config::TrainAssistance;
use uavnav_core::labels::Assistance;
use uavnav_core::neural::config_hash;
use uavnav_core::RunConfig;

use crate::run::count_by_difficulty;
use crate::suite::{Suite, SEED_STRIDE};

/// A run config together with where each value came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigRecord {
    /// Effective configuration, defaults included.
    pub config: RunConfig,
    pub source: Option<String>,
    /// Keys set explicitly (config file or flags).
    pub explicit: Vec<String>,
    /// Keys left at their defaults.
    pub defaulted: Vec<String>,
    pub hash: String,
}

impl ConfigRecord {
    pub fn new(config: RunConfig, source: Option<String>, explicit: Vec<String>) -> Self {
        let mut r = Self {
            config,
            source,
            explicit,
            defaulted: Vec::new(),
            hash: String::new(),
        };
        r.refresh();
        r
    }

    /// Recomputes the derived fields after `config` or `explicit` changed.
    pub fn refresh(&mut self) {
        self.explicit.sort();
        self.explicit.dedup();
        self.defaulted = self
            .config
            .to_pairs()
            .into_iter()
            .map(|(k, _)| k.to_string())
            .filter(|k| !self.explicit.contains(k))
            .collect();
        self.hash = config_hash(&self.config);
    }

    /// Sets a key as if it had been in the config file.
    pub fn set(&mut self, key: &str, value: &str) -> uavnav_core::Result<()> {
        self.config.set(key, value)?;
        self.config.validate()?;
        self.explicit.push(key.to_string());
        self.refresh();
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub easy: usize,
    pub hard: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub kind: String,
    pub master_seed: u64,
    pub fraction: f64,
    pub suite: String,
    pub suite_seed_range: [u64; 2],
    pub suite_counts: Counts,
    pub train_counts: Counts,
    /// Scenario ids in training order.
    pub train_scenarios: Vec<String>,
    pub heldout_scenarios: Vec<String>,
    pub train_assistance: TrainAssistance,
    pub eval_assistance: Vec<Assistance>,
    pub config: ConfigRecord,
    /// Files written by the run, relative to its output directory.
    pub artifacts: Vec<String>,
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn new(
        kind: &str,
        suite: &Suite,
        suite_path: &Path,
        fraction: f64,
        chosen: &[usize],
        heldout: &[usize],
        config: &ConfigRecord,
    ) -> Self {
        let (te, th) = count_by_difficulty(suite, chosen);
        let [lo, hi] = suite.index.seed_range;
        Self {
            kind: kind.into(),
            master_seed: config.config.episode.seed,
            fraction,
            suite: suite_path.display().to_string(),
            suite_seed_range: suite.index.seed_range,
            suite_counts: Counts {
                easy: suite.index.easy,
                hard: suite.index.hard,
            },
            train_counts: Counts { easy: te, hard: th },
            train_scenarios: chosen.iter().map(|&i| suite.scenarios[i].id.clone()).collect(),
            heldout_scenarios: heldout.iter().map(|&i| suite.scenarios[i].id.clone()).collect(),
            train_assistance: config.config.train.train_assistance,
            eval_assistance: Assistance::ALL.to_vec(),
            config: config.clone(),
            artifacts: vec!["config.kv".into()],
            notes: vec![
                format!(
                    "unseen scenarios are approximated by disjoint generator seed ranges: this suite uses seeds [{lo}, {hi}); a suite generated with --seed s uses [s*{SEED_STRIDE}, s*{SEED_STRIDE}+n)"
                ),
                "held-out scenarios share the training suite's seed range and world settings".into(),
                "wall-clock time is kept in a sidecar file, not here".into(),
            ],
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

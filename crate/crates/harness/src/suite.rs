//! Frozen scenario suites on disk: one JSON file per scenario plus `index.json`.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use uavnav_core::config::WorldConfig;
use uavnav_core::labels::Difficulty;
use uavnav_core::simworld::generate_scenario;
use uavnav_core::{Real, Scenario};

pub const INDEX_FILE: &str = "index.json";
/// Scenario seeds of a suite are `master_seed * SEED_STRIDE + i`.
pub const SEED_STRIDE: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub index: usize,
    pub id: String,
    pub file: String,
    pub seed: u64,
    pub difficulty: Difficulty,
    pub oracle_length: f64,
    pub initial_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteIndex {
    pub master_seed: u64,
    pub easy: usize,
    pub hard: usize,
    /// Half-open range of generator seeds used by this suite.
    pub seed_range: [u64; 2],
    pub world: WorldConfig<Real>,
    pub scenarios: Vec<SuiteEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suite {
    pub index: SuiteIndex,
    pub scenarios: Vec<Scenario>,
}

impl Suite {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }
}

/// Easy scenarios first, then hard ones.
pub fn generate_suite(master_seed: u64, easy: usize, hard: usize, world: &WorldConfig<Real>) -> Result<Suite> {
    let n = easy + hard;
    let base = master_seed.wrapping_mul(SEED_STRIDE);
    let mut scenarios = Vec::with_capacity(n);
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let difficulty = if i < easy { Difficulty::Easy } else { Difficulty::Hard };
        let seed = base.wrapping_add(i as u64);
        let sc = generate_scenario(seed, difficulty, world)
            .with_context(|| format!("generating scenario {i} (seed {seed})"))?;
        entries.push(SuiteEntry {
            index: i,
            file: format!("scenario_{i:04}.json"),
            id: sc.id.clone(),
            seed,
            difficulty,
            oracle_length: sc.oracle_length(),
            initial_distance: sc.initial_distance(),
        });
        scenarios.push(sc);
    }
    Ok(Suite {
        index: SuiteIndex {
            master_seed,
            easy,
            hard,
            seed_range: [base, base.wrapping_add(n as u64)],
            world: *world,
            scenarios: entries,
        },
        scenarios,
    })
}

pub fn write_suite(suite: &Suite, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (e, sc) in suite.index.scenarios.iter().zip(&suite.scenarios) {
        let path = dir.join(&e.file);
        fs::write(&path, serde_json::to_string_pretty(sc)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let path = dir.join(INDEX_FILE);
    fs::write(&path, serde_json::to_string_pretty(&suite.index)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn load_suite(dir: &Path) -> Result<Suite> {
    let path = dir.join(INDEX_FILE);
    let text = fs::read_to_string(&path).with_context(|| format!("reading suite index {}", path.display()))?;
    let index: SuiteIndex = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let mut scenarios = Vec::with_capacity(index.scenarios.len());
    for e in &index.scenarios {
        let p = dir.join(&e.file);
        let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        let sc: Scenario = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
        if sc.id != e.id || sc.difficulty != e.difficulty {
            bail!("{} does not match its index entry", p.display());
        }
        scenarios.push(sc);
    }
    if scenarios.is_empty() {
        bail!("suite {} is empty", dir.display());
    }
    Ok(Suite { index, scenarios })
}

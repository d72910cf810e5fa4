//! The four harness operations as library functions.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use uavnav_core::config::{RLevel, WorldConfig};
use uavnav_core::labels::{Assistance, Difficulty};
use uavnav_core::metrics::{aggregate, LabeledResult, MetricsReport, NeMode};
use uavnav_core::neural::config_hash;
use uavnav_core::rlopt::{train_run, IterationStats, TrainObserver};
use uavnav_core::simworld::{run_episode, Controller, GaussianPilot, HoverPilot, OraclePilot};
use uavnav_core::{Checkpoint, Env, Episode, Real, RunConfig, Scenario, ValueParams};

use crate::manifest::{ConfigRecord, RunManifest};
use crate::suite::{generate_suite, write_suite, Suite};

/// Bad flags or arguments. The binary maps this to exit code 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Defaults overlaid with the keys of an optional `key=value` file.
pub fn load_config(path: Option<&Path>) -> Result<ConfigRecord> {
    match path {
        None => Ok(ConfigRecord::new(RunConfig::default(), None, Vec::new())),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            let cfg = RunConfig::from_kv_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
            let explicit = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .filter_map(|l| l.split_once('=').map(|(k, _)| k.trim().to_string()))
                .collect();
            Ok(ConfigRecord::new(cfg, Some(p.display().to_string()), explicit))
        }
    }
}

pub fn cmd_generate(seed: u64, easy: usize, hard: usize, world: &WorldConfig<Real>, out: &Path) -> Result<Suite> {
    if easy + hard == 0 {
        return Err(usage("need at least one scenario (--easy + --hard >= 1)"));
    }
    let suite = generate_suite(seed, easy, hard, world)?;
    write_suite(&suite, out)?;
    Ok(suite)
}

/// `⌈fraction · n⌉` distinct indices chosen by a seeded shuffle, in shuffle order.
pub fn select_training(n: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(usage(format!("--fraction must lie in (0, 1], got {fraction}")));
    }
    let k = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(k);
    Ok(idx)
}

struct DiskObserver {
    dir: PathBuf,
    log: BufWriter<File>,
    checkpoints: Vec<String>,
}

impl TrainObserver<Real> for DiskObserver {
    fn iteration(&mut self, stats: &IterationStats) -> uavnav_core::Result<()> {
        serde_json::to_writer(&mut self.log, stats)?;
        self.log.write_all(b"\n")?;
        Ok(())
    }

    fn checkpoint(&mut self, ckpt: &Checkpoint) -> uavnav_core::Result<()> {
        let name = format!("ckpt_{}.json", ckpt.iteration);
        ckpt.save(&self.dir.join(&name))?;
        self.checkpoints.push(name);
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub manifest: RunManifest,
    pub checkpoint: Checkpoint,
    pub final_checkpoint: PathBuf,
    pub log: Vec<IterationStats>,
    /// Suite indices not used for training.
    pub heldout: Vec<usize>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const WALL_TIME_FILE: &str = "wall_time.txt";

/// Trains on a seeded `fraction` of `suite` and writes manifest, log and
/// checkpoints under `out`. The master seed is the config's `seed`.
pub fn cmd_train(suite: &Suite, suite_path: &Path, fraction: f64, config: &ConfigRecord, out: &Path) -> Result<TrainSummary> {
    let cfg = &config.config;
    let master_seed = cfg.episode.seed;
    let chosen = select_training(suite.len(), fraction, master_seed)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let picked: BTreeSet<usize> = chosen.iter().copied().collect();
    let heldout: Vec<usize> = (0..suite.len()).filter(|i| !picked.contains(i)).collect();
    let scenarios: Vec<Scenario> = chosen.iter().map(|&i| suite.scenarios[i].clone()).collect();

    let mut manifest = RunManifest::new("train", suite, suite_path, fraction, &chosen, &heldout, config);
    manifest.artifacts.push(TRAIN_LOG_FILE.into());
    manifest.write(&out.join(MANIFEST_FILE))?;
    fs::write(out.join("config.kv"), cfg.to_kv_string())?;

    let started = Instant::now();
    let log_file = File::create(out.join(TRAIN_LOG_FILE))?;
    let mut obs = DiskObserver {
        dir: out.to_path_buf(),
        log: BufWriter::new(log_file),
        checkpoints: Vec::new(),
    };
    let result = train_run(cfg, &scenarios, master_seed, &mut obs).context("training failed")?;
    obs.log.flush()?;
    fs::write(out.join("value_fit.json"), serde_json::to_string_pretty(&result.value_report)? + "\n")?;
    // kept out of the manifest and logs so those stay byte-reproducible
    fs::write(out.join(WALL_TIME_FILE), format!("{:.3}\n", started.elapsed().as_secs_f64()))?;

    manifest.artifacts.extend(obs.checkpoints.iter().cloned());
    manifest.artifacts.push("value_fit.json".into());
    manifest.write(&out.join(MANIFEST_FILE))?;
    let last = obs.checkpoints.last().cloned().context("training produced no checkpoint")?;
    Ok(TrainSummary {
        manifest,
        checkpoint: result.checkpoint,
        final_checkpoint: out.join(last),
        log: result.log,
        heldout,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pilot {
    /// The checkpoint's policy, acting on its mean.
    Policy,
    /// Follows the oracle path.
    Oracle,
    /// Never moves.
    Hover,
}

/// What an evaluation runs with.
pub struct EvalSetup<'a> {
    pub config: &'a RunConfig,
    pub checkpoint: Option<&'a Checkpoint>,
    pub pilot: Pilot,
    pub levels: &'a [Assistance],
    pub jobs: usize,
    pub ne_mode: NeMode,
}

pub struct EvalOutput {
    pub report: MetricsReport,
    /// `(scenario position, level, episode)`, ordered by level then position.
    pub episodes: Vec<(usize, Assistance, Episode)>,
}

/// Refuses checkpoints that do not match the run config.
pub fn check_checkpoint(ckpt: &Checkpoint, cfg: &RunConfig) -> Result<()> {
    ckpt.verify().context("checkpoint failed verification")?;
    if ckpt.encoder_seed != cfg.encoder.encoder_seed || ckpt.encoder_dim != cfg.encoder.encoder_dim {
        bail!(
            "checkpoint encoder (seed {}, dim {}) does not match config (seed {}, dim {})",
            ckpt.encoder_seed,
            ckpt.encoder_dim,
            cfg.encoder.encoder_seed,
            cfg.encoder.encoder_dim
        );
    }
    let h = config_hash(cfg);
    if ckpt.config_hash != h {
        bail!("checkpoint config hash {} does not match config hash {h}", ckpt.config_hash);
    }
    Ok(())
}

/// Runs every scenario at every level. Work is spread over `jobs` threads
/// and merged by scenario position, so the result does not depend on it.
pub fn evaluate(scenarios: &[Scenario], setup: &EvalSetup<'_>) -> Result<EvalOutput> {
    let cfg = setup.config;
    let env = Env::from_config(cfg)?;
    let fallback;
    let value: &ValueParams = match setup.checkpoint {
        Some(c) => {
            check_checkpoint(c, cfg)?;
            &c.value
        }
        None if setup.pilot == Pilot::Policy => bail!("the policy pilot needs a checkpoint"),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.episode.seed);
            fallback = ValueParams::init(cfg.encoder.encoder_dim, &cfg.train.hidden_sizes, &mut rng)?;
            &fallback
        }
    };
    let gaussian = setup.checkpoint.map(|c| GaussianPilot {
        policy: &c.policy,
        greedy: true,
    });
    let controller: &(dyn Controller<Real> + Sync) = match setup.pilot {
        Pilot::Policy => gaussian.as_ref().expect("checked above"),
        Pilot::Oracle => &OraclePilot,
        Pilot::Hover => &HoverPilot,
    };
    let tasks: Vec<(Assistance, usize)> = setup
        .levels
        .iter()
        .flat_map(|&l| (0..scenarios.len()).map(move |i| (l, i)))
        .collect();
    let jobs = setup.jobs.clamp(1, tasks.len().max(1));
    let run = |k: usize| -> Result<Episode> {
        let (level, i) = tasks[k];
        let sc = &scenarios[i];
        Ok(run_episode(controller, value, sc, level, &env, sc.seed)?)
    };
    let mut done: Vec<Option<Episode>> = (0..tasks.len()).map(|_| None).collect();
    if jobs == 1 {
        for (k, slot) in done.iter_mut().enumerate() {
            *slot = Some(run(k)?);
        }
    } else {
        let chunks: Vec<Result<Vec<(usize, Episode)>>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..jobs)
                .map(|w| {
                    let run = &run;
                    let n = tasks.len();
                    s.spawn(move || (w..n).step_by(jobs).map(|k| run(k).map(|e| (k, e))).collect())
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(anyhow::anyhow!("evaluation worker panicked"))))
                .collect()
        });
        for c in chunks {
            for (k, e) in c? {
                done[k] = Some(e);
            }
        }
    }
    let mut episodes = Vec::with_capacity(tasks.len());
    let mut labeled = Vec::with_capacity(tasks.len());
    for (&(level, i), ep) in tasks.iter().zip(done) {
        let ep = ep.context("missing episode")?;
        labeled.push(LabeledResult {
            result: ep.result(),
            difficulty: scenarios[i].difficulty,
            assistance: level,
        });
        episodes.push((i, level, ep));
    }
    let report = aggregate(&labeled, cfg.episode.success_radius, setup.ne_mode)?;
    Ok(EvalOutput { report, episodes })
}

/// Directory next to a metrics file that holds its per-episode logs.
pub fn episode_dir(metrics_path: &Path) -> PathBuf {
    let stem = metrics_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "metrics".into());
    metrics_path.with_file_name(format!("{stem}_episodes"))
}

/// Writes the metrics table to `out` and one JSONL log per episode beside it.
pub fn write_eval(output: &EvalOutput, label: &str, out: &Path) -> Result<()> {
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(out, output.report.to_csv(label)).with_context(|| format!("writing {}", out.display()))?;
    let dir = episode_dir(out);
    fs::create_dir_all(&dir)?;
    for (i, level, ep) in &output.episodes {
        let f = File::create(dir.join(format!("{i:04}_{level}.jsonl")))?;
        let mut w = BufWriter::new(f);
        ep.write_jsonl(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

/// One threshold's outcome inside an ablation.
#[derive(Debug, Clone)]
pub struct AblationRun {
    pub label: String,
    pub r_level: RLevel<Real>,
    pub report: MetricsReport,
    pub train: TrainSummary,
}

pub const ABLATION_HEADER: &str = "r_level,assistance,stratum,count,ne_mode,NE,SR,OSR,SPL";

pub fn ablation_table(runs: &[AblationRun]) -> String {
    let mut out = String::from(ABLATION_HEADER);
    out.push('\n');
    for r in runs {
        for row in r.report.to_csv_rows(&r.label) {
            out.push_str(&row);
            out.push('\n');
        }
    }
    out
}

pub fn parse_r_levels(spec: &str) -> Result<Vec<(String, RLevel<Real>)>> {
    let levels: Vec<(String, RLevel<Real>)> = spec
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<RLevel<Real>>()
                .map(|r| (s.to_string(), r))
                .map_err(|e| usage(e.to_string()))
        })
        .collect::<Result<_>>()?;
    if levels.len() < 2 {
        return Err(usage("ablation needs at least two --r-levels"));
    }
    Ok(levels)
}

pub struct AblateSetup<'a> {
    pub levels: &'a [(String, RLevel<Real>)],
    pub fraction: f64,
    pub assistance: &'a [Assistance],
    pub jobs: usize,
    pub ne_mode: NeMode,
}

/// Trains one run per threshold with the same seed and scenarios, then
/// evaluates each on the scenarios left out of training (all of them when
/// the fraction is 1).
pub fn cmd_ablate(suite: &Suite, suite_path: &Path, base: &ConfigRecord, setup: &AblateSetup<'_>, out: &Path) -> Result<Vec<AblationRun>> {
    if setup.levels.len() < 2 {
        return Err(usage("ablation needs at least two --r-levels"));
    }
    fs::create_dir_all(out)?;
    let mut runs = Vec::with_capacity(setup.levels.len());
    for (label, r) in setup.levels {
        let mut record = base.clone();
        record.config.reward.r_level = *r;
        record.explicit.push("r_level".into());
        record.refresh();
        let dir = out.join(format!("r_{label}"));
        let train = cmd_train(suite, suite_path, setup.fraction, &record, &dir)?;
        let eval_idx: Vec<usize> = if train.heldout.is_empty() {
            (0..suite.len()).collect()
        } else {
            train.heldout.clone()
        };
        let scenarios: Vec<Scenario> = eval_idx.iter().map(|&i| suite.scenarios[i].clone()).collect();
        let output = evaluate(
            &scenarios,
            &EvalSetup {
                config: &record.config,
                checkpoint: Some(&train.checkpoint),
                pilot: Pilot::Policy,
                levels: setup.assistance,
                jobs: setup.jobs,
                ne_mode: setup.ne_mode,
            },
        )?;
        write_eval(&output, label, &dir.join("metrics.csv"))?;
        runs.push(AblationRun {
            label: label.clone(),
            r_level: *r,
            report: output.report,
            train,
        });
    }
    fs::write(out.join("ablation.csv"), ablation_table(&runs))?;
    Ok(runs)
}

/// Success rate of one row group, if present.
pub fn success_rate(report: &MetricsReport, level: Assistance) -> Option<f64> {
    report.get(level, uavnav_core::metrics::Stratum::Full).map(|m| m.sr)
}

/// Difficulty counts of the scenarios at `idx`.
pub fn count_by_difficulty(suite: &Suite, idx: &[usize]) -> (usize, usize) {
    idx.iter().fold((0, 0), |(e, h), &i| match suite.scenarios[i].difficulty {
        Difficulty::Easy => (e + 1, h),
        Difficulty::Hard => (e, h + 1),
    })
}

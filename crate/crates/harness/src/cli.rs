use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use uavnav_core::labels::Assistance;
use uavnav_core::metrics::NeMode;
use uavnav_core::Checkpoint;

use crate::manifest::ConfigRecord;
use crate::run::{
    cmd_ablate, cmd_generate, cmd_train, evaluate, load_config, parse_r_levels, usage, write_eval, AblateSetup,
    EvalSetup, Pilot, UsageError,
};
use crate::suite::load_suite;

/// Relative output paths are resolved against this directory when set.
pub const OUT_ROOT_ENV: &str = "UAVNAV_OUT_ROOT";

#[derive(Debug, Parser)]
#[command(name = "uavnav", version, about = "Scenario generation, training, evaluation and reward-threshold ablation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a frozen scenario suite.
    Generate(GenerateArgs),
    /// Train on a seeded fraction of a suite.
    Train(TrainArgs),
    /// Evaluate a checkpoint on every scenario of a suite.
    Eval(EvalArgs),
    /// Train and evaluate one run per reward threshold.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub easy: usize,
    #[arg(long, default_value_t = 0)]
    pub hard: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// `key=value` file; only the world keys matter here.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub suite: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    pub fraction: f64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Master seed; overrides the config's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Extra `key=value` overrides applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PilotArg {
    Policy,
    Oracle,
    Hover,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NeModeArg {
    Raw,
    Normalized,
}

impl From<NeModeArg> for NeMode {
    fn from(m: NeModeArg) -> Self {
        match m {
            NeModeArg::Raw => NeMode::Raw,
            NeModeArg::Normalized => NeMode::Normalized,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub suite: PathBuf,
    /// Required for the policy pilot.
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// `L1`, `L2`, `L3`, a comma list, or `all`.
    #[arg(long, default_value = "all")]
    pub assistance: String,
    /// Metrics CSV; per-episode logs go to `<stem>_episodes/` beside it.
    #[arg(long)]
    pub out: PathBuf,
    /// Must match the checkpoint's config when both are given.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "policy")]
    pub pilot: PilotArg,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, value_enum, default_value = "raw")]
    pub ne_mode: NeModeArg,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub suite: PathBuf,
    #[arg(long, default_value = "1.0,3.0,5.0,inf")]
    pub r_levels: String,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    pub fraction: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, default_value = "all")]
    pub assistance: String,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, value_enum, default_value = "raw")]
    pub ne_mode: NeModeArg,
}

/// Resolves a relative output path against the output root, if one is set.
pub fn resolve_out(p: &Path) -> PathBuf {
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) if p.is_relative() && !root.is_empty() => PathBuf::from(root).join(p),
        _ => p.to_path_buf(),
    }
}

pub fn parse_levels(s: &str) -> Result<Vec<Assistance>> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(Assistance::ALL.to_vec());
    }
    let mut out = Vec::new();
    for t in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let a: Assistance = t.parse().map_err(|e: uavnav_core::Error| usage(e.to_string()))?;
        if !out.contains(&a) {
            out.push(a);
        }
    }
    if out.is_empty() {
        return Err(usage("no assistance level given"));
    }
    out.sort();
    Ok(out)
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn config_with(path: Option<&Path>, seed: Option<u64>, overrides: &[String]) -> Result<ConfigRecord> {
    let mut rec = load_config(path)?;
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got `{o}`")))?;
        rec.set(k, v).map_err(|e| usage(e.to_string()))?;
    }
    if let Some(s) = seed {
        rec.set("seed", &s.to_string())?;
    }
    Ok(rec)
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => {
            let rec = load_config(a.config.as_deref())?;
            let out = resolve_out(&a.out);
            let suite = cmd_generate(a.seed, a.easy, a.hard, &rec.config.world, &out)?;
            println!("wrote {} scenarios to {}", suite.len(), out.display());
        }
        Command::Train(a) => {
            let rec = config_with(a.config.as_deref(), a.seed, &a.overrides)?;
            let suite = load_suite(&a.suite)?;
            let out = resolve_out(&a.out);
            let s = cmd_train(&suite, &a.suite, a.fraction, &rec, &out)?;
            println!(
                "trained on {} of {} scenarios; final checkpoint {}",
                s.manifest.train_scenarios.len(),
                suite.len(),
                s.final_checkpoint.display()
            );
        }
        Command::Eval(a) => {
            let levels = parse_levels(&a.assistance)?;
            let suite = load_suite(&a.suite)?;
            let ckpt = a.ckpt.as_deref().map(Checkpoint::load).transpose()?;
            let pilot = match a.pilot {
                PilotArg::Policy => Pilot::Policy,
                PilotArg::Oracle => Pilot::Oracle,
                PilotArg::Hover => Pilot::Hover,
            };
            if pilot == Pilot::Policy && ckpt.is_none() {
                return Err(usage("--ckpt is required for the policy pilot"));
            }
            let config = match (&a.config, &ckpt) {
                (Some(p), _) => load_config(Some(p))?.config,
                (None, Some(c)) => c.config.clone(),
                (None, None) => Default::default(),
            };
            let out = resolve_out(&a.out);
            let output = evaluate(
                &suite.scenarios,
                &EvalSetup {
                    config: &config,
                    checkpoint: ckpt.as_ref(),
                    pilot,
                    levels: &levels,
                    jobs: a.jobs.unwrap_or_else(default_jobs),
                    ne_mode: a.ne_mode.into(),
                },
            )?;
            let label = match pilot {
                Pilot::Policy => "policy",
                Pilot::Oracle => "oracle",
                Pilot::Hover => "hover",
            };
            write_eval(&output, label, &out)?;
            print!("{}", output.report.to_csv(label));
        }
        Command::Ablate(a) => {
            let levels = parse_r_levels(&a.r_levels)?;
            let assistance = parse_levels(&a.assistance)?;
            let rec = config_with(a.config.as_deref(), a.seed, &a.overrides)?;
            let suite = load_suite(&a.suite)?;
            let out = resolve_out(&a.out);
            let runs = cmd_ablate(
                &suite,
                &a.suite,
                &rec,
                &AblateSetup {
                    levels: &levels,
                    fraction: a.fraction,
                    assistance: &assistance,
                    jobs: a.jobs.unwrap_or_else(default_jobs),
                    ne_mode: a.ne_mode.into(),
                },
                &out,
            )?;
            print!("{}", crate::run::ablation_table(&runs));
        }
    }
    Ok(())
}

/// Parses `args` and runs; returns the process exit code
/// (0 success, 1 usage error, 2 runtime failure).
pub fn run_cli<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("usage error: {e}");
            1
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when a criterion fails that is not listed in `KNOWN_FAILING`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uavnav_core::config::{RLevel, ShapingMode};
use uavnav_core::gradcheck::{mlp_error, ppo_error, ranking_error, SHAPES};
use uavnav_core::labels::{Assistance, Difficulty};
use uavnav_core::metrics::{aggregate, EpisodeResult, LabeledResult, MetricsReport, NeMode, Stratum};
use uavnav_core::rewards::{dense_trajectory_reward, per_step_shaped_reward, step_weight, verifiable_reward, ValueSequence};
use uavnav_core::rlopt::{fit_expert_value, train_run, TrainState};
use uavnav_core::simworld::Env;
use uavnav_core::{Checkpoint, RunConfig};
use uavnav_harness::manifest::ConfigRecord;
use uavnav_harness::run::{
    cmd_ablate, cmd_generate, cmd_train, evaluate, success_rate, write_eval, AblateSetup, EvalSetup, Pilot,
};
use uavnav_harness::suite::{generate_suite, Suite};

/// Criteria that fail at desk scale; see the decisions ledger and README.
const KNOWN_FAILING: &[u32] = &[7];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn within(t: Instant, limit: Duration) -> (bool, String) {
    let e = t.elapsed();
    (e < limit, format!("{:.1}s of {}s", e.as_secs_f64(), limit.as_secs()))
}

fn gradient_fidelity() -> Verdict {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        for shape in SHAPES {
            worst = worst.max(mlp_error(shape, seed).unwrap());
        }
        worst = worst.max(ranking_error(seed).unwrap());
        worst = worst.max(ppo_error(seed).unwrap());
    }
    let (fast, time) = within(t, Duration::from_secs(60));
    verdict(worst < 1e-4 && fast, format!("max relative error {worst:.2e} over 100 seeds x 6 checks; {time}"))
}

fn telescoping() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_tel: f64 = 0.0;
    let mut worst_dec: f64 = 0.0;
    let mut worst_closed: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(2..80);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let vs = ValueSequence(v.clone());
        let lit = dense_trajectory_reward(&vs, 1.0, ShapingMode::PaperLiteral).unwrap();
        worst_tel = worst_tel.max((lit - (v[0] - v[n - 1])).abs());
        let gamma = rng.random_range(0.5..1.0);
        for mode in [ShapingMode::PaperLiteral, ShapingMode::Potential] {
            let total = dense_trajectory_reward(&vs, gamma, mode).unwrap();
            let sum: f64 = v
                .windows(2)
                .enumerate()
                .map(|(i, w)| step_weight(gamma, mode, i + 1) * per_step_shaped_reward(w[0], w[1], gamma, mode, i + 1))
                .sum();
            worst_dec = worst_dec.max((total - sum).abs());
        }
        // potential shaping telescopes to γ^n v_{n+1} − v_1
        let pot = dense_trajectory_reward(&vs, gamma, ShapingMode::Potential).unwrap();
        let closed = gamma.powi(n as i32 - 1) * v[n - 1] - v[0];
        worst_closed = worst_closed.max((pot - closed).abs());
    }
    verdict(
        worst_tel <= 1e-12 && worst_dec <= 1e-12 && worst_closed <= 1e-9,
        format!(
            "telescoping error {worst_tel:.1e}, decomposition error {worst_dec:.1e}, potential closed form {worst_closed:.1e} over 1000 sequences"
        ),
    )
}

fn verifiable_suite() -> Verdict {
    let inf = RLevel::Infinite;
    let cases: [(f64, f64); 5] = [
        (verifiable_reward(0.5, inf, 1e6), 2.0),
        (verifiable_reward(0.9, RLevel::Finite(5.0), 1e6), 5.0),
        (verifiable_reward(0.0, RLevel::Finite(5.0), 1e6), 1.0),
        (verifiable_reward(0.0, RLevel::Finite(1.0), 1e6), 1.0),
        (verifiable_reward(1.0, inf, 1e6), 1e6),
    ];
    let hand = cases.iter().all(|(a, b)| (a - b).abs() < 1e-12);
    let mut mono = true;
    let mut capped = true;
    for cap in [RLevel::Finite(1.0), RLevel::Finite(3.0), RLevel::Finite(5.0), inf] {
        let c = cap.cap(1e6);
        let mut prev = 0.0;
        for i in 0..1000 {
            let sim = -1.0 + 2.0 * i as f64 / 999.0;
            let r = verifiable_reward(sim, cap, 1e6);
            mono &= r >= prev;
            capped &= r <= c && r > 0.0;
            prev = r;
        }
    }
    verdict(hand && mono && capped, format!("hand cases {hand}, monotone {mono}, capped {capped}"))
}

/// Independent recomputation: plain loops in input order.
fn brute_force(rs: &[LabeledResult<f64>], radius: f64, mode: NeMode) -> MetricsReport {
    let mut strata = std::collections::BTreeMap::new();
    for a in Assistance::ALL {
        for (st, want) in [(Stratum::Full, None), (Stratum::Easy, Some(Difficulty::Easy)), (Stratum::Hard, Some(Difficulty::Hard))] {
            let (mut n, mut ne, mut sr, mut osr, mut spl) = (0usize, 0.0, 0.0, 0.0, 0.0);
            for r in rs {
                if r.assistance != a || want.is_some_and(|d| d != r.difficulty) {
                    continue;
                }
                let e = &r.result;
                n += 1;
                ne += match mode {
                    NeMode::Raw => e.final_distance,
                    NeMode::Normalized => e.final_distance / e.initial_distance,
                };
                if e.success {
                    sr += 1.0;
                    spl += e.oracle_path_length / e.agent_path_length.max(e.oracle_path_length);
                }
                if e.success || e.min_distance <= radius {
                    osr += 1.0;
                }
            }
            if n > 0 {
                let k = n as f64;
                strata.insert(
                    (a, st),
                    uavnav_core::metrics::StratumMetrics {
                        count: n,
                        ne: ne / k,
                        sr: 100.0 * sr / k,
                        osr: 100.0 * osr / k,
                        spl: 100.0 * spl / k,
                    },
                );
            }
        }
    }
    MetricsReport { ne_mode: mode, strata }
}

fn metrics_oracle() -> Verdict {
    // dyadic distances keep every sum exact, so equality is bitwise
    let mut hand = Vec::new();
    for i in 0..50usize {
        let success = i % 3 == 0;
        let fin = if success { (i % 8) as f64 * 2.0 } else { 20.0 + (i * 4) as f64 };
        let min = if i % 5 == 1 { 16.0 } else { fin.min(fin * 0.5 + 8.0) };
        let oracle = 64.0 + (i % 4) as f64 * 64.0;
        let agent = if i % 2 == 0 { oracle } else { oracle * 2.0 };
        hand.push(LabeledResult {
            result: EpisodeResult {
                success,
                final_distance: fin,
                min_distance: min.min(fin),
                initial_distance: 128.0 + (i % 3) as f64 * 128.0,
                agent_path_length: agent,
                oracle_path_length: oracle,
            },
            difficulty: if oracle >= 250.0 { Difficulty::Hard } else { Difficulty::Easy },
            assistance: Assistance::ALL[i % 3],
        });
    }
    let mut exact = true;
    for mode in [NeMode::Raw, NeMode::Normalized] {
        exact &= aggregate(&hand, 20.0, mode).unwrap() == brute_force(&hand, 20.0, mode);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut random = Vec::with_capacity(10_000);
    for _ in 0..10_000 {
        let fin: f64 = rng.random_range(0.0..300.0);
        let init: f64 = rng.random_range(1.0..400.0);
        let success = fin <= 20.0 && rng.random_bool(0.8);
        random.push(LabeledResult {
            result: EpisodeResult {
                success,
                final_distance: fin,
                min_distance: fin.min(init) * rng.random_range(0.0..1.0),
                initial_distance: init,
                agent_path_length: rng.random_range(0.0..800.0),
                oracle_path_length: rng.random_range(1.0..600.0),
            },
            difficulty: if rng.random_bool(0.5) { Difficulty::Easy } else { Difficulty::Hard },
            assistance: Assistance::ALL[rng.random_range(0..3)],
        });
    }
    let mut ordered = true;
    for chunk in random.chunks(1) {
        let rep = aggregate(chunk, 20.0, NeMode::Raw).unwrap();
        ordered &= rep.strata.values().all(|m| m.spl <= m.sr && m.sr <= m.osr);
    }
    let rep = aggregate(&random, 20.0, NeMode::Raw).unwrap();
    ordered &= rep.strata.values().all(|m| m.spl <= m.sr && m.sr <= m.osr);
    verdict(exact && ordered, format!("50 hand results exact {exact}; SPL <= SR <= OSR on 10000 results {ordered}"))
}

fn smoke_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.train.iterations = 10;
    cfg.train.expert_episodes = 20;
    cfg.train.value_epochs = 5;
    cfg
}

fn kl_anchoring() -> Verdict {
    let t = Instant::now();
    let base = smoke_config();
    let suite = generate_suite(55, 4, 4, &base.world).unwrap();
    let mut kls = Vec::new();
    for beta in [1e6, 0.1] {
        let mut cfg = base.clone();
        cfg.optimizer.beta = beta;
        let out = train_run(&cfg, &suite.scenarios, 5, &mut ()).unwrap();
        kls.push(out.log.last().unwrap().mean_kl);
    }
    let (fast, time) = within(t, Duration::from_secs(600));
    verdict(kls[0] < kls[1] && fast, format!("final KL beta=1e6 {:.3e} vs beta=0.1 {:.3e}; {time}", kls[0], kls[1]))
}

fn value_monotonicity() -> Verdict {
    let t = Instant::now();
    let cfg = RunConfig::default();
    let env = Env::from_config(&cfg).unwrap();
    let (_, rep) = fit_expert_value(&cfg, &env, 6).unwrap();
    let f = rep.heldout_monotone_fraction.unwrap_or(0.0);
    let (fast, time) = within(t, Duration::from_secs(900));
    verdict(
        f >= 0.9 && fast,
        format!("{} expert flights; held-out v_t < v_t+1 on {:.1}% of pairs; {time}", cfg.train.expert_episodes, 100.0 * f),
    )
}

fn l1_sr(report: &MetricsReport) -> f64 {
    success_rate(report, Assistance::L1).unwrap_or(0.0)
}

fn ablation_trend(work: &Path) -> Verdict {
    let t = Instant::now();
    let base = RunConfig::default();
    let suite_dir = work.join("ablation_suite");
    let suite = cmd_generate(7, 50, 50, &base.world, &suite_dir).unwrap();
    let levels: Vec<(String, RLevel<f64>)> = ["1.0", "3.0", "5.0", "inf"]
        .iter()
        .map(|s| (s.to_string(), s.parse().unwrap()))
        .collect();
    let mut ok = true;
    let mut lines = Vec::new();
    for seed in 0..3u64 {
        let mut rec = ConfigRecord::new(base.clone(), None, Vec::new());
        rec.set("seed", &seed.to_string()).unwrap();
        let runs = cmd_ablate(
            &suite,
            &suite_dir,
            &rec,
            &AblateSetup {
                levels: &levels,
                fraction: 0.25,
                assistance: &[Assistance::L1],
                jobs: jobs(),
                ne_mode: NeMode::Raw,
            },
            &work.join(format!("ablation_seed{seed}")),
        )
        .unwrap();
        let sr: Vec<f64> = runs.iter().map(|r| l1_sr(&r.report)).collect();
        let inf = sr[3];
        let holds = sr[2] >= inf && sr.iter().all(|&s| s >= inf);
        ok &= holds;
        lines.push(format!("seed {seed}: SR 1.0={:.1} 3.0={:.1} 5.0={:.1} inf={:.1} [{}]", sr[0], sr[1], sr[2], inf, if holds { "ok" } else { "violated" }));
    }
    let (fast, time) = within(t, Duration::from_secs(7200));
    verdict(ok && fast, format!("L1 held-out SR on a 100-scenario suite; {}; {time}", lines.join("; ")))
}

struct Trained {
    suite: Suite,
    heldout: Vec<usize>,
    config: RunConfig,
    trained: Checkpoint,
    untrained: Checkpoint,
}

fn train_easy(work: &Path) -> (Trained, Duration) {
    let t = Instant::now();
    let mut cfg = RunConfig::default();
    cfg.world.obstacle_count = 0;
    cfg.episode.seed = 8;
    let suite_dir = work.join("easy_suite");
    let suite = cmd_generate(8, 100, 0, &cfg.world, &suite_dir).unwrap();
    let rec = ConfigRecord::new(cfg.clone(), None, vec!["obstacle_count".into(), "seed".into()]);
    let run = cmd_train(&suite, &suite_dir, 0.25, &rec, &work.join("easy_run")).unwrap();
    let value = run.checkpoint.value.clone();
    let init = TrainState::new(&cfg, value.clone(), cfg.episode.seed).unwrap();
    let untrained = Checkpoint::new(0, cfg.clone(), init.policy, value);
    let out = Trained {
        suite,
        heldout: run.heldout,
        config: cfg,
        trained: run.checkpoint,
        untrained,
    };
    (out, t.elapsed())
}

fn heldout_report(tr: &Trained, ckpt: &Checkpoint, levels: &[Assistance]) -> MetricsReport {
    let scenarios: Vec<_> = tr.heldout.iter().map(|&i| tr.suite.scenarios[i].clone()).collect();
    evaluate(
        &scenarios,
        &EvalSetup {
            config: &tr.config,
            checkpoint: Some(ckpt),
            pilot: Pilot::Policy,
            levels,
            jobs: jobs(),
            ne_mode: NeMode::Raw,
        },
    )
    .unwrap()
    .report
}

fn learning_signal(tr: &Trained, train_time: Duration) -> Verdict {
    let t = Instant::now();
    let before = l1_sr(&heldout_report(tr, &tr.untrained, &[Assistance::L1]));
    let after = l1_sr(&heldout_report(tr, &tr.trained, &[Assistance::L1]));
    let total = train_time + t.elapsed();
    let fast = total < Duration::from_secs(1800);
    verdict(
        after - before >= 20.0 && fast,
        format!(
            "{} iterations; L1 SR on {} held-out easy scenarios {before:.1}% -> {after:.1}% ({:+.1} pp); {:.1}s of 1800s",
            tr.trained.iteration,
            tr.heldout.len(),
            after - before,
            total.as_secs_f64()
        ),
    )
}

fn same_files(a: &Path, b: &Path) -> Result<usize, String> {
    let mut n = 0;
    let mut names: Vec<PathBuf> = fs::read_dir(a).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    for p in names {
        let name = p.file_name().unwrap();
        if name == "wall_time.txt" {
            continue;
        }
        let q = b.join(name);
        if p.is_dir() {
            n += same_files(&p, &q)?;
        } else {
            if fs::read(&p).unwrap() != fs::read(&q).map_err(|_| format!("{} missing", q.display()))? {
                return Err(format!("{} differs", name.to_string_lossy()));
            }
            n += 1;
        }
    }
    Ok(n)
}

fn determinism(work: &Path) -> Verdict {
    let mut cfg = smoke_config();
    cfg.train.iterations = 4;
    cfg.train.checkpoint_every = 2;
    let mut results = Vec::new();
    for tag in ["a", "b"] {
        let dir = work.join(format!("det_{tag}"));
        let suite_dir = dir.join("suite");
        let suite = cmd_generate(9, 3, 3, &cfg.world, &suite_dir).unwrap();
        let rec = ConfigRecord::new(cfg.clone(), None, Vec::new());
        // the same suite path string keeps the manifests comparable
        let run = cmd_train(&suite, Path::new("suite"), 0.5, &rec, &dir.join("run")).unwrap();
        let out = evaluate(
            &suite.scenarios,
            &EvalSetup {
                config: &cfg,
                checkpoint: Some(&run.checkpoint),
                pilot: Pilot::Policy,
                levels: &Assistance::ALL,
                jobs: jobs(),
                ne_mode: NeMode::Raw,
            },
        )
        .unwrap();
        write_eval(&out, "policy", &dir.join("eval/metrics.csv")).unwrap();
        results.push(dir);
    }
    match same_files(&results[0], &results[1]) {
        Ok(n) => verdict(true, format!("{n} artifacts byte-identical across reruns (suite, manifest, log, checkpoints, metrics, episode logs)")),
        Err(e) => verdict(false, e),
    }
}

fn assistance_ordering(tr: &Trained) -> Verdict {
    let rep = heldout_report(tr, &tr.trained, &Assistance::ALL);
    let sr: Vec<f64> = Assistance::ALL.iter().map(|&a| success_rate(&rep, a).unwrap_or(0.0)).collect();
    verdict(
        sr[0] >= sr[1] && sr[1] >= sr[2],
        format!("held-out SR L1 {:.1}% L2 {:.1}% L3 {:.1}%", sr[0], sr[1], sr[2]),
    )
}

fn main() {
    let work = tempfile::tempdir().unwrap();
    let w = work.path();
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut report = |id: u32, name: &'static str, v: Verdict| {
        println!("criterion {id:>2} {name}: {} ({})", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((id, name, v));
    };
    report(1, "gradient fidelity", gradient_fidelity());
    report(2, "telescoping identity", telescoping());
    report(3, "verifiable reward", verifiable_suite());
    report(4, "metrics oracle", metrics_oracle());
    report(5, "KL anchoring", kl_anchoring());
    report(6, "value monotonicity", value_monotonicity());
    report(7, "ablation trend", ablation_trend(w));
    let (tr, train_time) = train_easy(w);
    report(8, "learning signal", learning_signal(&tr, train_time));
    report(9, "determinism", determinism(w));
    report(10, "assistance ordering", assistance_ordering(&tr));

    let unexpected: Vec<u32> = results
        .iter()
        .filter(|(id, _, v)| !v.pass && !KNOWN_FAILING.contains(id))
        .map(|r| r.0)
        .collect();
    let known: Vec<u32> = results.iter().filter(|(id, _, v)| !v.pass && KNOWN_FAILING.contains(id)).map(|r| r.0).collect();
    let passed = results.iter().filter(|r| r.2.pass).count();
    println!("acceptance: {passed}/{} criteria pass; known failures {known:?}; unexpected failures {unexpected:?}", results.len());
    if !unexpected.is_empty() {
        std::process::exit(1);
    }
}
